"""Exception types raised across the package."""

import numpy as np


class CrashDataError(ValueError):
    """Base class for problems with crash tables and their schemas."""


class SchemaError(CrashDataError):
    pass


class ParseError(CrashDataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(CrashDataError):
    pass


class EmptyDatasetError(CrashDataError):
    pass


class InsufficientDataError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, epoch, learning_rate, loss):
        super().__init__(
            f"training diverged at epoch {epoch} (learning rate {learning_rate:g}, loss {loss!r})"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.loss = loss


class LineageError(RuntimeError):
    """A dataset reached a stage it must never reach (e.g. test rows in training)."""


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
