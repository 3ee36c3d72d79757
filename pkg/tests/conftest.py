import numpy as np
import pytest

from crashgc.ingest import CrashDataset, Feature, FeatureSchema


def make_dataset(X, y=None, names=None, binary=(), order_key=None, synthetic=None, lineage=()):
    """Wrap raw arrays as a CrashDataset (continuous columns unless listed in ``binary``)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    names = names or [f"c{j}" for j in range(d)]
    schema = FeatureSchema(tuple(Feature(nm, "binary" if nm in binary else "continuous") for nm in names))
    y = np.zeros(n, np.int64) if y is None else np.asarray(y, np.int64)
    order_key = np.arange(n) if order_key is None else order_key
    return CrashDataset(schema, X, y, order_key, synthetic, tuple(lineage))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n_per_class=200, seed=0, spread=0.4, d=2):
    """Three well-separated Gaussian clusters."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 4.0]])
    if d > 2:
        centers = np.hstack([centers, np.zeros((3, d - 2))])
    X = np.vstack([c + spread * rng.standard_normal((n_per_class, d)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    perm = rng.permutation(X.shape[0])
    return X[perm], y[perm]


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the properties each test records."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props or (rep.when != "call" and outcome != "error"):
                continue
            verdict = "PASS" if outcome == "passed" else "FAIL"
            rows.append((props["criterion"], verdict, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
