import logging

import numpy as np
import pytest

from crashgc.balance import Standardizer, balance_classes, smote_oversample, undersample
from crashgc.errors import LineageError, ValidationError

from conftest import make_dataset
from oracles import segment_gap


def imbalanced(counts, d=3, seed=0, binary=()):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    rng.shuffle(y)
    X = rng.standard_normal((y.size, d)) + y[:, None]
    names = [f"c{j}" for j in range(d)]
    for nm in binary:
        X[:, names.index(nm)] = rng.integers(0, 2, y.size)
    return make_dataset(X, y, names=names, binary=binary, lineage=("split:train",))


def test_undersample_counts():
    ds = imbalanced((100, 30, 10))
    out = undersample(ds, 0, 30, seed=1)
    assert out.class_counts().tolist() == [30, 30, 10]
    # other classes untouched
    for c in (1, 2):
        assert np.array_equal(out.X[out.y == c], ds.X[ds.y == c])


def test_undersample_identity_and_determinism():
    ds = imbalanced((50, 20, 5))
    same = undersample(ds, 0, 50, seed=3)
    assert same.same_data(ds)
    a, b = undersample(ds, 0, 20, seed=8), undersample(ds, 0, 20, seed=8)
    assert a.same_data(b)


def test_undersample_rejects_growth():
    ds = imbalanced((10, 5, 5))
    with pytest.raises(ValueError, match="oversample"):
        undersample(ds, 1, 6)


def test_smote_on_a_segment():
    ds = make_dataset([[0.0, 0.0], [1.0, 1.0], [5.0, -3.0]], [2, 2, 0])
    out = smote_oversample(ds, 2, 3, k=1, seed=0)
    new = out.X[out.synthetic][0]
    assert 0.0 < new[0] < 1.0 and new[0] == new[1]
    assert out.y[-1] == 2


def test_smote_identity_when_at_target():
    ds = imbalanced((20, 10, 5))
    assert smote_oversample(ds, 2, 5).same_data(ds)


def test_smote_points_lie_on_segments():
    ds = imbalanced((200, 150, 40), d=4, seed=5)
    std = Standardizer.fit(ds.X)
    out = smote_oversample(ds, 2, 1040, k=5, seed=2, standardizer=std)
    from crashgc.balance import _smote_rows

    new, origins, _ = _smote_rows(ds, 2, 1040, 5, np.random.default_rng(2), std, False)
    assert np.array_equal(new, out.X[out.synthetic])
    by_key = {int(k): ds.X[i] for i, k in enumerate(ds.order_key)}
    assert len(origins) == 1000
    for x_new, o in zip(new, origins):
        a, b = by_key[o.base_key], by_key[o.neighbor_key]
        assert o.base_key != o.neighbor_key
        assert abs(segment_gap(x_new, a, b)) <= 1e-9


def test_neighbours_come_from_standardized_space():
    # column 0 spans 1e5, column 1 spans 1; neighbours must not be decided by column 0 alone
    X = np.array([[0.0, 0.0], [1e3, 1.0], [2e3, 0.0], [3e3, 1.0], [4e3, 0.0], [1e5, 0.5]])
    ds = make_dataset(X, [2] * 6)
    from crashgc.balance import _neighbors

    nn = _neighbors(Standardizer.fit(X).transform(X), 1)
    assert nn[0, 0] == 2  # z-scored: row 2 differs only slightly in column 0, not in column 1


def test_single_row_class_is_duplicated_with_warning(caplog):
    ds = make_dataset([[0.0], [1.0], [2.0], [3.0], [9.0]], [0, 0, 1, 1, 2], lineage=("split:train",))
    with caplog.at_level(logging.WARNING):
        out, report = balance_classes(ds, seed=0)
    assert out.class_counts().tolist() == [2, 2, 2]
    assert report.warnings and "single row" in report.warnings[0]
    assert np.all(out.X[(out.y == 2)] == 9.0)


def test_empty_class_errors():
    ds = make_dataset([[0.0], [1.0]], [0, 1])
    with pytest.raises(ValidationError):
        balance_classes(ds)
    with pytest.raises(ValueError):
        smote_oversample(ds, 2, 3)


def test_median_rule():
    ds = imbalanced((1000, 300, 30))
    out, report = balance_classes(ds, k=5, seed=0)
    assert report.target_count == 300
    assert out.class_counts().tolist() == [300, 300, 300]
    assert report.before == (1000, 300, 30) and report.after == (300, 300, 300)
    assert int(out.synthetic.sum()) == 270 == report.n_synthetic
    assert np.all(out.y[out.synthetic] == 2)


def test_already_balanced_is_unchanged():
    ds = imbalanced((100, 100, 100))
    out, report = balance_classes(ds)
    assert out.same_data(ds) and report.n_synthetic == 0
    assert "balance" in out.lineage


def test_output_order_originals_then_synthetic_by_class():
    ds = imbalanced((400, 100, 20))
    out, _ = balance_classes(ds, seed=3)
    syn = out.synthetic
    first = int(np.argmax(syn))
    assert not syn[:first].any() and syn[first:].all()
    assert np.all(np.diff(out.order_key) > 0)
    ds2 = imbalanced((20, 100, 30))  # two classes below the median get synthetic rows
    out2, _ = balance_classes(ds2, seed=3)
    labels = out2.y[out2.synthetic]
    assert labels.tolist() == sorted(labels.tolist())


def test_balance_is_byte_identical_for_a_seed(tmp_path):
    from crashgc.ingest import write_csv

    ds = imbalanced((500, 200, 40), binary=("c1",))
    for seed in (0, 11):
        a, _ = balance_classes(ds, seed=seed)
        b, _ = balance_classes(ds, seed=seed)
        write_csv(a, tmp_path / "a.csv")
        write_csv(b, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c, _ = balance_classes(ds, seed=1)
    assert not c.same_data(a)


def test_binary_columns_stay_in_unit_interval():
    # 12 minority rows over 4 binary patterns: k=5 neighbours must cross patterns
    ds = imbalanced((500, 200, 12), binary=("c0", "c2"))
    out, report = balance_classes(ds, seed=4)
    b = out.X[:, [0, 2]]
    assert b.min() >= 0 and b.max() <= 1
    assert report.fractional_binary_cells > 0
    rounded, report2 = balance_classes(ds, seed=4, round_binary=True)
    assert report2.fractional_binary_cells == 0
    assert set(np.unique(rounded.X[:, [0, 2]])) <= {0.0, 1.0}


def test_test_split_is_refused():
    ds = make_dataset([[0.0], [1.0], [2.0]], [0, 1, 2], lineage=("split:test",))
    with pytest.raises(LineageError):
        balance_classes(ds)


def test_report_text():
    ds = imbalanced((100, 40, 10))
    _, report = balance_classes(ds, k=3, seed=2)
    text = report.to_text()
    assert "target_count=40" in text and "k_neighbors=3" in text and "after.KA=40" in text
