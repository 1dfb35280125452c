import json
from pathlib import Path

import numpy as np
import pytest

from mvsupgcn.data import load_dataset, make_splits, save_dataset, synth_blobs
from mvsupgcn.errors import ContractViolation, DataError
from mvsupgcn.graphs import knn_adjacency

FIXTURES = Path(__file__).parent / "fixtures"


def test_fixture_manifest_loads():
    ds = load_dataset(FIXTURES / "tiny" / "manifest.json", standardize_features=False)
    assert ds.n == 4 and ds.n_views == 2 and ds.dims == [3, 2]
    assert ds.labels.tolist() == [0, 1, 0, 1]
    assert ds.views[0][1, 2] == 6.0


def test_standardized_columns():
    ds = load_dataset(FIXTURES / "tiny" / "manifest.json")
    for X in ds.views:
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=1e-12)


def _write(tmp_path, views, labels, classes):
    entries = []
    for v, rows in enumerate(views):
        p = tmp_path / f"v{v}.csv"
        p.write_text("".join(",".join(map(str, r)) + "\n" for r in rows))
        entries.append({"path": p.name, "dim": len(rows[0])})
    (tmp_path / "labels.csv").write_text("".join(f"{y}\n" for y in labels))
    m = tmp_path / "manifest.json"
    m.write_text(json.dumps({"name": "t", "classes": classes, "labels": "labels.csv",
                             "views": entries}))
    return m


def test_row_mismatch_names_file(tmp_path):
    m = _write(tmp_path, [[[1, 2]] * 4, [[1]] * 5], [0, 1, 0, 1], 2)
    with pytest.raises(DataError, match="v1.csv"):
        load_dataset(m)


def test_unknown_class(tmp_path):
    m = _write(tmp_path, [[[1, 2]] * 3], [0, 1, 5], 2)
    with pytest.raises(DataError, match="unknown class"):
        load_dataset(m)


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.json")


def test_round_trip_is_bit_exact(tmp_path):
    ds = synth_blobs(n=30, V=3, c=3, seed=2)
    save_dataset(ds, tmp_path / "a")
    back = load_dataset(tmp_path / "a" / "manifest.json", standardize_features=False)
    for X, Y in zip(ds.views, back.views):
        assert X.tobytes() == Y.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    save_dataset(back, tmp_path / "b")
    for name in ("view1.csv", "view2.csv", "view3.csv", "labels.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mnist_shaped_manifest_validates(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    labels = np.arange(n) % 10
    views = [rng.standard_normal((n, d)).round(4).tolist() for d in (30, 9, 9)]
    ds = load_dataset(_write(tmp_path, views, labels.tolist(), 10))
    assert ds.n_views == 3 and ds.dims == [30, 9, 9] and ds.n_classes == 10


# -- splits --------------------------------------------------------------------------

def test_split_counts_balanced():
    labels = np.repeat(np.arange(4), 50)
    splits = make_splits(labels, 0.05, 3, seed=1)
    for s in splits:
        assert len(s.labeled_indices) == 10 and len(s.test_indices) == 190
        assert not set(s.labeled_indices) & set(s.test_indices)
        assert sorted(set(s.labeled_indices) | set(s.test_indices)) == list(range(200))
        assert all(np.sum(labels[s.labeled_indices] == j) >= 1 for j in range(4))
    assert not np.array_equal(splits[0].labeled_indices, splits[1].labeled_indices)


def test_split_floor_rule_and_determinism():
    labels = np.array([0] * 100 + [1] * 3)
    a = make_splits(labels, 0.05, 2, seed=7)
    b = make_splits(labels, 0.05, 2, seed=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.labeled_indices, y.labeled_indices)
    assert np.sum(labels[a[0].labeled_indices] == 1) == 1


def test_split_errors():
    with pytest.raises(ContractViolation):
        make_splits([0, 0, 1], 0.05, 1)  # class 1 would lose its only test sample
    with pytest.raises(ContractViolation):
        make_splits([0, 2, 2, 0], 0.5, 1)  # class 1 empty
    with pytest.raises(ContractViolation):
        make_splits([0, 1] * 10, 1.0, 1)


# -- synthetic blobs ------------------------------------------------------------------

def _one_nn_loo(X, y):
    D = ((X[:, None] - X[None]) ** 2).sum(axis=2)
    np.fill_diagonal(D, np.inf)
    return np.mean(y[D.argmin(axis=1)] == y)


def test_synth_views_are_separable():
    ds = synth_blobs(n=300, V=2, c=3, separation=10, noise=1, seed=0)
    for X in ds.views:
        assert _one_nn_loo(X, ds.labels) >= 0.99


def test_synth_knn_edges_mostly_within_class():
    ds = synth_blobs(n=300, V=2, c=3, separation=10, noise=1, seed=3)
    for X in ds.views:
        A = knn_adjacency(X, 10)
        i, j = np.nonzero(np.triu(A))
        assert np.mean(ds.labels[i] == ds.labels[j]) >= 0.95


def test_synth_zero_noise_collapses_classes():
    ds = synth_blobs(n=30, V=2, c=3, noise=0.0, seed=1)
    for X in ds.views:
        for j in range(3):
            rows = X[ds.labels == j]
            np.testing.assert_allclose(rows, np.broadcast_to(rows[0], rows.shape), atol=1e-12)


def test_synth_determinism_and_validation():
    a, b = synth_blobs(n=40, seed=5), synth_blobs(n=40, seed=5)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.views, b.views))
    assert np.bincount(a.labels).tolist() == [14, 13, 13]
    with pytest.raises(ContractViolation):
        synth_blobs(n=40, V=1)
    with pytest.raises(ContractViolation):
        synth_blobs(n=2, c=3)
