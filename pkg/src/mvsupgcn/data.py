"""Multi-view datasets: CSV/JSON manifests, stratified splits, synthetic blobs."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import special_ortho_group

from .errors import ContractViolation, DataError


@dataclass
class MultiViewDataset:
    views: list
    labels: np.ndarray
    n_classes: int
    name: str = "dataset"

    def __post_init__(self):
        self.views = [np.asarray(X, dtype=np.float64) for X in self.views]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        for v, X in enumerate(self.views):
            if X.ndim != 2 or X.shape[0] != n:
                raise DataError(f"view {v} has shape {X.shape}, expected {n} rows")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        missing = set(range(self.n_classes)) - set(self.labels.tolist())
        if missing:
            raise DataError(f"classes without samples: {sorted(missing)}")

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return [X.shape[1] for X in self.views]


@dataclass
class SplitSpec:
    labeled_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    labeled_fraction: float
    index: int = 0
    labeled_per_class: list = field(default_factory=list)


def standardize(X):
    """Zero-mean, unit-variance columns; constant columns are only centred."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return (X - mu) / np.where(sd > 0, sd, 1.0)


def _read_matrix(path):
    try:
        M = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return M


def load_dataset(manifest_path, standardize_features=True):
    """Load a manifest ``{name, classes, labels, views: [{path, dim}]}``.

    Relative paths resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        meta = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    root = manifest_path.parent
    for key in ("classes", "labels", "views"):
        if key not in meta:
            raise DataError(f"manifest {manifest_path} lacks field {key!r}")
    c = int(meta["classes"])
    labels_path = root / meta["labels"]
    try:
        raw = np.loadtxt(labels_path, dtype=np.float64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read labels {labels_path}: {exc}") from exc
    if not np.all(raw == np.round(raw)):
        raise DataError(f"{labels_path}: labels must be integers")
    labels = raw.astype(np.int64)
    bad = labels[(labels < 0) | (labels >= c)]
    if bad.size:
        raise DataError(f"{labels_path}: unknown class id {int(bad[0])} (classes={c})")

    views = []
    for entry in meta["views"]:
        path = root / entry["path"]
        X = _read_matrix(path)
        if X.shape[0] != labels.shape[0]:
            raise DataError(f"{path}: {X.shape[0]} rows but {labels.shape[0]} labels")
        if "dim" in entry and int(entry["dim"]) != X.shape[1]:
            raise DataError(f"{path}: {X.shape[1]} columns but manifest says {entry['dim']}")
        views.append(standardize(X) if standardize_features else X)
    return MultiViewDataset(views, labels, c, meta.get("name", manifest_path.stem))


def save_dataset(dataset, directory):
    """Write views/labels CSVs plus ``manifest.json``; floats use ``repr`` so they round-trip."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for v, X in enumerate(dataset.views):
        name = f"view{v + 1}.csv"
        with open(directory / name, "w") as fh:
            for row in X:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        entries.append({"path": name, "dim": int(X.shape[1])})
    with open(directory / "labels.csv", "w") as fh:
        fh.writelines(f"{int(y)}\n" for y in dataset.labels)
    manifest = {"name": dataset.name, "classes": int(dataset.n_classes),
                "labels": "labels.csv", "views": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _labeled_counts(class_sizes, fraction):
    """Largest-remainder allocation of ``round(fraction * n)`` across classes, floor 1."""
    sizes = np.asarray(class_sizes)
    budget = math.floor(fraction * sizes.sum() + 0.5)
    quotas = fraction * sizes
    counts = np.floor(quotas).astype(int)
    spare = budget - counts.sum()
    if spare > 0:
        order = sorted(range(len(sizes)), key=lambda j: (-(quotas[j] - counts[j]), j))
        for j in order[:spare]:
            counts[j] += 1
    return np.maximum(counts, 1)


def make_splits(labels, labeled_fraction=0.05, n_splits=10, seed=0):
    """Stratified labeled/test partitions, deterministic per ``(seed, split index)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 < labeled_fraction < 1.0:
        raise ContractViolation(f"labeled_fraction must be in (0, 1), got {labeled_fraction}")
    if n_splits < 1:
        raise ContractViolation("n_splits must be >= 1")
    c = int(labels.max()) + 1 if labels.size else 0
    members = [np.flatnonzero(labels == j) for j in range(c)]
    sizes = [m.size for m in members]
    if 0 in sizes:
        raise ContractViolation(f"class {sizes.index(0)} has no samples")
    counts = _labeled_counts(sizes, labeled_fraction)
    for j, (cnt, size) in enumerate(zip(counts, sizes)):
        if cnt >= size:
            raise ContractViolation(
                f"class {j} has {size} samples; labeling {cnt} leaves none for testing")

    splits = []
    for s in range(n_splits):
        rng = np.random.default_rng([seed, s])
        chosen = [rng.permutation(m)[:cnt] for m, cnt in zip(members, counts)]
        labeled = np.sort(np.concatenate(chosen))
        test = np.setdiff1d(np.arange(labels.size), labeled)
        splits.append(SplitSpec(labeled, test, seed, labeled_fraction, s,
                                [int(x) for x in counts]))
    return splits


def synth_blobs(n=300, V=2, c=3, separation=10.0, noise=1.0, seed=0, dim=8,
                name="synth"):
    """Gaussian class clusters seen through ``V`` randomly rotated, noisy views.

    Class centres are scaled simplex vertices, so every pair of centres sits
    exactly ``separation`` apart before rotation. Labels are balanced.
    """
    if n < c:
        raise ContractViolation(f"need n >= c, got n={n}, c={c}")
    if V < 2:
        raise ContractViolation(f"need at least two views, got V={V}")
    if dim < c:
        raise ContractViolation(f"dim must be >= c to separate the centres, got {dim}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % c)
    centres = np.zeros((c, dim))
    centres[np.arange(c), np.arange(c)] = separation / math.sqrt(2.0)
    latent = centres[labels]
    views = []
    for _ in range(V):
        R = special_ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
        views.append(latent @ R.T + noise * rng.standard_normal((n, dim)))
    return MultiViewDataset(views, labels, c, name)
