"""Multi-split experiments, ablation grids and hyperparameter sweeps.

All randomness is derived from ``(base_seed, split, cell)`` so results do not
depend on worker scheduling. Reports carry the resolved configuration and
contain no timestamps, so identical inputs give byte-identical files.
"""

import copy
import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .data import load_dataset, make_splits, synth_blobs
from .errors import ContractViolation, NumericalFailure, SolverError
from .evaluation import (MetricsRecord, aggregate_runs, classification_metrics,
                         format_aggregate)
from .graphs import build_graphset
from .model import load_weights, save_weights
from .trainer import TrainConfig, extract_embeddings, fit, predict

# (use_two_graphs, use_supcon, use_selfcon, use_pseudo); row 0 is the CE-only
# baseline, the last row the full model
ABLATION_GRID = (
    (False, False, False, False),
    (True, False, False, False),
    (True, True, False, False),
    (True, False, True, False),
    (True, True, True, False),
    (True, False, False, True),
    (True, True, False, True),
    (True, False, True, True),
    (True, True, True, True),
)
ABLATION_FLAGS = ("use_two_graphs", "use_supcon", "use_selfcon", "use_pseudo")

DEFAULT_SWEEP = (
    {"train.loss.lambda1": [0.0, 0.25, 0.5, 1.0], "train.loss.lambda2": [0.0, 0.25, 0.5, 1.0]},
    {"train.k": [5, 10, 20, 40]},
    {"train.loss.tau": [0.1, 0.3, 0.5, 0.7, 1.0]},
    {"train.pseudo_ratio": [0.1, 0.2, 0.5]},
)


class ConfigError(ContractViolation):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class SynthConfig:
    n: int = 300
    V: int = 2
    c: int = 3
    separation: float = 10.0
    noise: float = 1.0
    dim: int = 8
    seed: int = 0


@dataclass
class ExperimentConfig:
    manifest: str = None
    synth: SynthConfig = None
    train: TrainConfig = field(default_factory=TrainConfig)
    n_splits: int = 10
    labeled_fraction: float = 0.05
    seed: int = 0
    jobs: int = 1
    standardize: bool = True
    save_embeddings: bool = False
    save_graphs: bool = False

    def validate(self):
        if (self.manifest is None) == (self.synth is None):
            raise ConfigError("manifest|synth", "exactly one data source must be given")
        if self.n_splits < 1:
            raise ConfigError("n_splits", "must be >= 1")
        if not 0.0 < self.labeled_fraction < 1.0:
            raise ConfigError("labeled_fraction", "must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)


def _coerce(path, current, value):
    if isinstance(current, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return bool(value)
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected {type(current).__name__}, got {value!r}") from None
    return value


def set_dotted(cfg, key, value):
    """Assign ``value`` to the dataclass field addressed by a dotted ``key``."""
    parts = key.split(".")
    obj = cfg
    for i, part in enumerate(parts):
        path = ".".join(parts[: i + 1])
        if part == "synth" and obj is cfg and cfg.synth is None:
            cfg.synth = SynthConfig()
        if not is_dataclass(obj) or part not in {f.name for f in fields(obj)}:
            raise ConfigError(path, "unknown configuration key")
        if i == len(parts) - 1:
            current = getattr(obj, part)
            if is_dataclass(current):
                raise ConfigError(path, "cannot assign to a configuration section")
            setattr(obj, part, value if current is None else _coerce(path, current, value))
        else:
            obj = getattr(obj, part)


def apply_overrides(cfg, flat):
    for key in sorted(flat):
        set_dotted(cfg, key, flat[key])
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file's dotted keys, then ``overrides`` (highest)."""
    cfg = ExperimentConfig()
    if path is not None:
        try:
            flat = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(path), f"cannot read config: {exc}") from exc
        if not isinstance(flat, dict):
            raise ConfigError(str(path), "config must be a JSON object of dotted keys")
        apply_overrides(cfg, flat)
    apply_overrides(cfg, overrides or {})
    return cfg


def load_data(cfg):
    if cfg.manifest is not None:
        return load_dataset(cfg.manifest, standardize_features=cfg.standardize)
    s = cfg.synth
    return synth_blobs(s.n, s.V, s.c, s.separation, s.noise, s.seed, s.dim)


def cell_seed(base_seed, split, cell=0):
    return int(np.random.SeedSequence([base_seed, split, cell]).generate_state(1)[0])


def _train_config_for(cfg, split_index, cell=0):
    tc = copy.deepcopy(cfg.train)
    tc.seed = cell_seed(cfg.seed, split_index, cell)
    tc.model.seed = tc.seed
    return tc


def graphs_for(dataset, split, tc):
    return build_graphset(dataset.views, split.labeled_indices,
                          dataset.labels[split.labeled_indices], dataset.n_classes,
                          k=tc.k, beta=tc.model.beta, semi_cfg=tc.semi,
                          two_graphs=tc.use_two_graphs)


def run_split(dataset, split, tc, keep_embeddings=False):
    """Build graphs, train and score one split. Returns a JSON-ready dict."""
    out = {"index": split.index, "seed": tc.seed, "n_labeled": int(split.labeled_indices.size),
           "n_test": int(split.test_indices.size)}
    try:
        gs = graphs_for(dataset, split, tc)
        weights, history = fit(dataset, split, gs, tc)
        Z = predict(weights, gs)
        pred = Z.argmax(axis=1)[split.test_indices]
        metrics = classification_metrics(pred, dataset.labels[split.test_indices],
                                         dataset.n_classes)
    except (NumericalFailure, SolverError, FloatingPointError) as exc:
        out.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return out
    out.update(status="ok", n_branches=gs.n_branches, branch_kinds=gs.kinds,
               metrics=metrics.as_dict(), diagnostics=metrics.diagnostics,
               history=history.to_jsonl())
    if keep_embeddings:
        out["embeddings"] = [H.tolist() for H in extract_embeddings(weights, gs)]
    return out


def _run_cells(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [run_split(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_star_run, tasks))


def _star_run(task):
    return run_split(*task)


def _records(results):
    return [MetricsRecord(**r["metrics"]) for r in results if r["status"] == "ok"]


def _dump_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_matrix(path, M):
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def run_experiment(cfg, out_dir=None):
    """Train and evaluate on every split; optionally write the report tree under ``out_dir``."""
    cfg.validate()
    dataset = load_data(cfg)
    splits = make_splits(dataset.labels, cfg.labeled_fraction, cfg.n_splits, cfg.seed)
    tasks = [(dataset, sp, _train_config_for(cfg, sp.index), cfg.save_embeddings)
             for sp in splits]
    results = _run_cells(tasks, cfg.jobs)
    records = _records(results)
    report = {
        "config": cfg.to_dict(),
        "dataset": {"name": dataset.name, "n": dataset.n, "views": dataset.n_views,
                    "dims": dataset.dims, "classes": dataset.n_classes},
        "splits": [{k: v for k, v in r.items() if k not in ("history", "embeddings")}
                   for r in results],
        "aggregate": aggregate_runs(records) if records else None,
        "failed_splits": [r["index"] for r in results if r["status"] != "ok"],
    }
    if out_dir is not None:
        out = Path(out_dir)
        (out / "splits").mkdir(parents=True, exist_ok=True)
        for r in results:
            if "history" in r:
                (out / "splits" / f"split_{r['index']:02d}.jsonl").write_text(r["history"])
            if "embeddings" in r:
                (out / "embeddings").mkdir(exist_ok=True)
                for w, H in enumerate(r["embeddings"]):
                    _write_matrix(out / "embeddings" / f"split_{r['index']:02d}_branch_{w + 1}.csv",
                                  np.asarray(H))
        if cfg.save_graphs:
            write_graphs(dataset, splits[0], _train_config_for(cfg, 0), out / "graphs")
        _dump_json(out / "report.json", report)
        if report["aggregate"]:
            (out / "report.txt").write_text(format_aggregate(report["aggregate"]) + "\n")
    return report


def write_graphs(dataset, split, tc, directory):
    """Dump every branch graph and the fused graph as dense CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gs = graphs_for(dataset, split, tc)
    names = []
    for w, (G, kind, v) in enumerate(zip(gs.graphs, gs.kinds, gs.views)):
        name = f"G{w + 1}_view{v + 1}_{kind}.csv"
        _write_matrix(directory / name, G)
        names.append(name)
    _write_matrix(directory / "fused.csv", gs.fused)
    return names + ["fused.csv"]


def train_single(cfg, split_index, out_dir):
    """Train one split and persist weights, history and predictions."""
    cfg.validate()
    dataset = load_data(cfg)
    split = make_splits(dataset.labels, cfg.labeled_fraction, split_index + 1, cfg.seed)[split_index]
    tc = _train_config_for(cfg, split_index)
    gs = graphs_for(dataset, split, tc)
    weights, history = fit(dataset, split, gs, tc)
    Z = predict(weights, gs)
    metrics = classification_metrics(Z.argmax(axis=1)[split.test_indices],
                                     dataset.labels[split.test_indices], dataset.n_classes)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = {"config": cfg.to_dict(), "split": split_index, "seed": tc.seed,
              "branch_kinds": gs.kinds}
    save_weights(out / "weights.bin", weights, header)
    (out / "history.jsonl").write_text(history.to_jsonl())
    _write_matrix(out / "predictions.csv", Z)
    summary = {"config": cfg.to_dict(), "split": split_index, "seed": tc.seed,
               "metrics": metrics.as_dict()}
    _dump_json(out / "train.json", summary)
    return summary


def predict_from_weights(weights_path, out_path=None):
    """Rebuild the graphs recorded in a weights header and return soft-voted predictions."""
    weights, meta = load_weights(weights_path)
    cfg = config_from_dict(meta["config"])
    dataset = load_data(cfg)
    split_index = meta["split"]
    split = make_splits(dataset.labels, cfg.labeled_fraction, split_index + 1, cfg.seed)[split_index]
    tc = _train_config_for(cfg, split_index)
    Z = predict(weights, graphs_for(dataset, split, tc))
    if out_path is not None:
        _write_matrix(out_path, Z)
    return Z


def config_from_dict(d):
    cfg = ExperimentConfig()
    flat = {}

    def walk(prefix, obj):
        for k, v in obj.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                walk(key + ".", v)
            elif v is not None:
                flat[key] = v

    walk("", d)
    return apply_overrides(cfg, flat)


def run_ablation(cfg, out_dir=None, grid=ABLATION_GRID):
    """Run each flag combination on identical splits and seeds."""
    cfg.validate()
    dataset = load_data(cfg)
    splits = make_splits(dataset.labels, cfg.labeled_fraction, cfg.n_splits, cfg.seed)
    tasks, owners = [], []
    for row, flags in enumerate(grid):
        for sp in splits:
            tc = _train_config_for(cfg, sp.index)
            for name, flag in zip(ABLATION_FLAGS, flags):
                setattr(tc, name, flag)
            tasks.append((dataset, sp, tc, False))
            owners.append(row)
    results = _run_cells(tasks, cfg.jobs)
    rows = []
    for row, flags in enumerate(grid):
        mine = [r for r, o in zip(results, owners) if o == row]
        records = _records(mine)
        rows.append({
            "flags": dict(zip(ABLATION_FLAGS, flags)),
            "split_indices": [r["index"] for r in mine],
            "seeds": [r["seed"] for r in mine],
            "n_branches": next((r["n_branches"] for r in mine if r["status"] == "ok"), None),
            "accuracy": [r["metrics"]["accuracy"] if r["status"] == "ok" else None for r in mine],
            "aggregate": aggregate_runs(records) if records else None,
        })
    report = {"config": cfg.to_dict(), "rows": rows}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "ablation.json", report)
        (out / "ablation.txt").write_text(format_ablation(rows) + "\n")
    return report


def format_ablation(rows):
    head = "2graphs supcon selfcon pseudo   acc(mean)  acc(std)"
    lines = [head, "-" * len(head)]
    mark = {True: "   x   ", False: "   .   "}
    for r in rows:
        f = r["flags"]
        agg = r["aggregate"]
        acc = f"{agg['accuracy']['mean'] * 100:9.2f}  {agg['accuracy']['std'] * 100:8.2f}" if agg else "   failed"
        lines.append("".join(mark[f[k]] for k in ABLATION_FLAGS) + "  " + acc)
    return "\n".join(lines)


def run_sweep(cfg, axes=DEFAULT_SWEEP, out_dir=None):
    """Grid each axis (a cartesian product of its keys); write a long-format CSV."""
    cfg.validate()
    dataset = load_data(cfg)
    splits = make_splits(dataset.labels, cfg.labeled_fraction, cfg.n_splits, cfg.seed)
    tasks, meta = [], []
    cell = 0
    for a, axis in enumerate(axes):
        keys = sorted(axis)
        for values in itertools.product(*(axis[k] for k in keys)):
            cell += 1
            setting = dict(zip(keys, values))
            local = copy.deepcopy(cfg)
            apply_overrides(local, setting)
            for sp in splits:
                tasks.append((dataset, sp, _train_config_for(local, sp.index, cell), False))
                meta.append((a, cell, setting, sp.index))
    results = _run_cells(tasks, cfg.jobs)
    rows = []
    for (a, cell_id, setting, split_index), r in zip(meta, results):
        for key, value in setting.items():
            for metric in ("accuracy", "macro_f1"):
                rows.append({"axis": a, "cell": cell_id, "param": key, "value": value,
                             "split": split_index, "metric": metric,
                             "score": r["metrics"][metric] if r["status"] == "ok" else ""})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["axis"])
            writer.writeheader()
            writer.writerows(rows)
        _dump_json(out / "sweep_config.json", {"config": cfg.to_dict(),
                                               "axes": [dict(ax) for ax in axes]})
    return rows
