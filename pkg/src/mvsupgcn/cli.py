"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .data import save_dataset, synth_blobs
from .errors import ContractViolation, DataError, NumericalFailure, SolverError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, out_required=True):
    p.add_argument("--config", type=Path, help="JSON file of dotted configuration keys")
    p.add_argument("--manifest", type=Path, help="dataset manifest (JSON)")
    p.add_argument("--synth", action="store_true", help="use a synthetic dataset (synth.* keys)")
    p.add_argument("--seed", type=int)
    p.add_argument("--splits", type=int)
    p.add_argument("--labeled-fraction", type=float)
    p.add_argument("--epochs", type=int, help="shorthand for train.e_max")
    p.add_argument("--jobs", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any dotted configuration key (repeatable)")
    p.add_argument("--out", type=Path, required=out_required)


def build_parser():
    parser = _Parser(prog="mvsupgcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic multi-view dataset as CSV + manifest")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("build-graphs", help="build the branch graphs of one split and dump CSVs")
    _common(p)
    p.add_argument("--split", type=int, default=0)

    p = sub.add_parser("train", help="train on a single split; writes weights.bin and history")
    _common(p)
    p.add_argument("--split", type=int, default=0)

    p = sub.add_parser("predict", help="reload weights.bin and write soft-voted predictions")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="predictions CSV path")

    p = sub.add_parser("evaluate", help="train and evaluate on every split; writes report.json")
    _common(p)
    p.add_argument("--embeddings", action="store_true", help="also dump H2 embeddings")
    p.add_argument("--graphs", action="store_true", help="also dump split-0 graphs")

    p = sub.add_parser("ablate", help="run the component ablation grid on shared splits")
    _common(p)

    p = sub.add_parser("sweep", help="hyperparameter grids; writes a long-format CSV")
    _common(p)
    p.add_argument("--axes", type=Path, help="JSON list of {dotted key: [values]} axes")
    return parser


def resolve_config(args):
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ex.ConfigError(item, "expected KEY=VALUE")
        overrides[key.strip()] = value.strip()
    if args.manifest is not None:
        overrides["manifest"] = str(args.manifest)
    for key, val in (("seed", args.seed), ("n_splits", args.splits),
                     ("labeled_fraction", args.labeled_fraction), ("train.e_max", args.epochs),
                     ("jobs", args.jobs)):
        if val is not None:
            overrides[key] = val
    cfg = ex.load_config(args.config, overrides)
    if args.synth and cfg.synth is None:
        cfg.synth = ex.SynthConfig()
    return cfg.validate()


def _run(args):
    if args.command == "synth":
        ds = synth_blobs(args.n, args.views, args.classes, args.separation, args.noise,
                         args.seed, args.dim)
        path = save_dataset(ds, args.out)
        print(f"wrote {path}")
        return EXIT_OK
    if args.command == "predict":
        Z = ex.predict_from_weights(args.weights, args.out)
        print(f"wrote {args.out} ({Z.shape[0]} x {Z.shape[1]})")
        return EXIT_OK

    cfg = resolve_config(args)
    if args.command == "build-graphs":
        dataset = ex.load_data(cfg)
        split = ex.make_splits(dataset.labels, cfg.labeled_fraction, args.split + 1,
                               cfg.seed)[args.split]
        names = ex.write_graphs(dataset, split, ex._train_config_for(cfg, args.split),
                                args.out / "graphs")
        print("\n".join(names))
        return EXIT_OK
    if args.command == "train":
        summary = ex.train_single(cfg, args.split, args.out)
        print(json.dumps(summary["metrics"], indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "evaluate":
        cfg.save_embeddings = cfg.save_embeddings or args.embeddings
        cfg.save_graphs = cfg.save_graphs or args.graphs
        report = ex.run_experiment(cfg, args.out)
        if report["aggregate"]:
            print(ex.format_aggregate(report["aggregate"]))
        return EXIT_NUMERIC if report["failed_splits"] else EXIT_OK
    if args.command == "ablate":
        report = ex.run_ablation(cfg, args.out)
        print(ex.format_ablation(report["rows"]))
        return EXIT_OK
    if args.command == "sweep":
        axes = ex.DEFAULT_SWEEP
        if args.axes is not None:
            axes = json.loads(args.axes.read_text())
        rows = ex.run_sweep(cfg, axes, args.out)
        print(f"wrote {len(rows)} rows to {args.out / 'sweep.csv'}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, SolverError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractViolation as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
