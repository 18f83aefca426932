"""Command-line pipeline: synth, build-graph, propagate, eval, sweep-theta.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/degenerate error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets
from .errors import AttrPropError, InvalidInputError
from .experiments import THETA_GRID, ZeroShotSplit, theta_sweep
from .geometry import DEFAULT_MAX_NORM
from .graph import Topology, graph_stats, read_graph, write_graph
from .refine import (
    DEFAULT_P,
    DEFAULT_THETA,
    PropagationConfig,
    build_feature_graph,
    propagate,
    recovery_metrics,
)
from .zsc import DEFAULT_LAMBDA, zero_shot_evaluate

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass(frozen=True)
class RunConfig:
    metric: str = "hyperbolic"
    topology: str = "relative_neighborhood"
    target_max_norm: float = DEFAULT_MAX_NORM
    p: float = DEFAULT_P
    theta: float = DEFAULT_THETA
    ridge_lambda: float = DEFAULT_LAMBDA
    seed: int = 0
    threads: int | None = None
    fmt: str = "csv"
    out: Path = Path(".")

    def __post_init__(self):
        if not 0 < self.target_max_norm < 1:
            raise UsageError("--max-norm must lie in (0, 1)")
        if not self.p > 0:
            raise UsageError("--idw-p must be positive")
        if not 0 <= self.theta <= 1:
            raise UsageError("--theta must lie in [0, 1]")
        if not self.ridge_lambda >= 0:
            raise UsageError("--lambda must be nonnegative")
        if self.threads is not None and self.threads < 1:
            raise UsageError("--threads must be >= 1")

    @property
    def propagation(self):
        return PropagationConfig(self.metric, self.topology, self.target_max_norm, self.p, self.theta,
                                 threads=self.threads)

    def path(self, stem):
        return self.out / (stem + (".csv" if self.fmt == "csv" else ".bin"))


def _common(p):
    p.add_argument("--format", dest="fmt", choices=datasets.FORMATS, default="csv")
    p.add_argument("--metric", choices=["hyperbolic", "euclidean"], default="hyperbolic")
    p.add_argument("--topology", choices=["rng", "complete"], default="rng")
    p.add_argument("--max-norm", type=float, default=DEFAULT_MAX_NORM)
    p.add_argument("--idw-p", type=float, default=DEFAULT_P)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads (default: all CPUs)")
    p.add_argument("--out", type=Path, default=Path("."))


def _data_args(p, labels_required=True):
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=labels_required)
    p.add_argument("--class-attrs", type=Path, required=labels_required)


def build_parser():
    parser = _Parser(prog="attrprop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted-noise benchmark")
    _common(p)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--attributes", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--test-classes", type=int, default=0,
                   help="hold out the last K classes as a zero-shot test split")

    p = sub.add_parser("build-graph", help="build the neighborhood graph of a feature matrix")
    _common(p)
    _data_args(p, labels_required=False)

    p = sub.add_parser("propagate", help="refine class attributes into image attributes")
    _common(p)
    _data_args(p)
    p.add_argument("--initial-attrs", type=Path, help="per-sample starting attributes (M x N) instead of expanded class attributes")
    p.add_argument("--graph", type=Path, help="reuse an edge-list file from build-graph")
    p.add_argument("--noise-mask", type=Path, help="M x N 0/1 matrix of planted flips; prints recovery rates")

    p = sub.add_parser("eval", help="zero-shot evaluation with a ridge attribute map")
    _common(p)
    _data_args(p)
    p.add_argument("--train-attrs", type=Path, help="image attributes to train on (default: expanded class attributes)")
    p.add_argument("--test-features", type=Path, required=True)
    p.add_argument("--test-labels", type=Path, required=True)

    p = sub.add_parser("sweep-theta", help="flip fraction and accuracy over a theta grid")
    _common(p)
    _data_args(p)
    p.add_argument("--initial-attrs", type=Path)
    p.add_argument("--test-features", type=Path, required=True)
    p.add_argument("--test-labels", type=Path, required=True)
    p.add_argument("--thetas", default=",".join(str(t) for t in THETA_GRID),
                   help="comma-separated theta values")
    return parser


def _config(args):
    return RunConfig(
        metric=args.metric, topology=Topology.parse(args.topology).value, target_max_norm=args.max_norm,
        p=args.idw_p, theta=args.theta, ridge_lambda=args.ridge_lambda, seed=args.seed,
        threads=args.threads if args.threads is not None else os.cpu_count(), fmt=args.fmt, out=args.out,
    )


def _prepare_out(cfg):
    cfg.out.mkdir(parents=True, exist_ok=True)


def _print_table(rows):
    for k, v in rows:
        print(f"{k}: {v}")


def cmd_synth(args, cfg):
    spec = datasets.SyntheticSpec(args.clusters, args.points, args.dim, args.spread, args.attributes,
                                  args.noise, cfg.seed)
    data = datasets.generate_synthetic(spec)
    _prepare_out(cfg)
    fmt = cfg.fmt
    datasets.save_matrix(cfg.path("class_attrs"), data.class_attrs, fmt)
    k = args.test_classes
    if not 0 <= k < spec.cluster_count:
        raise UsageError("--test-classes must lie in [0, clusters)")
    parts = {"": data}
    if k:
        test_ids = np.arange(spec.cluster_count - k, spec.cluster_count)
        parts = {"train_": data.subset(np.setdiff1d(np.arange(spec.cluster_count), test_ids)),
                 "test_": data.subset(test_ids)}
    for prefix, part in parts.items():
        datasets.save_matrix(cfg.path(prefix + "features"), part.features.rows, fmt)
        datasets.save_labels(cfg.path(prefix + "labels"), part.features.labels, fmt)
        datasets.save_matrix(cfg.path(prefix + "observed"), part.observed, fmt)
        datasets.save_matrix(cfg.path(prefix + "ground_truth"), part.ground_truth, fmt)
        datasets.save_matrix(cfg.path(prefix + "noise_mask"), part.noise_mask.astype(np.uint8), fmt)
    _print_table([("samples", data.features.n_samples), ("classes", spec.cluster_count),
                  ("attributes", spec.attribute_count), ("noise_cells", int(data.noise_mask.sum())),
                  ("test_classes", k)])


def cmd_build_graph(args, cfg):
    x = datasets.load_matrix(args.features, cfg.fmt)
    graph = build_feature_graph(x, cfg.propagation)
    _prepare_out(cfg)
    write_graph(graph, cfg.out / "graph.txt")
    _print_table(graph_stats(graph).items())


def _load_initial(path, fmt, n):
    a = datasets.load_binary_matrix(path, fmt)
    if a.shape[1] != n:
        raise datasets.DimensionMismatchError(f"{a.shape[1]} columns for {n} samples", path)
    return a


def cmd_propagate(args, cfg):
    fm, attrs = datasets.load_dataset(args.features, args.labels, args.class_attrs, cfg.fmt)
    initial = _load_initial(args.initial_attrs, cfg.fmt, fm.n_samples) if args.initial_attrs else None
    graph = read_graph(args.graph) if args.graph else None
    if graph is not None and graph.vertex_count != fm.n_samples:
        raise InvalidInputError(f"graph has {graph.vertex_count} vertices for {fm.n_samples} samples")
    refined, report, graph = propagate(fm.rows, fm.labels, attrs, cfg.propagation, initial=initial, graph=graph)
    _prepare_out(cfg)
    datasets.save_matrix(cfg.path("isa"), refined, cfg.fmt)
    report.write_csv(cfg.out / "report.csv")
    rows = [("flipped", report.flip_count), ("flip_fraction", f"{report.flip_fraction:.6f}")]
    if args.noise_mask:
        mask = datasets.load_binary_matrix(args.noise_mask, cfg.fmt).astype(bool)
        rec = recovery_metrics(report, mask)
        rows += [("reverted_pct", f"{100 * rec['reverted']:.2f}"),
                 ("clean_flip_pct", f"{100 * rec['clean_flipped']:.2f}")]
    _print_table(rows)


def _load_split(args, cfg, targets_path):
    fm, attrs = datasets.load_dataset(args.features, args.labels, args.class_attrs, cfg.fmt)
    tx = datasets.load_matrix(args.test_features, cfg.fmt)
    tl = datasets.load_labels(args.test_labels, cfg.fmt)
    if tl.size != tx.shape[0]:
        raise datasets.DimensionMismatchError(f"{tl.size} labels for {tx.shape[0]} test rows", args.test_labels)
    if tx.shape[1] != fm.dim:
        raise datasets.DimensionMismatchError(f"test features have {tx.shape[1]} columns, training has {fm.dim}",
                                              args.test_features)
    if tl.max() >= attrs.shape[1]:
        raise datasets.DimensionMismatchError(f"test label {tl.max()} has no class attribute column",
                                              args.test_labels)
    overlap = np.intersect1d(np.unique(fm.labels), np.unique(tl))
    if overlap.size:
        raise InvalidInputError(f"classes {overlap.tolist()} appear in both train and test; zero-shot needs disjoint classes")
    if targets_path:
        initial = _load_initial(targets_path, cfg.fmt, fm.n_samples)
    else:
        initial = attrs[:, fm.labels]
    return ZeroShotSplit(fm.rows, fm.labels, initial, tx, tl, attrs)


def cmd_eval(args, cfg):
    split = _load_split(args, cfg, args.train_attrs)
    result = zero_shot_evaluate(split.train_features, split.train_initial, split.test_features, split.test_labels,
                                split.class_attrs, cfg.ridge_lambda, split.train_labels)
    _prepare_out(cfg)
    result.write_csv(cfg.out / "zsc.csv")
    result.write_confusion_csv(cfg.out / "confusion.csv")
    _print_table([("mean_class_accuracy", f"{result.mean_class_accuracy:.6f}"),
                  ("degenerate_projections", result.degenerate_count)])


def cmd_sweep_theta(args, cfg):
    try:
        thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"--thetas: {exc}") from exc
    if not thetas or any(not 0 <= t <= 1 for t in thetas):
        raise UsageError("--thetas must be values in [0, 1]")
    split = _load_split(args, cfg, args.initial_attrs)
    rows = theta_sweep(split, thetas, cfg.propagation, cfg.ridge_lambda)
    _prepare_out(cfg)
    with open(cfg.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "flip_fraction", "mean_class_accuracy"])
        for theta, frac, acc in rows:
            w.writerow([f"{theta:.17g}", f"{frac:.17g}", f"{acc:.17g}"])
    for theta, frac, acc in rows:
        print(f"{theta:.2f}\t{frac:.6f}\t{acc:.6f}")


COMMANDS = {
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "propagate": cmd_propagate,
    "eval": cmd_eval,
    "sweep-theta": cmd_sweep_theta,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"attrprop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AttrPropError as exc:
        print(f"attrprop: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"attrprop: error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
