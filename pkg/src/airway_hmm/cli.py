"""Command-line entry point.

Exit status: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from ._kernels import BACKEND
from .calibration import CalibrationError, DEFAULT_BINS, fit_temperature, logits_from_probabilities, scaled_softmax
from .inference import BOUNDARY_POLICIES, CostModel, InferenceError, marginals
from .metrics import MetricError, evaluate, format_report
from .simulator import DEFAULT_DWELL, DEFAULT_NOISE, SimulationError, WalkConfig, simulate_walk
from .tree import TreeError, distance_matrix, load_tree
from .tuning import DEFAULT_GRID, DEFAULT_LAMBDA, TuningError, TuningProblem, tune

VALIDATION_ERRORS = (
    fio.FileFormatError, TreeError, InferenceError, CalibrationError,
    TuningError, MetricError, SimulationError,
)


def _out(args, name: str) -> Path:
    return Path(args.out_dir or ".") / name


def _read_likelihoods(path, tree):
    _, p = fio.read_matrix(path, tree.labels)
    return p


def cmd_distances(args) -> int:
    tree = load_tree(args.tree)
    text = _int_matrix(tree.labels, distance_matrix(tree))
    sys.stdout.write(text)
    if args.out_dir:
        fio.atomic_write(_out(args, "distances.csv"), text)
    return 0


def _int_matrix(labels, d) -> str:
    lines = [",".join(["label", *labels])]
    lines += [",".join([lab, *map(str, row)]) for lab, row in zip(labels, d.astype(int))]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    tree = load_tree(args.tree)
    cfg = WalkConfig(length=args.frames, dwell=args.dwell, noise=args.noise, seed=args.seed,
                     return_to_root=not args.no_return)
    seq = simulate_walk(tree, cfg)
    fio.write_labels(_out(args, "truth.csv"), {"label": [tree.labels[i] for i in seq.truth]})
    fio.write_matrix(_out(args, "likelihoods.csv"), tree.labels, seq.likelihoods)
    fio.write_matrix(_out(args, "logits.csv"), tree.labels, seq.logits)
    print(f"wrote {cfg.length} frames to {Path(args.out_dir or '.')}")
    return 0


def cmd_calibrate(args) -> int:
    labels, z = fio.read_matrix(args.logits)
    y = fio.read_labels(args.labels, labels)
    if len(y) != len(z):
        raise fio.FileFormatError(f"{args.labels}: {len(y)} labels for {len(z)} logit rows in {args.logits}")
    if args.probabilities:
        z = logits_from_probabilities(z)
    report = fit_temperature(z, y, bins=args.bins)
    fio.write_json(_out(args, "calibration.json"), report.to_dict())
    fio.write_matrix(_out(args, "calibrated_likelihoods.csv"), labels, scaled_softmax(z, report.t_star))
    print(f"T* = {report.t_star:.6f}  NLL {report.nll_before:.6f} -> {report.nll_after:.6f}  "
          f"ECE {report.ece_before:.6f} -> {report.ece_after:.6f}")
    return 0


def _decode(args, write_marginals: bool) -> int:
    tree = load_tree(args.tree)
    p = _read_likelihoods(args.likelihoods, tree)
    cost = CostModel.from_likelihoods(p, tree, args.lambda_r, boundary=args.boundary,
                                      hard_boundary=not args.soft_boundary)
    res = marginals(cost)
    columns = {"predicted": [tree.labels[i] for i in res.path]}
    truth = None
    if args.truth:
        truth = fio.read_labels(args.truth, tree.labels)
        if len(truth) != len(p):
            raise fio.FileFormatError(f"{args.truth}: {len(truth)} labels for {len(p)} frames")
        columns["truth"] = [tree.labels[i] for i in truth]
    fio.write_labels(_out(args, "path.csv"), columns)
    if write_marginals:
        fio.write_matrix(_out(args, "marginals.csv"), tree.labels, res.marginals)
    if args.emit_costs:
        order = tree.dfs_order()
        ordered = [tree.labels[i] for i in order]
        fio.write_matrix(_out(args, "costs.csv"), ordered, res.combined[:, order])
        fio.write_matrix(_out(args, "frame_costs.csv"), ordered, cost.data[:, order])
    print(f"decoded {len(p)} frames, total cost {res.total_cost:.6f} (lambda={args.lambda_r}, backend={BACKEND})")
    if truth is not None:
        report = evaluate({"frame-based": (p.argmax(axis=1), truth, p),
                           "viterbi": (res.path, truth, res.marginals)}, distance_matrix(tree))
        print(format_report(report, average=False))
    return 0


def cmd_decode(args) -> int:
    return _decode(args, write_marginals=False)


def cmd_marginals(args) -> int:
    return _decode(args, write_marginals=True)


def cmd_tune(args) -> int:
    manifest = fio.load_manifest(args.sequences)
    tree = load_tree(args.tree or manifest.tree)
    seqs = []
    for e in manifest.entries:
        if e.truth is None:
            raise fio.FileFormatError(f"{args.sequences}: sequence {e.id!r} has no truth file")
        p = _read_likelihoods(e.likelihoods, tree)
        y = fio.read_labels(e.truth, tree.labels)
        if len(y) != len(p):
            raise fio.FileFormatError(f"{e.truth}: {len(y)} labels for {len(p)} frames")
        seqs.append((p, y))
    problem = TuningProblem(seqs, tree, lo=args.lo, hi=args.hi, samples=args.samples, boundary=args.boundary,
                            hard_boundary=not args.soft_boundary)
    result = tune(problem, method=args.method, init=args.init)
    fio.write_json(_out(args, "tuning.json"), result.to_dict())
    if result.nll_curve is not None:
        fio.write_matrix(_out(args, "nll_curve.csv"), ["nll"], result.nll_curve[:, 1:],
                         index=result.nll_curve[:, 0].tolist(), index_name="lambda")
        fio.write_matrix(_out(args, "acc_curve.csv"), ["acc1"], result.acc_curve[:, 1:],
                         index=result.acc_curve[:, 0].tolist(), index_name="lambda")
    parts = []
    if result.lambda_bf is not None:
        parts.append(f"lambda_bf = {result.lambda_bf:.4f} (NLL {result.nll_bf:.6f})")
    if result.lambda_gd is not None:
        parts.append(f"lambda_gd = {result.lambda_gd:.4f} (NLL {result.nll_gd:.6f}, {result.iterations} iterations)")
    print("\n".join(parts))
    return 0


def cmd_evaluate(args) -> int:
    tree = load_tree(args.tree)
    n = len(args.pred)
    if not (len(args.truth) == len(args.scores) == n):
        raise fio.FileFormatError("--pred, --truth and --scores must be given the same number of times")
    ids = args.id or [f"seq{i}" for i in range(n)]
    if len(ids) != n:
        raise fio.FileFormatError("--id must be given once per sequence")
    seqs = {}
    for sid, pf, tf, sf in zip(ids, args.pred, args.truth, args.scores):
        pred = fio.read_labels(pf, tree.labels, prefer=("predicted", "label"))
        truth = fio.read_labels(tf, tree.labels, prefer=("truth", "label"))
        _, scores = fio.read_matrix(sf, tree.labels)
        if not (len(pred) == len(truth) == len(scores)):
            raise fio.FileFormatError(f"sequence {sid}: pred/truth/scores lengths differ "
                                      f"({len(pred)}, {len(truth)}, {len(scores)})")
        seqs[sid] = (pred, truth, scores)
    report = evaluate(seqs, distance_matrix(tree))
    fio.write_json(_out(args, "report.json"), report.to_dict())
    print(format_report(report))
    return 0


def _boundary_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--boundary", choices=BOUNDARY_POLICIES, default="both",
                   help="frames pinned to the root: first and last, first only, or none")
    p.add_argument("--soft-boundary", action="store_true",
                   help="boundary frames only carry the one-hot data cost instead of a hard pin")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--tree", default=None,
                        help="tree JSON file or 'phantom_tree' (default: $AIRWAY_HMM_TREE, then phantom_tree)")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out-dir", default=None)

    parser = argparse.ArgumentParser(prog="airway-hmm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distances", parents=[shared], help="print the hop-distance matrix")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("simulate", parents=[shared], help="generate a synthetic labelled sequence")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--dwell", type=float, default=DEFAULT_DWELL)
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE)
    p.add_argument("--no-return", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[shared], help="fit a temperature to logits")
    p.add_argument("--logits", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--probabilities", action="store_true", help="input holds probabilities, not logits")
    p.set_defaults(func=cmd_calibrate)

    for name, func, helptext in (("decode", cmd_decode, "MAP label path"),
                                 ("marginals", cmd_marginals, "MAP path plus per-frame marginals")):
        p = sub.add_parser(name, parents=[shared], help=helptext)
        p.add_argument("--likelihoods", required=True)
        p.add_argument("--truth", default=None)
        p.add_argument("--lambda", dest="lambda_r", type=float, default=DEFAULT_LAMBDA)
        _boundary_flags(p)
        p.add_argument("--emit-costs", action="store_true",
                       help="write frame x label cost matrices with depth-first label order")
        p.set_defaults(func=func)

    p = sub.add_parser("tune-lambda", parents=[shared], help="choose the regularization weight")
    p.add_argument("--sequences", required=True, help="sequence manifest (JSON)")
    p.add_argument("--lo", type=float, default=DEFAULT_GRID[0])
    p.add_argument("--hi", type=float, default=DEFAULT_GRID[1])
    p.add_argument("--samples", type=int, default=DEFAULT_GRID[2])
    p.add_argument("--method", choices=("grid", "gd", "both"), default="both")
    p.add_argument("--init", type=float, default=1.0)
    _boundary_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", parents=[shared], help="metric report for decoded sequences")
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--truth", action="append", required=True)
    p.add_argument("--scores", action="append", required=True)
    p.add_argument("--id", action="append", default=None)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
