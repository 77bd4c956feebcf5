"""Command-line interface.

Subcommands:

* ``attack``: DeepFool warm start, boundary refinement, then the randomized
  region search, per input point; CSV report with ratio aggregates.
* ``compare-oracle``: adds the exact enumeration oracle and reports
  norm ratios against it.
* ``iterate``: re-applies the attack, warm-starting each round from the
  previous result with the target set restricted to the warm start's class.
* ``inspect-net``: prints a JSON summary of a network file.

Points are processed by a worker pool (size from the RLRQP_WORKERS
environment variable, default 1) and written in input order, so reports are
deterministic for a fixed seed regardless of the pool size. The wall-time
column is the only nondeterministic output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .attacks import (
    AttackConfig,
    boundary_refine,
    deepfool,
    fallback_start,
    rlr_qp,
)
from .data import DataFormatError, load_dataset
from .geometry import BoxConstraint
from .network import NetworkFormatError, classify, load_network
from .oracle import (
    DEFAULT_PATTERN_BUDGET,
    BudgetExceededError,
    NoAdversarialError,
    exact_min_adversarial,
)
from .report import ComparisonReport, improvement_rate, ratio_aggregate

__all__ = ["main"]

WORKERS_ENV = "RLRQP_WORKERS"


class CliError(Exception):
    """Fatal command error: message for stderr, nonzero exit."""


def _norm(vec) -> float:
    return float(np.linalg.norm(vec))


def _point_seed(seed: int, index: int, round_number: int | None = None) -> int:
    words = [seed, index] if round_number is None else [seed, index, round_number]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def _parse_box_bounds(text: str) -> tuple | None:
    if text.strip().lower() == "none":
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f'--box expects "lo,hi" or "none", got {text!r}')
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise CliError(f"--box bounds must be numbers, got {text!r}") from exc
    if lo > hi:
        raise CliError(f"--box lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


def _parse_box(text: str, dim: int) -> BoxConstraint | None:
    bounds = _parse_box_bounds(text)
    if bounds is None:
        return None
    return BoxConstraint.uniform(dim, bounds[0], bounds[1])


def _parse_targets(text: str):
    if text in ("all", "warm-start-class"):
        return text
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise CliError(
            f'--targets expects "all", "warm-start-class", or comma-separated '
            f"class indices, got {text!r}"
        ) from exc


def _load_net(path: str):
    try:
        return load_network(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read network file: {exc}") from exc
    except NetworkFormatError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_data(args, net):
    bounds = _parse_box_bounds(args.box)
    feature_range = bounds if bounds is not None else (-math.inf, math.inf)
    try:
        dataset = load_dataset(
            args.data, labels_path=args.labels, feature_range=feature_range
        )
    except DataFormatError as exc:
        raise CliError(str(exc)) from exc
    if dataset.dim != net.input_dim:
        raise CliError(
            f"dataset has {dataset.dim} features but the network expects "
            f"{net.input_dim}"
        )
    if int(dataset.labels.max(initial=0)) >= net.num_classes:
        raise CliError(
            f"dataset labels go up to {int(dataset.labels.max())} but the "
            f"network has {net.num_classes} classes"
        )
    if args.limit is not None:
        if args.limit < 1:
            raise CliError("--limit must be at least 1")
        dataset = type(dataset)(
            dataset.points[: args.limit],
            dataset.labels[: args.limit],
            dataset.feature_lower,
            dataset.feature_upper,
        )
    return dataset


def _load_warm_file(path: str, n_points: int, dim: int) -> np.ndarray:
    try:
        rows = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read warm-start file {path}: {exc}") from exc
    if rows.shape != (n_points, dim):
        raise CliError(
            f"warm-start file {path} has shape {rows.shape}, expected "
            f"({n_points}, {dim})"
        )
    return rows


def _base_config(args, box) -> AttackConfig:
    try:
        return AttackConfig(
            n1=args.n1,
            n2=args.n2,
            n3=args.n3,
            n4=args.n4,
            alpha=args.alpha,
            targets=_parse_targets(args.targets),
            box=box,
            seed=0,
            boundary_tol=args.boundary_tol,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _warm_start_for(net, x, args, warm_rows, index):
    """(warm perturbation or None, deepfool norm or None).

    Candidates are tried in order (refined, then unrefined, then the segment
    fallback) and the first one whose pushed point actually flips the class is
    used; refinement can land on a sliver whose pushed point falls back into
    the original class, and the attack rejects such starts.
    """
    mode = args.warm_start
    if mode == "none":
        return None, None

    c = classify(net, x)
    push = 1.0 + args.boundary_tol

    def usable(delta):
        return delta is not None and classify(net, x + push * delta) != c

    def refined(delta):
        try:
            return boundary_refine(net, x, delta, iters=args.refine_iters)
        except ValueError:
            return None

    if mode == "deepfool":
        raw = deepfool(net, x, max_iters=args.deepfool_iters, overshoot=args.overshoot)
        df_norm = _norm(raw) if raw is not None else None
        candidates = [refined(raw), raw] if raw is not None else []
        candidates.append(fallback_start(net, x, iters=args.refine_iters))
        for candidate in candidates:
            if usable(candidate):
                return candidate, df_norm
        return None, df_norm
    raw = warm_rows[index]
    for candidate in (refined(raw), raw):
        if usable(candidate):
            return candidate, None
    return None, None


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise CliError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if count < 1:
        raise CliError(f"{WORKERS_ENV} must be at least 1")
    return count


def _map_points(fn, indices):
    """Apply fn over point indices, preserving input order in the output."""
    workers = _workers()
    if workers == 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))


def _run_attack_point(net, x, args, cfg, warm_rows, index):
    start = time.perf_counter()
    row = {"point_id": index, "error": None}
    try:
        row["predicted"] = classify(net, x)
        warm, df_norm = _warm_start_for(net, x, args, warm_rows, index)
        row["norm_deepfool"] = df_norm
        row["norm_warm_start"] = _norm(warm) if warm is not None else None
        result = rlr_qp(
            net, x, warm, cfg=_replace_seed(cfg, _point_seed(args.seed, index))
        )
        row["success"] = result.success
        row["norm_rlrqp"] = result.norm if result.success else None
        row["regions_checked"] = result.regions_checked
        row["qp_calls"] = result.qp_calls
        if df_norm is not None and result.success and result.norm > 0:
            row["ratio_deepfool"] = df_norm / result.norm
        else:
            row["ratio_deepfool"] = None
    except (RuntimeError, ValueError) as exc:
        row["success"] = False
        row["error"] = str(exc)
    row["wall_time_s"] = time.perf_counter() - start
    return row


def _replace_seed(cfg: AttackConfig, seed: int) -> AttackConfig:
    return dataclasses.replace(cfg, seed=seed)


ATTACK_COLUMNS = [
    "point_id",
    "label",
    "predicted",
    "success",
    "norm_deepfool",
    "norm_warm_start",
    "norm_rlrqp",
    "ratio_deepfool",
    "regions_checked",
    "qp_calls",
    "wall_time_s",
    "error",
]


def cmd_attack(args) -> int:
    net = _load_net(args.net)
    dataset = _load_data(args, net)
    box = _parse_box(args.box, net.input_dim)
    cfg = _base_config(args, box)
    warm_rows = None
    if args.warm_start not in ("deepfool", "none"):
        warm_rows = _load_warm_file(args.warm_start, len(dataset), dataset.dim)

    def run(index):
        row = _run_attack_point(
            net, dataset.points[index], args, cfg, warm_rows, index
        )
        row["label"] = int(dataset.labels[index])
        return row

    rows = _map_points(run, range(len(dataset)))
    report = ComparisonReport("attack", ATTACK_COLUMNS)
    for row in rows:
        report.add_row(**row)
    ratios = [
        row["ratio_deepfool"] for row in rows if row.get("ratio_deepfool") is not None
    ]
    agg = ratio_aggregate(ratios)
    report.add_aggregate(
        baseline="deepfool",
        ratio_mean=agg["mean"],
        ratio_min=agg["min"],
        ratio_max=agg["max"],
        ir_percent=improvement_rate(ratios),
        deepfool_failures=sum(1 for r in rows if r.get("norm_deepfool") is None),
        rlrqp_failures=sum(1 for r in rows if not r.get("success")),
        included=len(ratios),
    )
    report.write(args.output)
    return 0


def _compare_columns(methods):
    cols = ["point_id", "label", "predicted"]
    if "oracle" in methods:
        cols += ["norm_oracle", "patterns_enumerated", "feasible_patterns"]
    if "rlrqp" in methods:
        cols += ["norm_rlrqp", "regions_checked", "qp_calls"]
    if "deepfool" in methods:
        cols += ["norm_deepfool"]
    if "oracle" in methods and "rlrqp" in methods:
        cols += ["ratio_rlrqp"]
    if "oracle" in methods and "deepfool" in methods:
        cols += ["ratio_deepfool"]
    cols += ["wall_time_s", "error"]
    return cols


def cmd_compare_oracle(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    known = {"oracle", "rlrqp", "deepfool"}
    unknown = set(methods) - known
    if unknown:
        raise CliError(f"unknown methods: {sorted(unknown)}; choose from {sorted(known)}")
    if not methods:
        raise CliError("--methods must name at least one method")
    net = _load_net(args.net)
    dataset = _load_data(args, net)
    box = _parse_box(args.box, net.input_dim)
    cfg = _base_config(args, box)

    def run(index):
        start = time.perf_counter()
        x = dataset.points[index]
        row = {"point_id": index, "label": int(dataset.labels[index]), "error": None}
        errors = []
        try:
            row["predicted"] = classify(net, x)
            if "oracle" in methods:
                oracle_result = exact_min_adversarial(
                    net, x, box=box, max_patterns=args.max_patterns
                )
                row["norm_oracle"] = oracle_result.norm
                row["patterns_enumerated"] = oracle_result.patterns_enumerated
                row["feasible_patterns"] = oracle_result.feasible_patterns
            df_norm = None
            if "deepfool" in methods or "rlrqp" in methods:
                raw = deepfool(
                    net, x, max_iters=args.deepfool_iters, overshoot=args.overshoot
                )
                if raw is not None:
                    df_norm = _norm(raw)
            if "deepfool" in methods:
                row["norm_deepfool"] = df_norm
            if "rlrqp" in methods:
                if raw is None:
                    warm = fallback_start(net, x, iters=args.refine_iters)
                else:
                    warm = boundary_refine(net, x, raw, iters=args.refine_iters)
                result = rlr_qp(
                    net, x, warm, cfg=_replace_seed(cfg, _point_seed(args.seed, index))
                )
                row["norm_rlrqp"] = result.norm if result.success else None
                row["regions_checked"] = result.regions_checked
                row["qp_calls"] = result.qp_calls
            oracle_norm = row.get("norm_oracle")
            if oracle_norm is not None and oracle_norm > 0:
                if row.get("norm_rlrqp") is not None:
                    row["ratio_rlrqp"] = row["norm_rlrqp"] / oracle_norm
                if row.get("norm_deepfool") is not None:
                    row["ratio_deepfool"] = row["norm_deepfool"] / oracle_norm
        except (RuntimeError, ValueError) as exc:
            errors.append(str(exc))
        if errors:
            row["error"] = "; ".join(errors)
        row["wall_time_s"] = time.perf_counter() - start
        return row

    rows = _map_points(run, range(len(dataset)))
    report = ComparisonReport("compare-oracle", _compare_columns(methods))
    for row in rows:
        report.add_row(**row)
    for method in ("rlrqp", "deepfool"):
        key = f"ratio_{method}"
        if "oracle" not in methods or method not in methods:
            continue
        ratios = [row[key] for row in rows if row.get(key) is not None]
        agg = ratio_aggregate(ratios)
        report.add_aggregate(
            method=method,
            ratio_mean=agg["mean"],
            ratio_min=agg["min"],
            ratio_max=agg["max"],
            failures=sum(1 for r in rows if r.get(f"norm_{method}") is None),
            included=len(ratios),
        )
    report.write(args.output)
    return 0


def cmd_iterate(args) -> int:
    if args.rounds < 1:
        raise CliError("--rounds must be at least 1")
    net = _load_net(args.net)
    dataset = _load_data(args, net)
    box = _parse_box(args.box, net.input_dim)
    cfg = _base_config(args, box)
    rounds = args.rounds
    warm_rows = None
    if args.warm_start not in ("deepfool", "none"):
        warm_rows = _load_warm_file(args.warm_start, len(dataset), dataset.dim)

    def run(index):
        start = time.perf_counter()
        x = dataset.points[index]
        row = {"point_id": index, "label": int(dataset.labels[index]), "error": None}
        try:
            row["predicted"] = classify(net, x)
            warm, _ = _warm_start_for(net, x, args, warm_rows, index)
            row["norm_warm_start"] = _norm(warm) if warm is not None else None
            regions_total = 0
            qp_total = 0
            success = False
            delta = None
            for round_number in range(1, rounds + 1):
                if round_number == 1:
                    round_cfg = _replace_seed(cfg, _point_seed(args.seed, index))
                    round_warm = warm
                else:
                    round_cfg = dataclasses.replace(
                        cfg,
                        targets="warm-start-class",
                        seed=_point_seed(args.seed, index, round_number),
                    )
                    round_warm = delta
                result = rlr_qp(net, x, round_warm, cfg=round_cfg)
                regions_total += result.regions_checked
                qp_total += result.qp_calls
                if not result.success:
                    row[f"norm_round_{round_number}"] = None
                    break
                success = True
                delta = result.delta
                row[f"norm_round_{round_number}"] = result.norm
            row["success"] = success
            row["final_norm"] = _norm(delta) if delta is not None else None
            row["regions_checked_total"] = regions_total
            row["qp_calls_total"] = qp_total
        except (RuntimeError, ValueError) as exc:
            row["success"] = False
            row["error"] = str(exc)
        row["wall_time_s"] = time.perf_counter() - start
        return row

    rows = _map_points(run, range(len(dataset)))
    columns = (
        ["point_id", "label", "predicted", "success", "norm_warm_start"]
        + [f"norm_round_{r}" for r in range(1, rounds + 1)]
        + ["final_norm", "regions_checked_total", "qp_calls_total", "wall_time_s", "error"]
    )
    report = ComparisonReport("iterate", columns)
    for row in rows:
        report.add_row(**row)
    previous = None
    for round_number in range(1, rounds + 1):
        key = f"norm_round_{round_number}"
        norms = {r["point_id"]: r[key] for r in rows if r.get(key) is not None}
        mean_norm = (
            float(np.mean([norms[k] for k in sorted(norms)])) if norms else None
        )
        entries = {"round": round_number, "mean_norm": mean_norm}
        if previous is not None:
            improvements = [
                100.0 * (previous[k] - norms[k]) / previous[k]
                for k in sorted(norms)
                if k in previous and previous[k] > 0
            ]
            if improvements:
                entries["improvement_mean_percent"] = float(np.mean(improvements))
                entries["improvement_max_percent"] = float(np.max(improvements))
        report.add_aggregate(**entries)
        previous = norms
    report.write(args.output)
    return 0


def cmd_inspect_net(args) -> int:
    net = _load_net(args.net)
    params = sum(
        layer.weights.size + layer.bias.size for layer in net.layers
    )
    summary = {
        "input_dim": net.input_dim,
        "num_classes": net.num_classes,
        "num_hidden_layers": net.num_hidden_layers,
        "hidden_sizes": list(net.hidden_sizes),
        "num_hidden_units": net.num_hidden_units,
        "parameters": int(params),
        "activation_patterns": 2**net.num_hidden_units,
        "oracle_within_default_budget": 2**net.num_hidden_units
        <= DEFAULT_PATTERN_BUDGET,
    }
    print(json.dumps(summary, indent=2))
    return 0


def _add_common_attack_flags(parser):
    parser.add_argument("--net", required=True, help="network JSON file")
    parser.add_argument("--data", required=True, help="dataset CSV file or IDX image file")
    parser.add_argument("--labels", default=None, help="IDX label file (enables IDX mode)")
    parser.add_argument("--output", default="report.csv", help="report CSV path")
    parser.add_argument("--box", default="0,1", help='input box "lo,hi", or "none"')
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--n1", type=int, default=10, help="working-set size")
    parser.add_argument("--n2", type=int, default=10, help="samples per candidate")
    parser.add_argument("--n3", type=int, default=5, help="exploration rounds")
    parser.add_argument("--n4", type=int, default=3, help="outer iterations")
    parser.add_argument("--alpha", type=float, default=1.5, help="working-set admission factor")
    parser.add_argument(
        "--targets",
        default="all",
        help='"all", "warm-start-class", or comma-separated class indices',
    )
    parser.add_argument(
        "--warm-start",
        default="deepfool",
        help='"deepfool", "none", or a CSV file of per-point perturbations',
    )
    parser.add_argument("--deepfool-iters", type=int, default=50)
    parser.add_argument("--overshoot", type=float, default=0.02)
    parser.add_argument("--refine-iters", type=int, default=40)
    parser.add_argument("--boundary-tol", type=float, default=1e-6)
    parser.add_argument("--limit", type=int, default=None, help="use only the first N points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relu-regions-attack",
        description="Minimum-norm adversarial perturbations for ReLU networks "
        "via linear-region quadratic programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="run the randomized region attack")
    _add_common_attack_flags(p_attack)
    p_attack.set_defaults(func=cmd_attack)

    p_cmp = sub.add_parser(
        "compare-oracle", help="compare attack norms against the exact oracle"
    )
    _add_common_attack_flags(p_cmp)
    p_cmp.add_argument(
        "--methods",
        default="oracle,rlrqp,deepfool",
        help="comma-separated subset of oracle,rlrqp,deepfool",
    )
    p_cmp.add_argument(
        "--max-patterns",
        type=int,
        default=DEFAULT_PATTERN_BUDGET,
        help="oracle enumeration budget",
    )
    p_cmp.set_defaults(func=cmd_compare_oracle)

    p_iter = sub.add_parser(
        "iterate", help="re-apply the attack, warm-starting from the previous round"
    )
    _add_common_attack_flags(p_iter)
    p_iter.add_argument("--rounds", type=int, default=2, help="number of applications")
    p_iter.set_defaults(func=cmd_iterate)

    p_inspect = sub.add_parser("inspect-net", help="print a network summary")
    p_inspect.add_argument("--net", required=True, help="network JSON file")
    p_inspect.set_defaults(func=cmd_inspect_net)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoAdversarialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
