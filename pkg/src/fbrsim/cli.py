"""Command line: ``simulate``, ``rank`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .domain import (
    ConfigError, InvalidConfigError, ScenarioConfig, apply_overrides, check_config, desk_profile,
    load_config, paper_profile,
)
from .stats import DegenerateSample, ResultMatrix, aligned_friedman, ks_normality

METRIC_COLUMNS = {
    "br": ("median_br", "higher_is_better"),
    "eta": ("median_eta", "higher_is_better"),
    "sigma": ("median_sigma", "lower_is_better"),
    "adaptations": ("adaptations", "lower_is_better"),
}


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if getattr(args, "profile", None) == "desk":
        cfg = desk_profile(cfg)
    elif getattr(args, "profile", None) == "paper":
        cfg = paper_profile(cfg)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["base_seed"] = str(args.seed)
    return apply_overrides(cfg, overrides)


def cmd_validate(args) -> int:
    cfg = _load(args)
    errs = check_config(cfg)
    if errs:
        for e in errs:
            print(f"invalid: {e}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def cmd_simulate(args) -> int:
    from .engine import expand_experiment, run_experiment

    cfg = _load(args)
    errs = check_config(cfg)
    if errs:
        raise InvalidConfigError(errs)
    cfgs = expand_experiment(cfg)
    res = run_experiment(cfgs, workers=args.workers, out_dir=args.out,
                         write_records=not args.no_records, trace=args.trace)
    n_ok = len(res.results)
    print(f"{n_ok} replications written to {args.out}"
          + (f", {len(res.errors)} failed" if res.errors else ""))
    return 1 if res.errors and not n_ok else 0


def read_summary(path) -> dict[tuple[str, int], dict[int, dict[str, float]]]:
    """(strategy, vehicles) -> replication -> column -> value."""
    table: dict = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["strategy"], int(row["vehicles"]))
            table[key][int(row["replication"])] = {
                c: (float(row[c]) if row[c] != "" else np.nan)
                for c in ("median_br", "median_eta", "median_sigma", "adaptations")
            }
    return table


def build_matrix(table, column: str, blocks: str = "scenario") -> ResultMatrix:
    methods = sorted({s for s, _ in table})
    densities = sorted({v for _, v in table})
    if blocks == "scenario":
        labels = [f"{v}veh" for v in densities]
        values = [[np.nanmedian([r[column] for r in table[(m, v)].values()]) for m in methods]
                  for v in densities]
    else:
        reps = sorted(set.intersection(*(set(table[(m, v)]) for m in methods for v in densities)))
        labels = [f"{v}veh/rep{r}" for v in densities for r in reps]
        values = [[table[(m, v)][r][column] for m in methods] for v in densities for r in reps]
    return ResultMatrix(methods, labels, np.array(values, dtype=float))


def format_ranking(ranking, title: str) -> str:
    lines = [title, f"{'Congestion control method':<28}{'Ranking position':>18}{'Rank value':>14}"]
    for pos, (m, v) in enumerate(ranking.order, 1):
        lines.append(f"{m:<28}{pos:>18}{v:>14.3f}")
    lines.append(f"statistic = {ranking.statistic:.4f}, p-value = {ranking.p_value:.3g}")
    return "\n".join(lines)


def cmd_rank(args) -> int:
    in_dir = Path(args.in_dir)
    column, default_dir = METRIC_COLUMNS[args.metric]
    direction = {"higher": "higher_is_better", "lower": "lower_is_better", None: default_dir}[args.direction]
    table = read_summary(in_dir / "summary.csv")
    matrix = build_matrix(table, column, args.blocks)
    ranking = aligned_friedman(matrix, direction)
    print(format_ranking(ranking, f"Aligned Friedman ranking: {args.metric} ({direction})"))

    if args.normality:
        for m in matrix.methods:
            vals = [r[column] for (s, _), reps in table.items() if s == m for r in reps.values()]
            try:
                d, p = ks_normality(vals)
                print(f"KS normality {m}: D={d:.4f} p={p:.3g}")
            except (DegenerateSample, ValueError) as exc:
                print(f"KS normality {m}: n/a ({exc})")

    out = Path(args.out) if args.out else in_dir / f"ranking_{args.metric}.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "position", "rank_value"])
        for pos, (m, v) in enumerate(ranking.order, 1):
            w.writerow([m, pos, f"{v:.3f}"])
        w.writerow(["p_value", "", f"{ranking.p_value:.6g}"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbrsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run replications and write CSVs")
    sim.add_argument("--config")
    sim.add_argument("--profile", choices=("desk", "paper"))
    sim.add_argument("--seed", type=int, help="base seed; replication i uses seed + i")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", default="results")
    sim.add_argument("--trace", action="store_true", help="write per-vehicle mobility traces")
    sim.add_argument("--no-records", action="store_true", help="skip per-node record CSVs")
    sim.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sim.set_defaults(func=cmd_simulate)

    rk = sub.add_parser("rank", help="Aligned Friedman ranking of a summary CSV")
    rk.add_argument("--metric", choices=tuple(METRIC_COLUMNS), required=True)
    rk.add_argument("--direction", choices=("higher", "lower"))
    rk.add_argument("--in", dest="in_dir", required=True)
    rk.add_argument("--out")
    rk.add_argument("--blocks", choices=("scenario", "replication"), default="scenario")
    rk.add_argument("--normality", action="store_true", help="also print KS normality per method")
    rk.set_defaults(func=cmd_rank)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    val.add_argument("--profile", choices=("desk", "paper"))
    val.add_argument("--set", action="append", metavar="KEY=VALUE")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, InvalidConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
