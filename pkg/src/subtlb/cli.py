"""Command line front end.

    subtlb run --config exp.yaml --out report.json [--csv report.csv]
    subtlb run --mix HMM --policy star2 --seed 7 --out report.json
    subtlb gen-trace --mix HMM --seed 7 --out mix.trace.gz
    subtlb report report.json [--csv out.csv]
    subtlb compare a.json b.json [--force]

run executes one experiment and writes the JSON report (and optionally the
long-format CSV).  gen-trace materializes a mix's scheduled trace to a file.
report re-derives the CSV from a stored JSON report.  compare prints the
headline metrics of several reports side by side; it refuses to compare runs
with different seeds unless --force, since cross-seed deltas measure the seed
as much as the policy.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import (ConfigError, build_schedule, load_config, mix_config,
                     run_experiment)
from .metrics import (RunReport, harmonic_mean, report_csv_bytes,
                      report_json_bytes)
from .variants import VariantKind
from .workloads import standard_mixes, write_trace


def _add_run(sub):
    p = sub.add_parser("run", help="run one experiment")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment YAML")
    src.add_argument("--mix", help="standard mix name (HMM, HLL, ...)")
    p.add_argument("--policy", help="policy kind for --mix runs",
                   choices=[k.value for k in VariantKind], default="star2")
    p.add_argument("--seed", type=int, default=None,
                   help="override (config) or set (--mix) the seed")
    p.add_argument("--reach-pages", type=int, default=1024,
                   help="shared-level reach for --mix runs")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", help="also write the CSV rendering here")


def _add_gen_trace(sub):
    p = sub.add_parser("gen-trace", help="write a mix's scheduled trace")
    p.add_argument("--mix", required=True,
                   help="standard mix name (HMM, HLL, ...)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reach-pages", type=int, default=1024)
    p.add_argument("--out", required=True,
                   help="trace path; .gz compresses")


def _add_report(sub):
    p = sub.add_parser("report", help="re-render a stored JSON report")
    p.add_argument("report", help="JSON report path")
    p.add_argument("--csv", help="write CSV here instead of stdout")


def _add_compare(sub):
    p = sub.add_parser("compare", help="headline metrics side by side")
    p.add_argument("reports", nargs="+", help="JSON report paths")
    p.add_argument("--force", action="store_true",
                   help="compare even across different seeds")


def _load_report(path) -> RunReport:
    with open(path) as fh:
        data = json.load(fh)
    return RunReport(seed=data["seed"], policy=data["policy"],
                     config=data["config"],
                     per_pid={int(k): v for k, v in data["per_pid"].items()},
                     totals=data["totals"], schema=data["schema"])


def _cmd_run(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if args.seed is not None and args.seed != cfg.seed:
            cfg = dataclasses.replace(cfg, seed=args.seed)
    else:
        cfg = mix_config(args.mix, args.policy,
                         args.seed if args.seed is not None else 0,
                         reach_pages=args.reach_pages)
    report = run_experiment(cfg)
    with open(args.out, "wb") as fh:
        fh.write(report_json_bytes(report))
    if args.csv:
        with open(args.csv, "wb") as fh:
            fh.write(report_csv_bytes(report))
    t = report.totals
    print(f"policy={report.policy} seed={report.seed} "
          f"l3_hit_rate={t['l3_hit_rate']:.4f} mpki={t['mpki']:.2f} "
          f"evict_util_mean={t['evict_util_mean']:.4f}")
    return 0


def _cmd_gen_trace(args) -> int:
    if args.mix not in standard_mixes():
        print(f"unknown mix {args.mix!r}; have "
              f"{sorted(standard_mixes())}", file=sys.stderr)
        return 2
    cfg = mix_config(args.mix, "baseline", args.seed,
                     reach_pages=args.reach_pages)
    records = build_schedule(cfg)
    write_trace(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_report(args) -> int:
    report = _load_report(args.report)
    data = report_csv_bytes(report)
    if args.csv:
        with open(args.csv, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.write(data.decode("ascii"))
    return 0


def _cmd_compare(args) -> int:
    reports = [_load_report(p) for p in args.reports]
    seeds = {r.seed for r in reports}
    if len(seeds) > 1 and not args.force:
        print(f"refusing to compare different seeds {sorted(seeds)} "
              f"(--force overrides)", file=sys.stderr)
        return 2
    for path, r in zip(args.reports, reports):
        rates = [m["l3_hit_rate"] for m in r.per_pid.values()
                 if m["l3_hit_rate"] > 0]
        hmean = harmonic_mean(rates) if rates else 0.0
        t = r.totals
        print(f"{path}: policy={r.policy} seed={r.seed} "
              f"l3_hit_rate={t['l3_hit_rate']:.4f} "
              f"hmean_pid_hit_rate={hmean:.4f} mpki={t['mpki']:.2f} "
              f"evict_util_mean={t['evict_util_mean']:.4f} "
              f"total_bits={t['total_bits']}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="subtlb",
        description="trace-driven simulator of a shared sub-entry TLB")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_gen_trace(sub)
    _add_report(sub)
    _add_compare(sub)
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "gen-trace": _cmd_gen_trace,
                "report": _cmd_report, "compare": _cmd_compare}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
