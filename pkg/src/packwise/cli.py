"""Command-line interface.

Subcommands: gen (synthetic traces), build (offline table construction),
run (online replay), compare (method cost comparison), inspect-table.
Every subcommand is deterministic given --seed. Settings resolve as
command-line flags > --config file (key=value lines) > built-in defaults.

Exit codes: 0 success, 2 build/usage/parse error, 3 table-catalog
fingerprint mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .clustering import save_dendrogram, save_index_table
from .engine import (
    BuildError,
    MissPolicy,
    build_offline,
    evaluate_methods,
    run_online,
)
from .lookup import FingerprintMismatchError, load_table, save_table
from .packing import GaParams, load_vm_catalog
from .workload import (
    DEFAULT_PERIOD_SECONDS,
    ServiceCatalog,
    SyntheticSpec,
    WorkloadTrace,
    generate_trace,
    load_catalog,
    load_trace,
    save_trace,
)


def _load_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


class Settings:
    """Flag > config-file > default resolution."""

    def __init__(self, args):
        self.args = args
        self.cfg = _load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name, default, cast=str):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            return flag
        if name in self.cfg:
            return cast(self.cfg[name])
        return default


def _ga_params(s: Settings, seed: int) -> GaParams:
    max_inst = s.get("max_instances", None, int)
    penalty = s.get("penalty_weight", None, float)
    return GaParams(
        population=s.get("population", 80, int),
        generations=s.get("generations", 300, int),
        crossover_rate=s.get("crossover_rate", 0.9, float),
        mutation_rate=s.get("mutation_rate", 0.05, float),
        max_instances=max_inst,
        penalty_weight=penalty,
        elitism=s.get("elitism", 2, int),
        seed=s.get("ga_seed", seed, int),
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args) -> int:
    if args.periods < 1:
        raise ValueError("--periods must be >= 1")
    if args.services < 1 or args.modes < 1:
        raise ValueError("--services and --modes must be >= 1")
    if args.center_low > args.center_high:
        raise ValueError("--center-low must not exceed --center-high")
    rng = np.random.default_rng(args.seed)
    centers = rng.integers(args.center_low, args.center_high + 1,
                           size=(args.modes, args.services)).astype(float)
    sigma = args.sigma if args.sigma is not None else 0.05 * float(centers.mean())
    # The generator only needs the service count; unit costs are irrelevant here.
    catalog = ServiceCatalog(np.ones((args.services, 1)))
    spec = SyntheticSpec(mode_centers=centers, noise_sigma=sigma,
                         periods=args.periods, seed=args.seed)
    trace = generate_trace(spec, catalog)
    trace = WorkloadTrace(trace.counts, period_seconds=args.period_seconds)
    save_trace(trace, args.out)
    print(f"wrote {args.periods}x{args.services} trace to {args.out}")
    return 0


def cmd_build(args) -> int:
    s = Settings(args)
    seed = s.get("seed", 0, int)
    catalog = load_catalog(args.catalog)
    vm_catalog = load_vm_catalog(args.vm_catalog)
    trace = load_trace(args.trace, catalog)
    k_range = (s.get("k_min", 2, int), s.get("k_max", 15, int))
    table, report = build_offline(
        trace, catalog, vm_catalog,
        k_range=k_range,
        ga_params=_ga_params(s, seed),
        similarity=s.get("similarity", "pearson"),
        threshold=s.get("threshold", None, float),
        # float("inf") disables the magnitude guard; "--magnitude-ratio inf" parses fine.
        magnitude_ratio=float(s.get("magnitude_ratio", 1.5, float)),
        linkage=s.get("linkage", "ward"),
        seed=seed,
    )
    out = _outdir(args)
    save_table(table, out / "table.json")
    report.to_csv(out / "offline_report.csv")
    save_index_table(report.index_rows, out / "index_table.csv")
    save_dendrogram(report.dendrogram, out / "dendrogram.csv")
    print(f"built table with {len(table.entries)} entries (k={report.best_k}) in {out}")
    return 0


def cmd_run(args) -> int:
    s = Settings(args)
    seed = s.get("seed", 0, int)
    catalog = load_catalog(args.catalog)
    vm_catalog = load_vm_catalog(args.vm_catalog)
    trace = load_trace(args.trace, catalog)
    table = load_table(args.table, catalog, vm_catalog)
    policy = MissPolicy(
        buffer_size=s.get("miss_buffer", 20, int),
        mode="full" if args.full_recluster else "incremental",
        ga_params=_ga_params(s, seed),
        k_range=(s.get("k_min", 2, int), s.get("k_max", 15, int)),
        seed=seed,
    )
    report = run_online(table, trace, catalog, vm_catalog,
                        fallback_policy=s.get("fallback", "greedy"),
                        miss_policy=policy)
    out = _outdir(args)
    report.to_csv(out / "simulation.csv")
    print(f"replayed {len(report.records)} periods: hit_rate={report.hit_rate:.3f} "
          f"total_cost={report.total_cost:.6g} reclusters={report.recluster_events}")
    return 0


def cmd_compare(args) -> int:
    s = Settings(args)
    seed = s.get("seed", 0, int)
    catalog = load_catalog(args.catalog)
    vm_catalog = load_vm_catalog(args.vm_catalog)
    trace = load_trace(args.trace, catalog)
    table = load_table(args.table, catalog, vm_catalog)
    report = evaluate_methods(trace, catalog, vm_catalog, table,
                              ga_params=_ga_params(s, seed))
    out = _outdir(args)
    report.to_csv(out / "comparison.csv")
    totals = ", ".join(f"{m}={t:.6g}" for m, t in zip(report.methods, report.totals))
    print(f"compared {len(report.rows)} periods: {totals}")
    return 0


def cmd_inspect_table(args) -> int:
    catalog = load_catalog(args.catalog)
    vm_catalog = load_vm_catalog(args.vm_catalog)
    table = load_table(args.table, catalog, vm_catalog)
    print(f"table: {args.table}")
    print(f"similarity: {table.similarity}  threshold: {table.threshold:.6g}  "
          f"magnitude_ratio: {table.magnitude_ratio:.6g}")
    print(f"fingerprint: {table.fingerprint}")
    print(f"entries: {len(table.entries)}")
    for i, entry in enumerate(table.entries):
        pattern = ";".join(f"{v:.6g}" for v in entry.pattern)
        print(f"  [{i}] pattern={pattern} cost={entry.solution.total_cost:.6g} "
              f"instances={entry.solution.instance_count}")
        for inst in entry.solution.instances:
            hosted = ",".join(str(s) for s in inst.services)
            print(f"      {inst.vm_type.id} -> services {hosted}")
    return 0


def _add_common(p: argparse.ArgumentParser, table: bool = False) -> None:
    p.add_argument("--trace", required=True, help="trace CSV file")
    p.add_argument("--catalog", required=True, help="service catalog file")
    p.add_argument("--vm-catalog", required=True, help="VM type catalog file")
    if table:
        p.add_argument("--table", required=True, help="lookup table JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value settings file")


def _add_ga_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--crossover-rate", type=float, default=None)
    p.add_argument("--mutation-rate", type=float, default=None)
    p.add_argument("--max-instances", type=int, default=None)
    p.add_argument("--penalty-weight", type=float, default=None)
    p.add_argument("--elitism", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="packwise",
        description="Learn demand patterns from a trace, precompute VM packings, "
                    "and answer scaling queries by table lookup.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic multi-mode trace")
    p.add_argument("--services", type=int, required=True)
    p.add_argument("--periods", type=int, required=True)
    p.add_argument("--modes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=None,
                   help="noise sigma (default: 5%% of the mean mode value)")
    p.add_argument("--center-low", type=int, default=20)
    p.add_argument("--center-high", type=int, default=200)
    p.add_argument("--period-seconds", type=int, default=DEFAULT_PERIOD_SECONDS)
    p.add_argument("--out", required=True, help="trace file to write")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build the lookup table from a trace")
    _add_common(p)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--similarity", choices=("pearson", "euclidean"), default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--magnitude-ratio", type=float, default=None)
    p.add_argument("--linkage", choices=("ward", "complete", "average"), default=None)
    _add_ga_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="replay a trace against a table")
    _add_common(p, table=True)
    p.add_argument("--fallback", choices=("greedy", "nearest"), default=None)
    p.add_argument("--miss-buffer", type=int, default=None)
    p.add_argument("--full-recluster", action="store_true")
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    _add_ga_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="cost comparison across methods")
    _add_common(p, table=True)
    _add_ga_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect-table", help="print a table summary")
    p.add_argument("--table", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--vm-catalog", required=True)
    p.set_defaults(func=cmd_inspect_table)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FingerprintMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (BuildError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
