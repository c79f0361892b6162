"""Experiment driver: instance generation, single runs, parameter sweeps.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
4 mid-run infeasibility.  Sweep cells are dispatched to a process pool
(capped by the EDGECACHE_THREADS environment variable) and rows are written
in sorted order, so reruns with the same base seed reproduce the CSV
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynamic import run_dca_plus, run_pfr, run_static, SimulationError
from .kpaths import DEFAULT_K, PathSets, compute_path_sets
from .lpbench import build_lp, solve_lp
from .metrics import RunSummary, SECONDS_PER_HOUR, summarize
from .schedule import SchedulingError, data_cache_access
from .topology import (ConfigError, GridConfig, InstanceError, NetworkInstance,
                       PIECE_AIRTIME_S, generate_instance)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_MIDRUN = 4

CSV_COLUMNS = ("side", "nodes", "caches", "consumers", "algo", "seed",
               "lifetime_h", "energy_rate_j_per_h", "tvd_all", "tvd_field",
               "status")

ALGOS = ("dca", "dca+", "pfr", "lp")

# Sweep preset.  Absolute per-event energies are free parameters (the model
# fixes only their ratios), chosen so static lifetimes land in the
# 1e3-1e4 hour range; the status-report radio runs at 10^3 times the field
# radio's power and a report occupies the air for 10 ms against 288 us for
# a 9-byte piece, preserving the same report/piece per-event energy ratio
# (~3.5e4) as the physical-unit defaults in topology.
SWEEP_EPS_J = 3.2e-4
SWEEP_REPORT_POWER_RATIO = 1e3
SWEEP_REPORT_AIRTIME_S = 0.01
DEFAULT_ALPHA_TAU_H = 10.0


def sweep_report_cost_j(eps_j: float, power_ratio: float = SWEEP_REPORT_POWER_RATIO,
                        report_airtime_s: float = SWEEP_REPORT_AIRTIME_S) -> float:
    field_power = eps_j / PIECE_AIRTIME_S
    return field_power * power_ratio * report_airtime_s


def sweep_grid_config(side: int, consumers: int, *, eps_j: float = SWEEP_EPS_J,
                      report_cost_j: float | None = None) -> GridConfig:
    if report_cost_j is None:
        report_cost_j = sweep_report_cost_j(eps_j)
    return GridConfig(side=side, n_consumers=consumers,
                      eps_j=eps_j, report_cost_j=report_cost_j)


def cell_seed(base_seed: int, side: int, consumers: int, rep: int) -> int:
    """Deterministic per-cell seed from the base seed and cell coordinates."""
    ss = np.random.SeedSequence([base_seed, side, consumers, rep])
    return int(ss.generate_state(1, np.uint64)[0] % np.uint64(2**63 - 1))


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

def _instance_side(instance: NetworkInstance) -> int:
    root = int(round(math.sqrt(instance.n_nodes)))
    return root if root * root == instance.n_nodes else 0


def run_algorithm(instance: NetworkInstance, algo: str, *,
                  k: int = DEFAULT_K, alpha_tau_h: float = DEFAULT_ALPHA_TAU_H,
                  path_sets: PathSets | None = None, seed: int = 0,
                  pfr_start: str = "first", collect_events: bool = False):
    """Run one algorithm; returns (RunSummary, trace-or-None)."""
    side = _instance_side(instance)
    alpha = alpha_tau_h * SECONDS_PER_HOUR / instance.tau_s
    if algo == "lp":
        sol = solve_lp(build_lp(instance))
        life_h = (sol.t_cycles * instance.tau_s / SECONDS_PER_HOUR
                  if sol.status == "optimal" else math.nan)
        return RunSummary(
            algorithm="lp", side=side, n_nodes=instance.n_nodes,
            n_caches=len(instance.caches), n_consumers=len(instance.pieces),
            seed=seed, lifetime_h=life_h, energy_rate_j_per_h=math.nan,
            tvd_all=math.nan, tvd_field=math.nan, status=sol.status,
        ), None
    if path_sets is None:
        path_sets = compute_path_sets(instance, k)
    if algo == "dca":
        schedule = data_cache_access(instance, path_sets)
        trace = run_static(instance, schedule)
    elif algo == "dca+":
        trace = run_dca_plus(instance, path_sets, alpha=alpha,
                             collect_events=collect_events)
    elif algo == "pfr":
        trace = run_pfr(instance, path_sets, alpha=alpha,
                        start=pfr_start, seed=seed,
                        collect_events=collect_events)
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    return summarize(instance, trace, side, seed), trace


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return ""
        return repr(v)
    return str(x)


def summary_row(s: RunSummary) -> list:
    return [_fmt(v) for v in (s.side, s.n_nodes, s.n_caches, s.n_consumers,
                              s.algorithm, s.seed, s.lifetime_h,
                              s.energy_rate_j_per_h, s.tvd_all, s.tvd_field,
                              s.status)]


def trace_to_doc(trace) -> dict:
    extras = {k: v for k, v in trace.extras.items()
              if isinstance(v, (int, float, str, bool))}
    return {
        "algorithm": trace.algorithm,
        "status": trace.status,
        "lifetime_s": trace.lifetime_s,
        "tau_s": trace.tau_s,
        "events": [
            {"kind": e.kind, "t_s": e.t_s, "node": e.node,
             "info": list(e.info)}
            for e in trace.events
        ],
        "final": {
            "clock_s": trace.final.clock_s,
            "consumed_j": [float(x) for x in trace.final.consumed],
            "initial_j": [float(x) for x in trace.final.initial],
        },
        "extras": extras,
    }


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    sides: tuple
    consumers: tuple
    reps: int
    base_seed: int
    algos: tuple
    k: int = DEFAULT_K
    alpha_tau_h: float = DEFAULT_ALPHA_TAU_H
    eps_j: float = SWEEP_EPS_J
    report_cost_j: float | None = None
    pfr_start: str = "first"

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("replications must be >= 1")
        if not self.sides or not self.consumers or not self.algos:
            raise ConfigError("sides, consumers and algos must be nonempty")
        for a in self.algos:
            if a not in ALGOS:
                raise ConfigError(f"unknown algorithm {a!r}")


def _sweep_cell(args):
    """One (side, consumers, rep) cell: shared instance, one row per algo."""
    cfg, side, consumers, rep = args
    seed = cell_seed(cfg.base_seed, side, consumers, rep)
    rows = []
    try:
        grid = sweep_grid_config(side, consumers, eps_j=cfg.eps_j,
                                 report_cost_j=cfg.report_cost_j)
        instance = generate_instance(grid, seed)
        path_sets = compute_path_sets(instance, cfg.k)
    except (ConfigError, InstanceError, SchedulingError) as exc:
        for algo in cfg.algos:
            rows.append([str(side), "", "", str(consumers), algo, str(seed),
                         "", "", "", "", f"error:{type(exc).__name__}"])
        return rep, rows
    for algo in cfg.algos:
        try:
            summary, _ = run_algorithm(
                instance, algo, k=cfg.k, alpha_tau_h=cfg.alpha_tau_h,
                path_sets=path_sets, seed=seed, pfr_start=cfg.pfr_start)
            rows.append(summary_row(summary))
        except (SchedulingError, SimulationError, InstanceError) as exc:
            rows.append([str(side), str(instance.n_nodes),
                         str(len(instance.caches)), str(consumers), algo,
                         str(seed), "", "", "", "",
                         f"error:{type(exc).__name__}"])
    return rep, rows


def _worker_count(flag: int | None) -> int:
    n = flag if flag else (os.cpu_count() or 1)
    cap = os.environ.get("EDGECACHE_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_sweep(cfg: SweepConfig, out_path: str, threads: int | None = None,
              resume: bool = True, echo=print) -> int:
    """Execute the sweep, resumably; returns the number of data rows."""
    existing = {}
    if resume and os.path.exists(out_path):
        with open(out_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["status"].startswith("aggregate"):
                    continue
                key = (int(row["side"]), int(row["consumers"]), row["algo"],
                       int(row["seed"]))
                existing[key] = [row[c] for c in CSV_COLUMNS]

    pending = []
    for side in cfg.sides:
        for consumers in cfg.consumers:
            for rep in range(cfg.reps):
                seed = cell_seed(cfg.base_seed, side, consumers, rep)
                missing = [a for a in cfg.algos
                           if (side, consumers, a, seed) not in existing]
                if missing:
                    pending.append((cfg, side, consumers, rep))

    echo(f"sweep: {len(pending)} cells to run "
         f"({len(existing)} rows already present)")
    rows = list(existing.values())
    workers = _worker_count(threads)
    if pending:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for _, cell_rows in pool.map(_sweep_cell, pending,
                                             chunksize=4):
                    rows.extend(cell_rows)
        else:
            for args in pending:
                _, cell_rows = _sweep_cell(args)
                rows.extend(cell_rows)

    rows.sort(key=lambda r: (int(r[0]), int(r[3]), r[4], int(r[5]) if r[5] else 0))
    agg = aggregate_rows(rows)
    tmp = out_path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(rows)
        w.writerows(agg)
    os.replace(tmp, out_path)
    echo(f"sweep: wrote {len(rows)} data rows + {len(agg)} aggregate rows "
         f"to {out_path}")
    return len(rows)


def aggregate_rows(rows) -> list:
    """Mean and quartile rows per (side, consumers, algo) cell."""
    cells = {}
    for r in rows:
        if not r[6]:  # failed runs carry no metrics
            continue
        key = (int(r[0]), int(r[3]), r[4])
        cells.setdefault(key, []).append(
            [float(r[6]), float(r[7] or "nan"), float(r[8] or "nan"),
             float(r[9] or "nan")])
    out = []
    for key in sorted(cells, key=lambda k: (k[0], k[1], k[2])):
        side, consumers, algo = key
        data = np.array(cells[key])
        for tag, vec in (("aggregate-mean", np.nanmean(data, axis=0)),
                         ("aggregate-q1", np.nanpercentile(data, 25, axis=0)),
                         ("aggregate-q3", np.nanpercentile(data, 75, axis=0))):
            out.append([str(side), "", "", str(consumers), algo, "-1",
                        repr(float(vec[0])), repr(float(vec[1])),
                        repr(float(vec[2])), repr(float(vec[3])), tag])
    return out


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------

def _parse_int_list(text: str) -> tuple:
    """'5,6,7' or '5:14' (inclusive range) -> tuple of ints."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in text.split(",") if x)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgecache",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a seeded grid instance")
    g.add_argument("--grid", "--side", dest="side", type=int, default=5)
    g.add_argument("--rows", type=int, default=None)
    g.add_argument("--cols", type=int, default=None)
    g.add_argument("--consumers", type=int, required=True)
    g.add_argument("--cache-frac", type=float, default=0.2)
    g.add_argument("--spacing", type=float, default=1.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--node-energy-wh", type=float, nargs=2, default=(30.0, 50.0))
    g.add_argument("--cache-energy-wh", type=float, nargs=2, default=(100.0, 150.0))
    g.add_argument("--rate-range", type=int, nargs=2, default=(1, 8))
    g.add_argument("--tau-s", type=float, default=1.0)
    g.add_argument("--l-hop-ms", type=float, default=28.0)
    g.add_argument("--l-max-ms", type=float, default=120.0)
    g.add_argument("--gamma", type=float, default=0.6)
    g.add_argument("--rho-m", type=float, default=3.0)
    g.add_argument("--eps-j", type=float, default=None)
    g.add_argument("--report-cost-j", type=float, default=None)
    g.add_argument("-o", "--out", required=True)

    r = sub.add_parser("run", help="run one algorithm on an instance file")
    r.add_argument("instance")
    r.add_argument("--algo", choices=ALGOS, required=True)
    r.add_argument("--k", type=int, default=DEFAULT_K)
    r.add_argument("--alpha-tau-h", type=float, default=DEFAULT_ALPHA_TAU_H)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--pfr-start", choices=("first", "random"), default="first")
    r.add_argument("--trace", default=None, help="write the event log here")
    r.add_argument("--paths-in", default=None)
    r.add_argument("--paths-out", default=None)
    r.add_argument("--validate", action="store_true",
                   help="re-check the delay bound on every consumer path")
    r.add_argument("--lp-dump", default=None,
                   help="write the LP model in plain text (lp algo only)")
    r.add_argument("--header", action="store_true")

    s = sub.add_parser("sweep", help="grid-size x consumer-count sweep")
    s.add_argument("--sides", type=_parse_int_list, default=(5, 6, 7, 8))
    s.add_argument("--consumers", type=_parse_int_list, default=tuple(range(5, 15)))
    s.add_argument("--reps", type=int, default=50)
    s.add_argument("--base-seed", type=int, default=0)
    s.add_argument("--algos", default="dca,dca+,pfr")
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--alpha-tau-h", type=float, default=DEFAULT_ALPHA_TAU_H)
    s.add_argument("--eps-j", type=float, default=SWEEP_EPS_J)
    s.add_argument("--report-cost-j", type=float, default=None)
    s.add_argument("--pfr-start", choices=("first", "random"), default="first")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--no-resume", action="store_true")
    s.add_argument("-o", "--out", required=True)
    return ap


def _cmd_generate(args) -> int:
    try:
        cfg = GridConfig(
            side=args.side, rows=args.rows, cols=args.cols,
            n_consumers=args.consumers, cache_frac=args.cache_frac,
            spacing_m=args.spacing,
            node_energy_wh=tuple(args.node_energy_wh),
            cache_energy_wh=tuple(args.cache_energy_wh),
            rate_range=tuple(args.rate_range),
            tau_s=args.tau_s, l_hop_ms=args.l_hop_ms, l_max_ms=args.l_max_ms,
            gamma=args.gamma, rho_m=args.rho_m,
            eps_j=args.eps_j, report_cost_j=args.report_cost_j,
        )
        instance = generate_instance(cfg, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    instance.save(args.out)
    print(f"wrote {instance.n_nodes}-node instance "
          f"({len(instance.caches)} caches, {len(instance.pieces)} pieces) "
          f"to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        instance = NetworkInstance.load(args.instance)
    except (OSError, InstanceError, ValueError, KeyError) as exc:
        print(f"error: cannot load instance: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path_sets = None
    if args.paths_in:
        path_sets = PathSets.load(args.paths_in)
    elif args.algo != "lp":
        path_sets = compute_path_sets(instance, args.k)
        if args.paths_out:
            path_sets.save(args.paths_out)
    if args.lp_dump:
        with open(args.lp_dump, "w", encoding="utf-8") as fh:
            fh.write(build_lp(instance).dump())
    try:
        summary, trace = run_algorithm(
            instance, args.algo, k=args.k, alpha_tau_h=args.alpha_tau_h,
            path_sets=path_sets, seed=args.seed, pfr_start=args.pfr_start,
            collect_events=bool(args.trace))
    except SchedulingError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.validate and args.algo != "lp":
        from .schedule import validate_schedule
        try:
            if args.algo == "dca":
                validate_schedule(instance, data_cache_access(instance, path_sets))
            print("validate: every consumer path satisfies the delay bound",
                  file=sys.stderr)
        except ValueError as exc:
            print(f"validate: FAILED: {exc}", file=sys.stderr)
            return 1
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.header:
        w.writerow(CSV_COLUMNS)
    w.writerow(summary_row(summary))
    if trace is not None and trace.status == "infeasible-midrun":
        return EXIT_MIDRUN
    if args.trace and trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            json.dump(trace_to_doc(trace), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        cfg = SweepConfig(
            sides=tuple(args.sides), consumers=tuple(args.consumers),
            reps=args.reps, base_seed=args.base_seed,
            algos=tuple(a.strip() for a in args.algos.split(",") if a.strip()),
            k=args.k, alpha_tau_h=args.alpha_tau_h, eps_j=args.eps_j,
            report_cost_j=args.report_cost_j, pfr_start=args.pfr_start,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run_sweep(cfg, args.out, threads=args.threads, resume=not args.no_resume)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "generate":
        return _cmd_generate(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
