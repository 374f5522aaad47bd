"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence,
3 an ``oracle-check`` comparison outside tolerance.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .dynamics import UserParams, arrival_distribution
from .experiments import (COMPARISON_COLUMNS, SWEEP_COLUMNS, RunError, build_instance,
                          index_curves, rows_to_csv, run_comparison, run_dthresh_sweep,
                          trace_csv)
from .oracle import OracleError, joint_optimal_tiny, verify_index_bisection
from .policies import WhittlePolicy
from .topology import NetworkGraph
from .whittle import CLIQUE, IndexConvergenceError, SolveConfig, SolverError, compute_index, tables_to_csv

log = logging.getLogger("whittlenet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
DEFAULT_SWEEP = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4)
_NUMERIC_ERRORS = (IndexConvergenceError, SolverError, OracleError)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def load_config(args) -> ExperimentConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("", f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be >= 0")
        cfg = replace(cfg, sim=replace(cfg.sim, seeds=(args.seed,)))
    if args.out:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    if args.trace:
        cfg = replace(cfg, output=replace(cfg.output, trace=True))
    return cfg


def _write(cfg: ExperimentConfig, name: str, text: str) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    print(f"wrote {path}")
    return path


def cmd_gen_graph(cfg, args):
    seed = cfg.sim.seeds[0]
    g = build_instance(cfg, seed).graph
    _write(cfg, f"graph_seed{seed}.json", g.to_json() + "\n")
    print(f"{g.n_users} users, {len(g.edges())} edges, d_threshold={g.d_threshold!r}")


def cmd_indices(cfg, args):
    if args.curves:
        u = cfg.users
        base = UserParams(holding_cost=u.holding_cost, buffer_cap=u.buffer_cap,
                          arrival_mean=args.arrival_mean, energy_linear=u.energy_linear,
                          energy_quadratic=u.energy_quadratic)
        rows = index_curves(args.holding_costs, base, CLIQUE, cfg.solve)
        _write(cfg, "index_curves.csv", rows_to_csv(rows, ("C", "x", "index")))
        return
    seed = cfg.sim.seeds[0]
    inst = build_instance(cfg, seed)
    chunks = []
    for p in cfg.build_policies():
        if isinstance(p, WhittlePolicy):
            text = tables_to_csv(p.tables(inst.graph, inst.users))
            chunks.append(text if not chunks else text.split("\n", 1)[1])
    if not chunks:
        raise ConfigError("policies", "no whittle policy configured")
    _write(cfg, f"indices_seed{seed}.csv", "".join(chunks))


def _emit_runs(cfg, rows, metrics, name):
    _write(cfg, name, rows_to_csv(rows, COMPARISON_COLUMNS))
    if cfg.output.trace:
        for (policy, seed), m in sorted(metrics.items()):
            _write(cfg, f"trace_{_safe(policy)}_seed{seed}.csv", trace_csv(m, cfg.sim.warmup))


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def cmd_simulate(cfg, args):
    seed = cfg.sim.seeds[0]
    rows, metrics = run_comparison(cfg, seeds=[seed], trace=cfg.output.trace)
    rows = [r for r in rows if r["seed"] != "all"]
    _emit_runs(cfg, rows, metrics, f"simulate_seed{seed}.csv")
    for r in rows:
        print(f"{r['policy']:<28} cost {r['avg_cost']:12.3f}  drops {r['avg_drops']:8.4f}")


def cmd_compare(cfg, args):
    rows, metrics = run_comparison(cfg, trace=cfg.output.trace)
    _emit_runs(cfg, rows, metrics, f"compare_{_safe(cfg.experiment_id)}.csv")
    for r in rows:
        if r["seed"] == "all":
            print(f"{r['policy']:<28} cost {r['avg_cost']:12.3f} ± {r['avg_cost_se']:9.3f}"
                  f"  drops {r['avg_drops']:8.4f} ± {r['avg_drops_se']:.4f}  (n={r['n_seeds']})")


def cmd_sweep(cfg, args):
    rows = run_dthresh_sweep(cfg, args.values)
    _write(cfg, f"sweep_{_safe(cfg.experiment_id)}.csv", rows_to_csv(rows, SWEEP_COLUMNS))
    for r in rows:
        print(f"d={r['d_thresh_computation']:<6} cost {r['avg_cost']:12.3f} ± "
              f"{r['avg_cost_se']:9.3f}  drops {r['avg_drops']:8.4f}")


def cmd_oracle_check(cfg, args):
    """Index vs bisection on small random queues, plus the tiny joint optimum."""
    rng = np.random.default_rng(cfg.sim.seeds[0])
    solve = SolveConfig(gamma=cfg.solve.gamma, tol=cfg.solve.tol,
                        max_iters=cfg.solve.max_iters, degenerate="raise")
    worst = 0.0
    for k in range(args.instances):
        M = int(rng.integers(2, 16))
        params = UserParams(holding_cost=float(rng.uniform(1, 100)), buffer_cap=M,
                            arrival_mean=float(rng.uniform(0.2, M / 5)),
                            energy_linear=float(rng.uniform(0.1, 5)))
        mu = arrival_distribution(params.arrival_mean)
        x = int(rng.integers(1, M))
        fast = compute_index(params, mu, x, CLIQUE, solve)
        ref = verify_index_bisection(params, mu, x, tol=1e-7)
        worst = max(worst, abs(fast - ref))
        print(f"instance {k}: M={M} x={x} index={fast:.6f} bisection={ref:.6f} "
              f"diff={abs(fast - ref):.2e}")
    g = NetworkGraph(np.array([[0.0, 0.0], [0.1, 0.0]]), np.array([[0, 1], [1, 0]], bool), 0.6)
    users = [UserParams(holding_cost=1.0, buffer_cap=3, arrival_mean=m) for m in (0.5, 0.7)]
    print(f"two-user edge instance: optimal average cost {joint_optimal_tiny(g, users):.6f}")
    ok = worst <= args.tolerance
    print(f"max index discrepancy {worst:.2e} ({'ok' if ok else 'FAILED'}, tol {args.tolerance})")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (default: built-in defaults)")
    common.add_argument("--seed", type=int, help="run this single seed instead of sim.seeds")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--trace", action="store_true", help="also write per-slot trace CSVs")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="whittlenet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-graph", parents=[common], help="write the interference graph as JSON")
    p = sub.add_parser("indices", parents=[common], help="index tables or index-vs-C curves")
    p.add_argument("--curves", action="store_true", help="emit (C, x, index) curves")
    p.add_argument("--holding-costs", type=_floats, default=[20.0, 50.0, 100.0])
    p.add_argument("--arrival-mean", type=float, default=5.5)
    sub.add_parser("simulate", parents=[common], help="every policy, one seed")
    sub.add_parser("compare", parents=[common], help="every policy over all seeds")
    p = sub.add_parser("sweep", parents=[common], help="index-graph distance sweep")
    p.add_argument("--values", type=_floats, default=list(DEFAULT_SWEEP))
    p = sub.add_parser("oracle-check", parents=[common], help="cross-check against oracles")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    return ap


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "indices": cmd_indices,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        code = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as exc:
        if isinstance(exc.cause, _NUMERIC_ERRORS):
            print(f"numerical error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        raise
    except _NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
