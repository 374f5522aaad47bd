"""Experiment orchestration over seeds and policies, with CSV output.

Every (policy, seed) run is independent.  Runs fan out to a process pool
whose size comes from the ``WHITTLENET_WORKERS`` environment variable
(default 1, i.e. in-process); rows are always ordered by key.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .dynamics import UserParams
from .policies import WhittlePolicy
from .sim import SimConfig, build_arrival_regime, build_psi_regime, run_simulation, seed_streams
from .topology import NetworkGraph, generate_geometric_graph, rebuild_with_threshold
from .whittle import TaxModel, build_index_table

WORKERS_ENV = "WHITTLENET_WORKERS"
COMPARISON_COLUMNS = ("experiment_id", "policy", "seed", "avg_cost", "avg_drops",
                      "horizon", "warmup", "n_seeds", "avg_cost_se", "avg_drops_se")
SWEEP_COLUMNS = ("experiment_id", "d_thresh_computation", "n_seeds", "avg_cost",
                 "avg_cost_se", "avg_drops", "avg_drops_se", "horizon", "warmup")


class RunError(RuntimeError):
    """A single run failed; carries the policy name and seed."""

    def __init__(self, policy: str, seed: int, cause: BaseException):
        super().__init__(f"policy {policy!r}, seed {seed}: {cause}")
        self.policy = policy
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class Instance:
    graph: NetworkGraph
    # caps as drawn by the regime (Whittle policies)
    users: tuple
    # caps seen by the baselines; restricted draws unless configured otherwise
    baseline_users: tuple

    def users_for(self, policy) -> tuple:
        return self.users if getattr(policy, "index_based", False) else self.baseline_users


def build_instance(cfg: ExperimentConfig, seed: int) -> Instance:
    """Topology and user parameters for one seed.

    ``topology.seed`` pins the layout across seeds; otherwise it is drawn
    from the seed's topology substream.
    """
    t, u = cfg.topology, cfg.users
    streams = seed_streams(seed, t.n_users)
    if t.positions is not None:
        g = rebuild_with_threshold(np.array(t.positions), t.d_threshold)
    else:
        topo_seed = t.seed if t.seed is not None else streams["topology"]
        g = generate_geometric_graph(t.n_users, t.d_threshold, topo_seed)

    if u.explicit is not None:
        users = tuple(UserParams(**dict(e)) for e in u.explicit)
        return Instance(g, users, users)

    rng = np.random.default_rng(streams["regime"])
    own, base = [], []
    for _ in range(t.n_users):
        mean = build_arrival_regime(u.arrival_regime, u.buffer_cap, rng, u.integer_arrival_means)
        restricted = build_psi_regime("restricted", u.buffer_cap, rng)
        cap = restricted if u.psi_regime == "restricted" else None
        common = dict(holding_cost=u.holding_cost, buffer_cap=u.buffer_cap, arrival_mean=mean,
                      energy_linear=u.energy_linear, energy_quadratic=u.energy_quadratic)
        own.append(UserParams(tx_cap=cap, **common))
        base.append(UserParams(tx_cap=restricted if u.baselines_restricted else cap, **common))
    return Instance(g, tuple(own), tuple(base))


def sim_config(cfg: ExperimentConfig, seed: int, trace: bool = False) -> SimConfig:
    return SimConfig(horizon=cfg.sim.horizon, warmup=cfg.sim.warmup, master_seed=seed,
                     collision_energy=cfg.sim.collision_energy, trace=trace)


def _run_one(job):
    cfg, policy, seed, trace = job
    try:
        inst = build_instance(cfg, seed)
        return run_simulation(inst.graph, inst.users_for(policy), policy,
                              sim_config(cfg, seed, trace))
    except Exception as exc:
        raise RunError(policy.name, seed, exc) from exc


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_jobs(jobs) -> list:
    """Results in job order, serially or on a process pool."""
    jobs = list(jobs)
    n = min(_workers(), len(jobs))
    if n <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


def mean_se(values) -> tuple[float, float]:
    """Sample mean and standard error (0 for a single value)."""
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def run_comparison(cfg: ExperimentConfig, policies=None, seeds=None, trace: bool = False):
    """One row per (policy, seed) plus one aggregate row (``seed="all"``) per policy.

    Returns ``(rows, metrics)`` where ``metrics[(policy_name, seed)]`` holds
    the full :class:`~whittlenet.sim.Metrics`.
    """
    policies = list(policies if policies is not None else cfg.build_policies())
    seeds = list(seeds if seeds is not None else cfg.sim.seeds)
    if not policies or not seeds:
        raise ValueError("need at least one policy and one seed")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ValueError(f"policy names must be unique, got {names}")
    jobs = [(cfg, p, s, trace) for p in policies for s in seeds]
    results = run_jobs(jobs)
    metrics = {(p.name, s): m for (_, p, s, _), m in zip(jobs, results)}
    base = {"experiment_id": cfg.experiment_id, "horizon": cfg.sim.horizon,
            "warmup": cfg.sim.warmup}
    rows = []
    for p in policies:
        costs, drops = [], []
        for s in seeds:
            m = metrics[(p.name, s)]
            costs.append(m.avg_cost_per_slot)
            drops.append(m.avg_drops_per_slot)
            rows.append({**base, "policy": p.name, "seed": s, "avg_cost": m.avg_cost_per_slot,
                         "avg_drops": m.avg_drops_per_slot, "n_seeds": 1})
        c_mean, c_se = mean_se(costs)
        d_mean, d_se = mean_se(drops)
        rows.append({**base, "policy": p.name, "seed": "all", "avg_cost": c_mean,
                     "avg_drops": d_mean, "n_seeds": len(seeds), "avg_cost_se": c_se,
                     "avg_drops_se": d_se})
    return rows, metrics


def run_dthresh_sweep(cfg: ExperimentConfig, values, seeds=None):
    """Graphical-index policy with the index graph built at each distance;
    transmissions always use the configured interference graph."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one value")
    if any(v <= 0 for v in values):
        raise ValueError(f"sweep distances must be positive, got {values}")
    seeds = list(seeds if seeds is not None else cfg.sim.seeds)
    policies = [WhittlePolicy("graphical", v, cfg.solve, name=f"graphical_whittle[d={v!r}]")
                for v in values]
    rows, _ = run_comparison(cfg, policies, seeds)
    agg = [r for r in rows if r["seed"] == "all"]
    return [
        {"experiment_id": cfg.experiment_id, "d_thresh_computation": v,
         "n_seeds": r["n_seeds"], "avg_cost": r["avg_cost"], "avg_cost_se": r["avg_cost_se"],
         "avg_drops": r["avg_drops"], "avg_drops_se": r["avg_drops_se"],
         "horizon": r["horizon"], "warmup": r["warmup"]}
        for v, r in zip(values, agg)
    ]


def index_curves(holding_costs, base: UserParams, model: TaxModel, solve) -> list[dict]:
    """Rows ``(C, x, index)`` for ``x = 1..M`` and every requested C."""
    rows = []
    for C in holding_costs:
        params = UserParams(holding_cost=float(C), buffer_cap=base.buffer_cap,
                            tx_cap=base.tx_cap, arrival_mean=base.arrival_mean,
                            energy_linear=base.energy_linear,
                            energy_quadratic=base.energy_quadratic)
        table = build_index_table(params, model, solve)
        rows.extend({"C": float(C), "x": x, "index": float(table.values[x])}
                    for x in range(1, base.buffer_cap + 1))
    return rows


def trace_csv(metrics, warmup: int) -> str:
    rows = [{"slot": warmup + k, "cost": float(c), "drops": float(d)}
            for k, (c, d) in enumerate(zip(metrics.cost_series, metrics.drop_series))]
    return rows_to_csv(rows, ("slot", "cost", "drops"))
