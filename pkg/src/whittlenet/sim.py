"""Slotted-time simulation of a network under one scheduling policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import step_queues
from .topology import NetworkGraph

ARRIVAL_REGIMES = {"default": 10, "small": 15, "large": 6}
PSI_REGIMES = ("restricted", "unrestricted")


@dataclass(frozen=True)
class SimConfig:
    """``horizon`` counts all slots, warmup included."""

    horizon: int = 11_000
    warmup: int = 1_000
    master_seed: int = 0
    initial_queues: tuple | None = None
    collision_energy: bool = True
    trace: bool = False

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if not 0 <= self.warmup <= self.horizon:
            raise ValueError(f"warmup must lie in [0, horizon], got {self.warmup}")


@dataclass
class Metrics:
    avg_cost_per_slot: float
    avg_drops_per_slot: float
    avg_holding_per_slot: float
    avg_energy_per_slot: float
    per_user_cost: np.ndarray
    per_user_drops: np.ndarray
    # whole-run totals (warmup included), for conservation checks
    arrivals_total: np.ndarray
    served_total: np.ndarray
    dropped_total: np.ndarray
    initial_queues: np.ndarray
    final_queues: np.ndarray
    cost_series: np.ndarray | None = None
    drop_series: np.ndarray | None = None


def seed_streams(master_seed: int, n_users: int) -> dict:
    """Independent substreams derived from one master seed.

    Arrival streams are per user and never touched by a policy, so every
    policy sees identical arrival sample paths for the same seed.
    """
    root = np.random.SeedSequence(master_seed)
    topo, regime, arrivals, policy = root.spawn(4)
    return {
        "topology": topo,
        "regime": regime,
        "arrivals": arrivals.spawn(n_users),
        "policy": policy,
    }


def generate_arrivals(users, horizon: int, streams) -> np.ndarray:
    """``(horizon, n_users)`` Poisson arrival counts, one stream per user."""
    out = np.zeros((horizon, len(users)), dtype=np.int64)
    for i, (u, ss) in enumerate(zip(users, streams)):
        out[:, i] = np.random.default_rng(ss).poisson(u.arrival_mean, horizon)
    return out


def build_arrival_regime(regime: str, M: int, rng: np.random.Generator,
                         integer: bool = False) -> float:
    """Arrival mean drawn uniformly from ``[1, M / k]`` for the regime's k."""
    try:
        k = ARRIVAL_REGIMES[regime]
    except KeyError:
        raise ValueError(f"unknown arrival regime {regime!r}") from None
    hi = M / k
    if integer:
        return float(rng.integers(1, int(np.floor(hi)) + 1))
    return float(rng.uniform(1.0, hi))


def build_psi_regime(regime: str, M: int, rng: np.random.Generator) -> int | None:
    """Restricted: cap uniform on ``{1, ..., M // 5}``; unrestricted: ``None``.

    The restricted draw is consumed from ``rng`` in both cases so that the
    restricted caps of a seed do not depend on the regime.
    """
    if regime not in PSI_REGIMES:
        raise ValueError(f"unknown transmission regime {regime!r}")
    cap = int(rng.integers(1, max(1, M // 5) + 1))
    return cap if regime == "restricted" else None


def run_simulation(g: NetworkGraph, users, policy, cfg: SimConfig = SimConfig(),
                   arrivals=None) -> Metrics:
    """Simulate ``cfg.horizon`` slots and average costs over the post-warmup part.

    ``arrivals`` may supply a fixed ``(horizon, n_users)`` arrival script in
    place of the seeded Poisson draws.
    """
    users = list(users)
    n = g.n_users
    if len(users) != n:
        raise ValueError(f"{len(users)} user parameter sets for {n} users")
    N = cfg.horizon
    streams = seed_streams(cfg.master_seed, n)
    if arrivals is None:
        arrivals = generate_arrivals(users, N, streams["arrivals"])
    else:
        arrivals = np.asarray(arrivals, dtype=np.int64).reshape(N, n)
    decide = policy.scheduler(g, users, np.random.default_rng(streams["policy"]))

    psi = np.array([u.psi for u in users])
    cap = np.array([u.buffer_cap for u in users])
    C = np.array([u.holding_cost for u in users], dtype=float)
    e1 = np.array([u.energy_linear for u in users], dtype=float)
    e2 = np.array([u.energy_quadratic for u in users], dtype=float)

    if cfg.initial_queues is None:
        x = np.zeros(n, dtype=np.int64)
    else:
        x = np.array(cfg.initial_queues, dtype=np.int64)
        if x.shape != (n,) or (x < 0).any() or (x > cap).any():
            raise ValueError("initial_queues must give one in-range length per user")
    x0 = x.copy()

    holding = np.zeros((N, n))
    energy = np.zeros((N, n))
    served_log = np.zeros((N, n), dtype=np.int64)
    dropped_log = np.zeros((N, n), dtype=np.int64)
    for t in range(N):
        dec = decide(x, t)
        active = np.zeros(n, dtype=bool)
        active[list(dec.active)] = True
        charged = active.copy()
        if cfg.collision_energy and dec.attempted != dec.active:
            charged[list(dec.attempted)] = True
        z = np.minimum(x, psi)
        energy[t] = np.where(charged, e1 * z + e2 * z * z, 0.0)
        holding[t] = C * x
        x, served, dropped = step_queues(x, active, arrivals[t], psi, cap)
        served_log[t] = served
        dropped_log[t] = dropped

    w = cfg.warmup
    measured = N - w
    cost = holding[w:] + energy[w:]
    cost_series = cost.sum(axis=1)
    drop_series = dropped_log[w:].sum(axis=1).astype(float)

    def avg(a):
        return float(a.sum() / measured) if measured else 0.0

    return Metrics(
        avg_cost_per_slot=avg(cost_series),
        avg_drops_per_slot=avg(drop_series),
        avg_holding_per_slot=avg(holding[w:]),
        avg_energy_per_slot=avg(energy[w:]),
        per_user_cost=cost.sum(axis=0) / measured if measured else np.zeros(n),
        per_user_drops=dropped_log[w:].sum(axis=0) / measured if measured else np.zeros(n),
        arrivals_total=arrivals.sum(axis=0),
        served_total=served_log.sum(axis=0),
        dropped_total=dropped_log.sum(axis=0),
        initial_queues=x0,
        final_queues=x,
        cost_series=cost_series if cfg.trace else None,
        drop_series=drop_series if cfg.trace else None,
    )
