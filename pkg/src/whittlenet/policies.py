"""Per-slot schedulers.

Each policy is a small frozen config object.  ``policy.scheduler(graph,
users, rng)`` precomputes whatever the policy needs (index tables, an MWIS
solver) and returns a callable ``decide(queues, slot) -> SlotDecision``.
The module-level ``*_decide`` functions are the stateless single-slot rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .dynamics import energy_cost
from .topology import MWISSolver, NetworkGraph, max_weight_independent_set, rebuild_with_threshold
from .whittle import CLIQUE, IndexTable, SolveConfig, TaxModel, cached_index_table, graphical_scale


@dataclass(frozen=True)
class SlotDecision:
    """``active`` transmit successfully; ``attempted`` also contains users
    whose transmission collided (ALOHA only)."""

    active: frozenset
    attempted: frozenset

    @classmethod
    def of(cls, active) -> "SlotDecision":
        active = frozenset(int(i) for i in active)
        return cls(active, active)


def whittle_activate(g: NetworkGraph, tables, queues) -> SlotDecision:
    """Greedy local-minimum activation on the interference graph.

    Empty queues are passive.  In each round every undecided user whose
    index is below that of all its undecided neighbors becomes active, and
    their neighbors become passive.  Ties fall to the table tie-break key,
    then to the smaller user id.
    """
    n = g.n_users
    keys = [None] * n
    undecided = set()
    for i in range(n):
        x = int(queues[i])
        if x > 0:
            keys[i] = (*_table_key(tables[i], x), i)
            undecided.add(i)
    adj = g.neighbor_lists
    active = set()
    while undecided:
        winners = [
            i for i in undecided
            if all(keys[i] < keys[j] for j in adj[i] if j in undecided)
        ]
        for i in winners:
            active.add(i)
        undecided.difference_update(winners)
        for i in winners:
            undecided.difference_update(adj[i])
    return SlotDecision.of(active)


def _table_key(table, x):
    if isinstance(table, IndexTable):
        return table.key(x)
    return (float(table[x]), 0.0)


def aloha_decide(g: NetworkGraph, queues, p: float, rng: np.random.Generator) -> SlotDecision:
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    queues = np.asarray(queues)
    coins = rng.random(g.n_users) < p
    attempt = coins & (queues > 0)
    collided = (g.adjacency & attempt[None, :]).any(axis=1)
    ok = attempt & ~collided
    return SlotDecision(
        frozenset(np.flatnonzero(ok).tolist()),
        frozenset(np.flatnonzero(attempt).tolist()),
    )


def mws_decide(g: NetworkGraph, queues, solver=None) -> SlotDecision:
    solver = solver or (lambda w: max_weight_independent_set(g, w))
    return SlotDecision.of(solver(np.asarray(queues, dtype=float)))


def lyapunov_decide(g: NetworkGraph, queues, theta: float, users, solver=None) -> SlotDecision:
    """Max-weight independent set on ``x*z - theta*f(z)`` with ``z = min(x, psi)``."""
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    x = np.asarray(queues, dtype=float)
    z = np.minimum(x, [u.psi for u in users])
    power = np.array([energy_cost(u, zi) for u, zi in zip(users, z)], dtype=float)
    w = x * z - theta * power
    solver = solver or (lambda w: max_weight_independent_set(g, w))
    return SlotDecision.of(solver(w))


# ---------------------------------------------------------------- policies


@dataclass(frozen=True)
class WhittlePolicy:
    """Index policy; ``model`` is ``clique`` or ``graphical``.

    For the graphical model the tax scales come from the graph built with
    ``d_thresh_computation`` (default: the transmission graph itself).
    """

    model: str = "clique"
    d_thresh_computation: float | None = None
    solve: SolveConfig = field(default_factory=lambda: SolveConfig(degenerate="limit"))
    name: str = ""
    # index policies see the users' own caps; see experiments.build_instance
    index_based: ClassVar[bool] = True

    def __post_init__(self):
        if self.model not in ("clique", "graphical"):
            raise ValueError(f"unknown index model {self.model!r}")
        if not self.name:
            label = f"{self.model}_whittle"
            if self.d_thresh_computation is not None:
                label += f"[d={self.d_thresh_computation!r}]"
            object.__setattr__(self, "name", label)

    def tax_models(self, g: NetworkGraph) -> list[TaxModel]:
        if self.model == "clique":
            return [CLIQUE] * g.n_users
        if self.d_thresh_computation is None:
            comp, kind = g, "graphical"
        else:
            comp, kind = rebuild_with_threshold(g.positions, self.d_thresh_computation), "radius"
        return [graphical_scale(comp, i, kind) for i in range(g.n_users)]

    def tables(self, g: NetworkGraph, users) -> list[IndexTable]:
        out = []
        for i, (u, tm) in enumerate(zip(users, self.tax_models(g))):
            t = cached_index_table(u, tm, self.solve)
            out.append(IndexTable(i, tm, t.values, t.tiebreak))
        return out

    def scheduler(self, g: NetworkGraph, users, rng=None):
        tables = self.tables(g, users)
        return lambda queues, slot: whittle_activate(g, tables, queues)


@dataclass(frozen=True)
class AlohaPolicy:
    p: float = 0.5
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.name:
            object.__setattr__(self, "name", f"aloha[p={self.p!r}]")

    def scheduler(self, g: NetworkGraph, users, rng):
        return lambda queues, slot: aloha_decide(g, queues, self.p, rng)


@dataclass(frozen=True)
class MWSPolicy:
    name: str = "mws"

    def scheduler(self, g: NetworkGraph, users, rng=None):
        solver = MWISSolver(g)
        return lambda queues, slot: mws_decide(g, queues, solver)


@dataclass(frozen=True)
class LyapunovPolicy:
    theta: float = 200.0
    name: str = ""

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if not self.name:
            object.__setattr__(self, "name", f"lyapunov[theta={self.theta!r}]")

    def scheduler(self, g: NetworkGraph, users, rng=None):
        solver = MWISSolver(g)
        users = list(users)
        return lambda queues, slot: lyapunov_decide(g, queues, self.theta, users, solver)


@dataclass(frozen=True)
class IdlePolicy:
    """Never transmits; a reference point for cost comparisons."""

    name: str = "idle"

    def scheduler(self, g: NetworkGraph, users, rng=None):
        empty = SlotDecision(frozenset(), frozenset())
        return lambda queues, slot: empty
