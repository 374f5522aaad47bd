"""Random geometric interference graphs and exact independent-set search.

Users sit at points of the unit square; two users interfere iff their
distance is strictly below the threshold.  Independent sets are handled as
Python int bitmasks, which keeps the branch-and-bound searches compact and
fast for the few-dozen-node graphs used in the experiments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Immutable interference graph.

    ``positions`` is an ``(n, 2)`` float array and ``adjacency`` an
    ``(n, n)`` symmetric boolean array with a false diagonal.  Both arrays
    are made read-only on construction.
    """

    positions: np.ndarray
    adjacency: np.ndarray
    d_threshold: float
    _masks: tuple = field(init=False, repr=False)
    _lists: tuple = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        adj = np.array(self.adjacency, dtype=bool)
        n = pos.shape[0]
        if n == 0:
            raise ValueError("graph needs at least one user")
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} users")
        if not np.array_equal(adj, adj.T) or adj.diagonal().any():
            raise ValueError("adjacency must be symmetric and irreflexive")
        pos.setflags(write=False)
        adj.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "adjacency", adj)
        masks = tuple(
            sum(1 << int(j) for j in np.flatnonzero(adj[i])) for i in range(n)
        )
        object.__setattr__(self, "_masks", masks)
        lists = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(n))
        object.__setattr__(self, "_lists", lists)

    @property
    def n_users(self) -> int:
        return self.positions.shape[0]

    @property
    def neighbor_masks(self) -> tuple:
        """Per-node neighbor bitmask (bit j set iff j is adjacent)."""
        return self._masks

    @property
    def neighbor_lists(self) -> tuple:
        return self._lists

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(i), int(j)) for i, j in zip(ii, jj)]

    def is_independent(self, nodes: Iterable[int]) -> bool:
        nodes = list(nodes)
        mask = _to_mask(nodes)
        return all(not (self._masks[v] & mask) for v in nodes)

    def __eq__(self, other):
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return (
            self.d_threshold == other.d_threshold
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.adjacency, other.adjacency)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "d_threshold": float(self.d_threshold),
            "positions": [[float(x), float(y)] for x, y in self.positions],
            "edges": [[i, j] for i, j in self.edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkGraph":
        n = int(doc["n_users"])
        positions = np.asarray(doc["positions"], dtype=float).reshape(-1, 2)
        if positions.shape[0] != n:
            raise ValueError(f"n_users={n} but {positions.shape[0]} positions given")
        adj = np.zeros((n, n), dtype=bool)
        for i, j in doc.get("edges", []):
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"bad edge ({i}, {j})")
            adj[i, j] = adj[j, i] = True
        return cls(positions, adj, float(doc["d_threshold"]))

    @classmethod
    def from_json(cls, text: str) -> "NetworkGraph":
        return cls.from_dict(json.loads(text))


def _to_mask(nodes: Iterable[int]) -> int:
    m = 0
    for v in nodes:
        m |= 1 << int(v)
    return m


def _from_mask(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _distance_adjacency(positions: np.ndarray, d: float) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    adj = dist < d
    np.fill_diagonal(adj, False)
    return adj


def rebuild_with_threshold(positions, d: float) -> NetworkGraph:
    """Same positions, adjacency recomputed for distance threshold ``d``."""
    if d <= 0:
        raise ValueError(f"distance threshold must be positive, got {d}")
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if pos.shape[0] == 0:
        raise ValueError("positions must be nonempty")
    return NetworkGraph(pos, _distance_adjacency(pos, d), float(d))


def generate_geometric_graph(n: int, d_threshold: float, seed=None) -> NetworkGraph:
    """Place ``n`` users uniformly on the unit square and link close pairs.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1:
        raise ValueError(f"need at least one user, got n={n}")
    if d_threshold <= 0:
        raise ValueError(f"distance threshold must be positive, got {d_threshold}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positions = rng.random((n, 2))
    return rebuild_with_threshold(positions, d_threshold)


def neighbors(g: NetworkGraph, i: int) -> frozenset[int]:
    if not 0 <= i < g.n_users:
        raise ValueError(f"user id {i} out of range for {g.n_users} users")
    return frozenset(int(j) for j in np.flatnonzero(g.adjacency[i]))


def _check_subset(g: NetworkGraph, subset) -> int:
    mask = 0
    for v in subset:
        if not 0 <= v < g.n_users:
            raise ValueError(f"user id {v} out of range for {g.n_users} users")
        mask |= 1 << int(v)
    return mask


def max_independent_set_size(g: NetworkGraph, subset=None) -> int:
    """Cardinality of a maximum independent set of the induced subgraph."""
    cand = _check_subset(g, range(g.n_users) if subset is None else subset)
    masks = g.neighbor_masks
    best = 0

    def search(cand: int, size: int):
        nonlocal best
        if size + cand.bit_count() <= best:
            return
        # Nodes of degree <= 1 inside cand can always be taken greedily.
        v_max, d_max = -1, -1
        rest = cand
        while rest:
            low = rest & -rest
            v = low.bit_length() - 1
            rest ^= low
            d = (masks[v] & cand).bit_count()
            if d <= 1:
                search(cand & ~masks[v] & ~low, size + 1)
                return
            if d > d_max:
                v_max, d_max = v, d
        if d_max < 0:
            best = max(best, size)
            return
        bit = 1 << v_max
        search(cand & ~masks[v_max] & ~bit, size + 1)
        search(cand & ~bit, size)

    search(cand, 0)
    return best


def weight_sum(weights: Sequence[float], nodes: Iterable[int]) -> float:
    """Order-independent (exactly rounded) sum of node weights."""
    return math.fsum(float(weights[v]) for v in nodes)


def _better(w: float, members: tuple, best_w: float, best_members: tuple) -> bool:
    return w > best_w or (w == best_w and members < best_members)


def max_weight_independent_set(g: NetworkGraph, weights) -> frozenset[int]:
    """Exact maximum-weight independent set by branch and bound.

    Nodes with nonpositive weight are never included.  Among optimal sets
    the lexicographically smallest sorted member tuple is returned.
    """
    w = [float(x) for x in weights]
    if len(w) != g.n_users:
        raise ValueError(f"expected {g.n_users} weights, got {len(w)}")
    masks = g.neighbor_masks
    cand = _to_mask(v for v in range(g.n_users) if w[v] > 0)
    best_w, best_members = 0.0, ()
    slack = 1e-9 * (1.0 + sum(x for x in w if x > 0))

    def search(cand: int, chosen: list):
        nonlocal best_w, best_members
        if not cand:
            members = tuple(sorted(chosen))
            total = weight_sum(w, members)
            if _better(total, members, best_w, best_members):
                best_w, best_members = total, members
            return
        free = _from_mask(cand)
        cur = sum(w[v] for v in chosen)
        if cur + sum(w[v] for v in free) < best_w - slack:
            return
        v_max, d_max = free[0], -1
        for v in free:
            d = (masks[v] & cand).bit_count()
            if d > d_max:
                v_max, d_max = v, d
        if d_max == 0:
            search(0, chosen + free)
            return
        bit = 1 << v_max
        chosen.append(v_max)
        search(cand & ~masks[v_max] & ~bit, chosen)
        chosen.pop()
        search(cand & ~bit, chosen)

    search(cand, [])
    return frozenset(best_members)


def maximal_independent_sets(g: NetworkGraph, limit: int | None = None) -> list[int] | None:
    """All maximal independent sets as bitmasks (Bron-Kerbosch with pivoting
    on the complement graph).  Returns ``None`` once more than ``limit`` are
    found."""
    n = g.n_users
    full = (1 << n) - 1
    comp = [full & ~g.neighbor_masks[v] & ~(1 << v) for v in range(n)]
    out: list[int] = []

    def expand(r: int, p: int, x: int) -> bool:
        if not p and not x:
            out.append(r)
            return limit is None or len(out) <= limit
        pu = p | x
        pivot = max(_from_mask(pu), key=lambda u: (p & comp[u]).bit_count())
        for v in _from_mask(p & ~comp[pivot]):
            bit = 1 << v
            if not expand(r | bit, p & comp[v], x & comp[v]):
                return False
            p &= ~bit
            x |= bit
        return True

    if not expand(0, full, 0):
        return None
    return out


class MWISSolver:
    """Repeated MWIS queries on one fixed graph.

    Enumerates the maximal independent sets once; every MWIS with positive
    weights is the positive part of one of them, so a query reduces to a
    matrix-vector product.  Falls back to branch and bound when the graph
    has too many maximal sets.
    """

    def __init__(self, g: NetworkGraph, max_sets: int = 20000):
        self.graph = g
        sets = maximal_independent_sets(g, limit=max_sets)
        if sets is None:
            self._incidence = None
        else:
            inc = np.zeros((len(sets), g.n_users), dtype=float)
            for k, m in enumerate(sets):
                inc[k, _from_mask(m)] = 1.0
            self._incidence = inc

    def __call__(self, weights) -> frozenset[int]:
        w = np.asarray(weights, dtype=float)
        if self._incidence is None:
            return max_weight_independent_set(self.graph, w)
        pos = np.where(w > 0, w, 0.0)
        scores = self._incidence @ pos
        top = scores.max()
        if top <= 0:
            return frozenset()
        near = np.flatnonzero(scores >= top - 1e-9 * (1.0 + top))
        best_w, best_members = -1.0, ()
        for k in near:
            members = tuple(int(v) for v in np.flatnonzero(self._incidence[k] * (w > 0)))
            total = weight_sum(w, members)
            if _better(total, members, best_w, best_members):
                best_w, best_members = total, members
        return frozenset(best_members)
