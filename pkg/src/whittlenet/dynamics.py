"""Per-user queue dynamics, Poisson arrivals and the per-slot cost ledger."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class UserParams:
    """Static parameters of one transmitter-receiver pair.

    ``tx_cap=None`` means unrestricted transmission: a transmitting user
    empties its whole queue (effective cap equals the buffer size).
    """

    holding_cost: float = 20.0
    buffer_cap: int = 100
    tx_cap: int | None = None
    arrival_mean: float = 1.0
    energy_linear: float = 1.0
    energy_quadratic: float = 0.0

    def __post_init__(self):
        if self.holding_cost < 0:
            raise ValueError(f"holding_cost must be >= 0, got {self.holding_cost}")
        if self.buffer_cap < 1:
            raise ValueError(f"buffer_cap must be >= 1, got {self.buffer_cap}")
        if self.tx_cap is not None and self.tx_cap < 1:
            raise ValueError(f"tx_cap must be >= 1 or None, got {self.tx_cap}")
        if self.arrival_mean < 0:
            raise ValueError(f"arrival_mean must be >= 0, got {self.arrival_mean}")
        if self.energy_linear < 0 or self.energy_quadratic < 0:
            raise ValueError("energy coefficients must be >= 0")
        if self.energy_linear + self.energy_quadratic <= 0:
            raise ValueError("energy cost must be strictly increasing")

    @property
    def psi(self) -> int:
        """Effective per-slot transmission cap."""
        return self.buffer_cap if self.tx_cap is None else min(self.tx_cap, self.buffer_cap)


@dataclass(frozen=True)
class StepOutcome:
    x_next: int
    served: int
    dropped: int
    energy_cost: float
    holding_cost: float


def energy_cost(params: UserParams, z):
    """f(z) = e1*z + e2*z**2; works elementwise on arrays."""
    return params.energy_linear * z + params.energy_quadratic * z * z


def step_queue(x: int, active: bool, arrivals: int, params: UserParams) -> StepOutcome:
    """Advance one queue by one slot.

    Service happens before the new arrivals join, and the holding cost is
    charged on the slot-start backlog.
    """
    if not 0 <= x <= params.buffer_cap:
        raise ValueError(f"queue length {x} outside [0, {params.buffer_cap}]")
    served = min(x, params.psi) if active else 0
    pre_cap = x - served + arrivals
    x_next = min(pre_cap, params.buffer_cap)
    return StepOutcome(
        x_next=x_next,
        served=served,
        dropped=pre_cap - x_next,
        energy_cost=float(energy_cost(params, served)) if active else 0.0,
        holding_cost=params.holding_cost * x,
    )


def step_queues(x, active, arrivals, psi, buffer_cap):
    """Vectorized :func:`step_queue` over users; returns (x_next, served, dropped)."""
    served = np.where(active, np.minimum(x, psi), 0)
    pre_cap = x - served + arrivals
    x_next = np.minimum(pre_cap, buffer_cap)
    return x_next, served, pre_cap - x_next


def sample_arrivals(rng: np.random.Generator, mean: float, size=None):
    if mean < 0:
        raise ValueError(f"arrival mean must be >= 0, got {mean}")
    return rng.poisson(mean, size=size)


def arrival_distribution(mean: float, tail_mass_cutoff: float = 1e-8) -> np.ndarray:
    """Truncated, renormalized Poisson pmf ``mu[k]`` for ``k = 0..K``.

    K is the smallest support size whose cumulative mass reaches
    ``1 - tail_mass_cutoff``.
    """
    if mean < 0:
        raise ValueError(f"arrival mean must be >= 0, got {mean}")
    if not 0 < tail_mass_cutoff < 1:
        raise ValueError("tail_mass_cutoff must lie in (0, 1)")
    if mean == 0:
        return np.ones(1)
    K = int(stats.poisson.ppf(1.0 - tail_mass_cutoff, mean))
    while stats.poisson.cdf(K, mean) < 1.0 - tail_mass_cutoff:
        K += 1
    while K > 0 and stats.poisson.cdf(K - 1, mean) >= 1.0 - tail_mass_cutoff:
        K -= 1
    pmf = stats.poisson.pmf(np.arange(K + 1), mean)
    return pmf / pmf.sum()


def transition_matrix(params: UserParams, mu: np.ndarray, active) -> np.ndarray:
    """Row-stochastic ``(M+1, M+1)`` transition matrix of one queue.

    ``active`` is a boolean per state (or a scalar applied to every state).
    """
    M = params.buffer_cap
    states = np.arange(M + 1)
    act = np.broadcast_to(np.asarray(active, dtype=bool), states.shape)
    base = np.where(act, np.maximum(states - params.psi, 0), states)
    cols = np.minimum(base[:, None] + np.arange(len(mu))[None, :], M)
    P = np.zeros((M + 1, M + 1))
    rows = np.broadcast_to(states[:, None], cols.shape)
    np.add.at(P, (rows, cols), np.broadcast_to(mu, cols.shape))
    return P
