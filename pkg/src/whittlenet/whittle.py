"""Whittle-like index tables for single queues under a passivity tax.

For a threshold ``x`` the single-queue chain is active on ``{y >= x}`` and
passive below, where every passive slot pays ``tax * scale``.  The relative
values ``V`` and average cost ``beta`` of that policy solve a square linear
system (Poisson equation plus ``V(0) = 0``).  The index at ``x`` is the tax
at which the active and passive one-step evaluations at ``x`` coincide; it
is found by the damped iteration

    tax <- tax + gamma * (active_eval(x) - passive_eval(x)),

re-solving the system at each new tax.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import UserParams, arrival_distribution, energy_cost, transition_matrix
from .topology import NetworkGraph, max_independent_set_size, neighbors


class SolverError(RuntimeError):
    """The threshold linear system could not be solved."""


class IndexConvergenceError(RuntimeError):
    """The index iteration did not settle within the iteration cap."""

    def __init__(self, message, *, x=None, last_tax=None, bracket=None,
                 slope=None, intercept=None):
        super().__init__(message)
        self.x = x
        self.last_tax = last_tax
        self.bracket = bracket
        self.slope = slope
        self.intercept = intercept


@dataclass(frozen=True)
class TaxModel:
    """Multiplier on the passive tax.

    ``kind`` is a label only (``clique``, ``graphical`` or ``radius``); the
    numerics depend on ``scale`` alone.
    """

    scale: int = 1
    kind: str = "clique"

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"tax scale must be >= 1, got {self.scale}")


CLIQUE = TaxModel(1, "clique")


@dataclass(frozen=True)
class SolveConfig:
    gamma: float = 0.05
    tol: float = 1e-6
    max_iters: int = 1_000_000
    grid_stride: int = 1
    degenerate: str = "raise"

    def __post_init__(self):
        if self.gamma <= 0 or self.tol <= 0:
            raise ValueError("gamma and tol must be positive")
        if self.max_iters < 1 or self.grid_stride < 1:
            raise ValueError("max_iters and grid_stride must be >= 1")
        if self.degenerate not in ("raise", "limit"):
            raise ValueError(f"degenerate must be 'raise' or 'limit', got {self.degenerate!r}")


@dataclass(frozen=True)
class ValueSolution:
    V: np.ndarray
    beta: float


@dataclass(frozen=True)
class IndexTable:
    """Index value per queue length; entry 0 is ``+inf`` (never compared).

    ``tiebreak`` orders states whose index is infinite; lower means more
    urgent, like the index itself.  Finite indices ignore it.
    """

    user: int
    model: TaxModel
    values: np.ndarray
    tiebreak: np.ndarray | None = None

    def __getitem__(self, x):
        return self.values[x]

    def key(self, x: int):
        v = float(self.values[x])
        if self.tiebreak is None or math.isfinite(v):
            return (v, 0.0)
        return (v, float(self.tiebreak[x]))


def _threshold_matrix(params: UserParams, mu: np.ndarray, threshold: int):
    M = params.buffer_cap
    active = np.arange(M + 1) >= threshold
    P = transition_matrix(params, mu, active)
    A = np.zeros((M + 2, M + 2))
    A[: M + 1, : M + 1] = np.eye(M + 1) - P
    A[: M + 1, M + 1] = 1.0
    A[M + 1, 0] = 1.0
    return A, active


def _threshold_rhs(params: UserParams, active: np.ndarray):
    """Cost vectors at zero tax and per unit of (scaled) tax."""
    M = params.buffer_cap
    y = np.arange(M + 1)
    base = params.holding_cost * y + np.where(active, energy_cost(params, np.minimum(y, params.psi)), 0.0)
    per_tax = np.where(active, 0.0, 1.0)
    return np.append(base, 0.0), np.append(per_tax, 0.0)


def _check_threshold(params: UserParams, x: int):
    if not 1 <= x <= params.buffer_cap:
        raise ValueError(f"threshold {x} outside [1, {params.buffer_cap}]")


def solve_threshold_system(params: UserParams, mu, threshold: int, tax: float,
                           model: TaxModel = CLIQUE) -> ValueSolution:
    """Relative values and average cost of the threshold policy at a fixed tax.

    Active equations hold for ``y >= threshold``, passive ones (paying
    ``tax * model.scale``) for ``y < threshold`` including ``y = 0``; the
    extra row pins ``V(0) = 0``.
    """
    _check_threshold(params, threshold)
    mu = np.asarray(mu, dtype=float)
    A, active = _threshold_matrix(params, mu, threshold)
    base, per_tax = _threshold_rhs(params, active)
    try:
        sol = np.linalg.solve(A, base + tax * model.scale * per_tax)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"singular threshold system: {params}, threshold={threshold}, tax={tax}"
        ) from exc
    V = sol[:-1]
    V[0] = 0.0
    return ValueSolution(V, float(sol[-1]))


def threshold_residual(params: UserParams, mu, threshold: int, tax: float,
                       model: TaxModel, sol: ValueSolution) -> float:
    """Largest absolute equation residual of ``sol`` (including V(0)=0)."""
    A, active = _threshold_matrix(params, np.asarray(mu, dtype=float), threshold)
    base, per_tax = _threshold_rhs(params, active)
    z = np.append(sol.V, sol.beta)
    return float(np.max(np.abs(A @ z - (base + tax * model.scale * per_tax))))


def _successors(params: UserParams, mu, x: int):
    M = params.buffer_cap
    k = np.arange(len(mu))
    after_tx = np.minimum(max(x - params.psi, 0) + k, M)
    idle = np.minimum(x + k, M)
    return after_tx, idle


def index_bracket(tax: float, sol: ValueSolution, x: int, params: UserParams,
                  mu, model: TaxModel = CLIQUE) -> float:
    """Active minus passive one-step evaluation at state ``x``."""
    mu = np.asarray(mu, dtype=float)
    after_tx, idle = _successors(params, mu, x)
    diff = float(mu @ (sol.V[after_tx] - sol.V[idle]))
    return float(energy_cost(params, min(x, params.psi))) - tax * model.scale + diff


def index_iterate(tax: float, sol: ValueSolution, x: int, params: UserParams,
                  mu, model: TaxModel = CLIQUE, gamma: float = 0.05) -> float:
    return tax + gamma * index_bracket(tax, sol, x, params, mu, model)


def _affine_bracket(params: UserParams, mu: np.ndarray, x: int, model: TaxModel):
    """The bracket as ``a - b * tax``.

    The system matrix does not depend on the tax, so one factorization with
    two right-hand sides gives ``V(tax) = V0 + tax * V1`` exactly.
    """
    A, active = _threshold_matrix(params, mu, x)
    base, per_tax = _threshold_rhs(params, active)
    try:
        sol = np.linalg.solve(A, np.column_stack([base, model.scale * per_tax]))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular threshold system: {params}, threshold={x}") from exc
    V0, V1 = sol[:-1, 0], sol[:-1, 1]
    after_tx, idle = _successors(params, mu, x)
    a = float(energy_cost(params, min(x, params.psi))) + float(mu @ (V0[after_tx] - V0[idle]))
    b = model.scale - float(mu @ (V1[after_tx] - V1[idle]))
    return a, b


def _iterate_closed_form(a: float, b: float, gamma: float, m: int) -> float:
    """Tax after ``m`` iterates started from 0 (the recursion is affine)."""
    if b == 0:
        return gamma * a * m
    return (a / b) * -math.expm1(m * math.log1p(-gamma * b)) if gamma * b < 1 else \
        (a / b) * (1.0 - (1.0 - gamma * b) ** m)


def _settle(a: float, b: float, cfg: SolveConfig, x: int, params: UserParams) -> float:
    g = cfg.gamma
    # the step taken from iterate m equals gamma * a * r**m
    r = 1.0 - g * b
    first = g * abs(a)
    if first <= cfg.tol:
        return 0.0
    m = None
    if r == 0.0:
        m = 1
    elif abs(r) < 1.0:
        m = max(0, math.ceil(math.log(cfg.tol / first) / math.log(abs(r))))
        while m > 0 and first * abs(r) ** (m - 1) <= cfg.tol:
            m -= 1
        while first * abs(r) ** m > cfg.tol:
            m += 1
    if m is not None and m <= cfg.max_iters:
        return _iterate_closed_form(a, b, g, m)
    last = _iterate_closed_form(a, b, g, cfg.max_iters)
    bracket = a - b * last
    raise IndexConvergenceError(
        f"index iteration at x={x} did not converge in {cfg.max_iters} iterations "
        f"(last tax={last!r}, bracket={bracket!r}, slope={b!r}) for {params}",
        x=x, last_tax=last, bracket=bracket, slope=b, intercept=a,
    )


def compute_index(params: UserParams, mu, x: int, model: TaxModel = CLIQUE,
                  cfg: SolveConfig = SolveConfig()) -> float:
    """Index of state ``x``: iterate the tax from 0 until it stops moving.

    Because ``V`` is affine in the tax, the bracket is ``a - b * tax`` and
    the m-th iterate has the closed form ``(a/b) * (1 - (1 - gamma*b)**m)``.
    The number of iterates needed to make a step of at most ``cfg.tol`` is
    found directly instead of looping; :func:`compute_index_stepwise`
    performs the same iteration literally.  On return the bracket is at most
    ``cfg.tol / cfg.gamma`` in magnitude.  A state that does not settle
    raises, or with ``cfg.degenerate == "limit"`` returns the signed
    infinite limit of the iteration.
    """
    _check_threshold(params, x)
    mu = np.asarray(mu, dtype=float)
    a, b = _affine_bracket(params, mu, x, model)
    return _settle_or_limit(a, b, cfg, x, params)


def _settle_or_limit(a: float, b: float, cfg: SolveConfig, x: int, params: UserParams) -> float:
    try:
        return _settle(a, b, cfg, x, params)
    except IndexConvergenceError as exc:
        if cfg.degenerate != "limit":
            raise
        return -math.inf if exc.bracket < 0 else math.inf


def compute_index_stepwise(params: UserParams, mu, x: int, model: TaxModel = CLIQUE,
                           cfg: SolveConfig = SolveConfig()) -> float:
    """Reference version: a full linear solve and one iterate per step."""
    _check_threshold(params, x)
    tax = 0.0
    for _ in range(cfg.max_iters + 1):
        sol = solve_threshold_system(params, mu, x, tax, model)
        new = index_iterate(tax, sol, x, params, mu, model, cfg.gamma)
        if abs(new - tax) <= cfg.tol:
            return tax
        tax = new
    raise IndexConvergenceError(
        f"index iteration at x={x} did not converge in {cfg.max_iters} iterations",
        x=x, last_tax=tax,
    )


def build_index_table(params: UserParams, model: TaxModel = CLIQUE,
                      cfg: SolveConfig = SolveConfig(), user: int = 0,
                      mu=None) -> IndexTable:
    """Index at every queue length, exact on a grid and linear in between.

    With ``cfg.degenerate == "raise"`` a state whose iteration does not
    settle aborts the table.  With ``"limit"`` such a state gets the limit
    of the iteration, ``-inf`` or ``+inf`` by the sign of its last bracket.
    Every state also carries a tie-break key, the zero-tax bracket divided
    by the tax scale, which orders states sharing an infinite index.
    """
    if mu is None:
        mu = arrival_distribution(params.arrival_mean)
    mu = np.asarray(mu, dtype=float)
    M = params.buffer_cap
    if cfg.degenerate == "limit" and not mu[1:].any():
        return _no_arrival_table(params, model, user)
    grid = sorted(set(range(1, M + 1, cfg.grid_stride)) | {M})
    exact, keys = [], []
    for x in grid:
        a, b = _affine_bracket(params, mu, x, model)
        exact.append(_settle_or_limit(a, b, cfg, x, params))
        keys.append(a / model.scale)
    exact = np.array(exact)
    values = np.full(M + 1, np.inf)
    tiebreak = np.full(M + 1, np.inf)
    xs = np.arange(1, M + 1)
    values[1:] = _interp_extended(xs, grid, exact)
    tiebreak[1:] = np.interp(xs, grid, keys)
    values[grid] = exact
    values.setflags(write=False)
    tiebreak.setflags(write=False)
    return IndexTable(user, model, values, tiebreak)


def _no_arrival_table(params: UserParams, model: TaxModel, user: int) -> IndexTable:
    """Without arrivals every threshold system below M is multichain.  Acting
    drains the queue for a one-off energy cost, so under the average-cost
    criterion it wins at every tax whenever holding is costly."""
    M = params.buffer_cap
    x = np.arange(M + 1)
    values = np.full(M + 1, -math.inf if params.holding_cost > 0 else math.inf)
    values[0] = math.inf
    tiebreak = np.asarray(energy_cost(params, np.minimum(x, params.psi)), dtype=float) / model.scale
    values.setflags(write=False)
    tiebreak.setflags(write=False)
    return IndexTable(user, model, values, tiebreak)


def _interp_extended(xs, grid, vals):
    """Linear interpolation; a segment touching an infinite end point takes
    the nearer grid value."""
    out = np.interp(xs, grid, np.where(np.isfinite(vals), vals, 0.0))
    if np.isfinite(vals).all():
        return out
    grid = np.asarray(grid)
    hi = np.clip(np.searchsorted(grid, xs), 0, len(grid) - 1)
    lo = np.clip(hi - 1, 0, len(grid) - 1)
    for k, x in enumerate(xs):
        l, h = lo[k], hi[k]
        if grid[h] == x:
            out[k] = vals[h]
        elif not (np.isfinite(vals[l]) and np.isfinite(vals[h])):
            out[k] = vals[l] if x - grid[l] <= grid[h] - x else vals[h]
    return out


@lru_cache(maxsize=4096)
def cached_index_table(params: UserParams, model: TaxModel, cfg: SolveConfig) -> IndexTable:
    """Memoized :func:`build_index_table` keyed on the (hashable) inputs."""
    return build_index_table(params, model, cfg)


def graphical_scale(g: NetworkGraph, i: int, kind: str = "graphical") -> TaxModel:
    """Tax scale = size of a maximum independent set among i's neighbors
    (at least 1, so isolated users behave as in the clique model)."""
    s = max_independent_set_size(g, neighbors(g, i))
    return TaxModel(max(1, s), kind)


def tables_to_csv(tables) -> str:
    buf = io.StringIO()
    buf.write("user,model,scale,x,index\n")
    for t in tables:
        for x in range(1, len(t.values)):
            buf.write(f"{t.user},{t.model.kind},{t.model.scale},{x},{float(t.values[x])!r}\n")
    return buf.getvalue()
