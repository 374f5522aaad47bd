"""Independent ground truth for tests: relative value iteration (RVI).

Nothing here is used by the schedulers.  The single-queue problems are the
same tax-augmented chains as in :mod:`whittlenet.whittle`, but solved by
iteration rather than by a linear solve, and the joint solver handles the
exact interference-constrained problem on toy networks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import UserParams, arrival_distribution, energy_cost, transition_matrix
from .topology import NetworkGraph

RVI_TOL = 1e-8
RVI_MAX_ITERS = 1_000_000
# aperiodicity transform weight; leaves V unchanged and rescales beta
_SELF_LOOP = 0.1


class OracleError(RuntimeError):
    pass


@dataclass
class RviSolution:
    V: np.ndarray
    beta: float
    iterations: int
    residual: float


def _rvi(step, n_states, tol, max_iters, V0=None):
    """Iterate ``V <- T V - (T V)(0)`` with the self-loop transform until the
    span of ``T V - V`` drops below ``tol``.

    ``step(V)`` returns ``(T V, extra)`` for the untransformed operator.
    """
    V = np.zeros(n_states) if V0 is None else np.array(V0, dtype=float)
    span = math.inf
    for it in range(1, max_iters + 1):
        TV, extra = step(V)
        TV = _SELF_LOOP * V + (1.0 - _SELF_LOOP) * TV
        diff = TV - V
        span = float(diff.max() - diff.min())
        V = TV - TV[0]
        if span <= tol:
            beta = 0.5 * (diff.max() + diff.min()) / (1.0 - _SELF_LOOP)
            return RviSolution(V, float(beta), it, span), extra
    raise OracleError(f"RVI did not converge in {max_iters} iterations (span={span!r})")


def _single_queue_parts(params: UserParams, mu, tax: float, s: float):
    mu = np.asarray(mu, dtype=float)
    M = params.buffer_cap
    y = np.arange(M + 1)
    P_act = transition_matrix(params, mu, True)
    P_pas = transition_matrix(params, mu, False)
    c_act = params.holding_cost * y + energy_cost(params, np.minimum(y, params.psi))
    c_pas = params.holding_cost * y + tax * s
    return P_act, P_pas, c_act, c_pas


def rvi_fixed_policy(params: UserParams, mu, active_set, tax: float, s: float = 1,
                     tol: float = RVI_TOL, max_iters: int = RVI_MAX_ITERS) -> RviSolution:
    """Relative values of a fixed single-queue policy.

    ``active_set`` is a predicate ``state -> bool`` or a boolean array over
    ``0..M``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = params.buffer_cap
    if callable(active_set):
        act = np.array([bool(active_set(y)) for y in range(M + 1)])
    else:
        act = np.asarray(active_set, dtype=bool)
    P_act, P_pas, c_act, c_pas = _single_queue_parts(params, mu, tax, s)
    P = np.where(act[:, None], P_act, P_pas)
    c = np.where(act, c_act, c_pas)
    sol, _ = _rvi(lambda V: (c + P @ V, None), M + 1, tol, max_iters)
    return sol


def rvi_optimal(params: UserParams, mu, tax: float, s: float = 1,
                tol: float = RVI_TOL, max_iters: int = RVI_MAX_ITERS, V0=None):
    """Optimal single-queue policy under a passivity tax.

    The empty state is always passive.  Returns ``(solution, policy,
    threshold)`` where ``policy`` is a boolean array (True = active) and
    ``threshold`` is the cutoff ``tau`` if the policy is active exactly on
    ``{x >= tau}`` (``M + 1`` for never active), else ``None``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = params.buffer_cap
    P_act, P_pas, c_act, c_pas = _single_queue_parts(params, mu, tax, s)

    def step(V):
        qa = c_act + P_act @ V
        qp = c_pas + P_pas @ V
        qa[0] = qp[0]
        return np.minimum(qa, qp), None

    sol, _ = _rvi(step, M + 1, tol, max_iters, V0)
    qa = c_act + P_act @ sol.V
    qp = c_pas + P_pas @ sol.V
    policy = qa < qp
    policy[0] = False
    return sol, policy, threshold_of(policy)


def threshold_of(policy) -> int | None:
    policy = np.asarray(policy, dtype=bool)
    on = np.flatnonzero(policy[1:]) + 1
    if on.size == 0:
        return len(policy)
    tau = int(on[0])
    return tau if policy[tau:].all() else None


def q_difference(params: UserParams, mu, tax: float, s: float, x: int, V) -> float:
    """Active minus passive one-step evaluation at ``x`` under values ``V``."""
    P_act, P_pas, c_act, c_pas = _single_queue_parts(params, mu, tax, s)
    return float((c_act[x] + P_act[x] @ V) - (c_pas[x] + P_pas[x] @ V))


def verify_index_bisection(params: UserParams, mu, x: int, s: float = 1,
                           tol: float = 1e-6, rvi_tol: float = RVI_TOL) -> float:
    """Tax at which the optimal action at ``x`` flips, by bisection.

    The active-minus-passive Q difference at ``x`` (under the optimal
    relative values) decreases in the tax; the index is its root.
    """
    M = params.buffer_cap
    if not 1 <= x <= M:
        raise ValueError(f"state {x} outside [1, {M}]")
    mu = np.asarray(mu, dtype=float)
    half = float(energy_cost(params, M)) + params.holding_cost * M * (M + 1)
    half = max(half, 1.0)

    def diff_at(tax, V0=None):
        sol, _, _ = rvi_optimal(params, mu, tax, s, tol=rvi_tol, V0=V0)
        return q_difference(params, mu, tax, s, x, sol.V), sol.V

    for _ in range(4):
        lo, hi = -half, half
        d_lo, _ = diff_at(lo)
        d_hi, V = diff_at(hi)
        if d_lo > 0 > d_hi:
            break
        half *= 10
    else:
        raise OracleError(
            f"no sign change of the Q difference at x={x} on [{lo!r}, {hi!r}] "
            f"(values {d_lo!r}, {d_hi!r})"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        d_mid, V = diff_at(mid, V)
        if d_mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def joint_optimal_tiny(g: NetworkGraph, users, tol: float = RVI_TOL,
                       max_iters: int = RVI_MAX_ITERS, mus=None) -> float:
    """Optimal average total cost of the exact constrained network problem.

    The action set is the family of independent sets of ``g`` (including
    the empty set); the state is the vector of queue lengths.
    """
    users = list(users)
    if len(users) != g.n_users:
        raise ValueError("one UserParams per node required")
    sizes = [u.buffer_cap + 1 for u in users]
    n_states = math.prod(sizes)
    if n_states > 10_000:
        raise ValueError(f"joint state space too large ({n_states} states)")
    if mus is None:
        mus = [arrival_distribution(u.arrival_mean) for u in users]
    actions = [
        a for a in itertools.product((False, True), repeat=g.n_users)
        if g.is_independent(i for i, on in enumerate(a) if on)
    ]
    per_user = []
    for u, mu in zip(users, mus):
        y = np.arange(u.buffer_cap + 1)
        per_user.append({
            False: (transition_matrix(u, mu, False), u.holding_cost * y),
            True: (transition_matrix(u, mu, True),
                   u.holding_cost * y + energy_cost(u, np.minimum(y, u.psi))),
        })
    mats, costs = [], []
    for a in actions:
        P = np.ones((1, 1))
        c = np.zeros(1)
        for parts, on in zip(per_user, a):
            Pi, ci = parts[on]
            P = np.kron(P, Pi)
            c = (c[:, None] + ci[None, :]).ravel()
        mats.append(P)
        costs.append(c)
    mats = np.stack(mats)
    costs = np.stack(costs)

    def step(V):
        return (costs + mats @ V).min(axis=0), None

    sol, _ = _rvi(step, n_states, tol, max_iters)
    return sol.beta
