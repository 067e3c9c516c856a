"""Dense linear programming and the occupancy-measure program builders.

``solve`` is a two-phase dense tableau simplex with Bland's anti-cycling rule:
deterministic pivoting, no external dependencies, adequate for desk-scale
problems (up to a few thousand variables).  ``method="highs"`` routes the same
``StandardLp`` through scipy's HiGHS backend instead; the per-episode DOPE
baseline uses it because a tableau simplex is orders of magnitude slower on
its ~900-row programs, while every correctness test and every one-shot oracle
run on the internal simplex.

Builders:
  * ``optimal_safe_policy``  -- the constrained-optimal-policy oracle over
    occupancy measures (used for exact regret bookkeeping).
  * ``dope_policy``          -- the extended occupancy LP over a transition
    confidence set (tabular environments only).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .cmdp import ExplicitPolicy, LinearCmdp, evaluate_policy
from .exceptions import InvalidInputError, SolverFailureError

_PIVOT_TOL = 1e-9
_MAX_PIVOTS = 200_000


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class StandardLp:
    """maximize c.x  s.t.  a_eq x = b_eq,  g_ineq x >= h_ineq,  x >= lower.

    Missing blocks are passed as None.  ``lower`` defaults to zero.
    """

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    g_ineq: np.ndarray | None = None
    h_ineq: np.ndarray | None = None
    lower: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        object.__setattr__(self, "c", c)
        n = c.shape[0]
        for mat_name, vec_name in (("a_eq", "b_eq"), ("g_ineq", "h_ineq")):
            mat, vec = getattr(self, mat_name), getattr(self, vec_name)
            if (mat is None) != (vec is None):
                raise InvalidInputError(f"{mat_name} and {vec_name} must be given together")
            if mat is not None:
                mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
                vec = np.atleast_1d(np.asarray(vec, dtype=np.float64))
                if mat.shape != (vec.shape[0], n):
                    raise InvalidInputError(f"{mat_name} shape {mat.shape} inconsistent with c/{vec_name}")
                object.__setattr__(self, mat_name, mat)
                object.__setattr__(self, vec_name, vec)
        if self.lower is not None:
            low = np.asarray(self.lower, dtype=np.float64)
            if low.shape != (n,):
                raise InvalidInputError("lower bounds must match the variable count")
            object.__setattr__(self, "lower", low)
        blocks = [self.c] + [x for x in (self.a_eq, self.b_eq, self.g_ineq, self.h_ineq, self.lower) if x is not None]
        if any(not np.all(np.isfinite(x)) for x in blocks):
            raise InvalidInputError("LP coefficients must be finite")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float | None = None


def residuals(lp: StandardLp, x: np.ndarray) -> float:
    """Largest scaled constraint violation of ``x`` (equality, inequality, bounds)."""
    worst = 0.0
    if lp.a_eq is not None:
        scale = 1.0 + np.linalg.norm(lp.a_eq, axis=1)
        worst = max(worst, float(np.max(np.abs(lp.a_eq @ x - lp.b_eq) / scale)))
    if lp.g_ineq is not None:
        scale = 1.0 + np.linalg.norm(lp.g_ineq, axis=1)
        worst = max(worst, float(np.max((lp.h_ineq - lp.g_ineq @ x) / scale)))
    lower = lp.lower if lp.lower is not None else np.zeros(lp.num_vars)
    worst = max(worst, float(np.max(lower - x)))
    return worst


def solve(lp: StandardLp, method: str = "simplex") -> LpSolution:
    """Solve a StandardLp; deterministic given the input."""
    if method == "simplex":
        sol = _solve_simplex(lp)
    elif method == "highs":
        sol = _solve_highs(lp)
    else:
        raise InvalidInputError(f"unknown LP method {method!r}")
    if sol.status is LpStatus.OPTIMAL:
        res = residuals(lp, sol.x)
        if res > 1e-8:
            raise SolverFailureError(f"LP solution failed residual re-check ({res:.3e} > 1e-8)")
        if np.min(sol.x - (lp.lower if lp.lower is not None else 0.0)) < -1e-10:
            raise SolverFailureError("LP solution violates variable lower bounds")
    return sol


# ---------------------------------------------------------------------------
# internal two-phase tableau simplex
# ---------------------------------------------------------------------------

def _solve_simplex(lp: StandardLp) -> LpSolution:
    n = lp.num_vars
    lower = lp.lower if lp.lower is not None else np.zeros(n)

    # shift to y = x - lower >= 0 and collect rows of M y = v / G y >= h
    rows = []
    rhs = []
    if lp.a_eq is not None:
        shift = lp.a_eq @ lower
        rows.append(lp.a_eq)
        rhs.append(lp.b_eq - shift)
        n_eq = lp.a_eq.shape[0]
    else:
        n_eq = 0
    if lp.g_ineq is not None:
        shift = lp.g_ineq @ lower
        rows.append(lp.g_ineq)
        rhs.append(lp.h_ineq - shift)
        n_ineq = lp.g_ineq.shape[0]
    else:
        n_ineq = 0
    m = n_eq + n_ineq
    obj_shift = float(lp.c @ lower)

    if m == 0:
        # only bounds: bounded iff c <= 0, optimum at y = 0
        if np.any(lp.c > _PIVOT_TOL):
            return LpSolution(LpStatus.UNBOUNDED)
        return LpSolution(LpStatus.OPTIMAL, lower.copy(), obj_shift)

    M = np.vstack(rows) if rows else np.zeros((0, n))
    v = np.concatenate(rhs) if rhs else np.zeros(0)

    # surplus variables for inequality rows: G y - s = h
    n_slack = n_ineq
    full = np.zeros((m, n + n_slack))
    full[:, :n] = M
    for i in range(n_ineq):
        full[n_eq + i, n + i] = -1.0
    # make RHS nonnegative
    neg = v < 0
    full[neg] *= -1.0
    v = np.abs(v)

    total = n + n_slack
    tableau = np.zeros((m, total + m + 1))
    tableau[:, :total] = full
    tableau[:, total : total + m] = np.eye(m)  # artificials
    tableau[:, -1] = v
    basis = np.arange(total, total + m)

    # ---- phase 1: minimize the sum of artificials ----------------------
    cost1 = np.zeros(total + m)
    cost1[total:] = -1.0  # maximize -(sum of artificials)
    obj_row = _reduced_costs(tableau, basis, cost1)
    status = _pivot_loop(tableau, basis, obj_row, cost1)
    if status is LpStatus.UNBOUNDED:  # cannot happen: phase-1 objective bounded
        raise SolverFailureError("phase-1 reported unbounded")
    phase1_value = -float(obj_row[-1])  # value cell is stored negated
    if phase1_value < -1e-7:
        return LpSolution(LpStatus.INFEASIBLE)

    # drive any remaining artificial variables out of the basis
    for i in range(m):
        if basis[i] >= total:
            row = tableau[i]
            pivot_col = -1
            for j in range(total):
                if abs(row[j]) > 1e-7:
                    pivot_col = j
                    break
            if pivot_col < 0:
                # redundant row: zero it so it never constrains phase 2
                tableau[i, :] = 0.0
            else:
                _pivot(tableau, None, i, pivot_col)
                basis[i] = pivot_col

    # ---- phase 2: original objective ------------------------------------
    tableau[:, total : total + m] = 0.0  # forbid artificials from re-entering
    cost2 = np.zeros(total + m)
    cost2[:n] = lp.c
    obj_row = _reduced_costs(tableau, basis, cost2)
    status = _pivot_loop(tableau, basis, obj_row, cost2)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED)

    full_x = np.zeros(total + m)
    for i, bi in enumerate(basis):
        full_x[bi] = tableau[i, -1]
    y = full_x[:n]
    x = y + lower
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ y) + obj_shift)


def _reduced_costs(tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Objective row [cbar | -value] for the current basis.

    The value cell is stored negated so the ordinary row-elimination pivot
    update applies uniformly to the whole row.
    """
    cb = cost[basis]
    row = np.empty(tableau.shape[1])
    row[:-1] = cost - cb @ tableau[:, :-1]
    row[-1] = -(cb @ tableau[:, -1])
    return row


def _pivot(tableau: np.ndarray, obj_row: np.ndarray | None, row: int, col: int) -> None:
    piv = tableau[row, col]
    tableau[row] /= piv
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    if obj_row is not None:
        obj_row -= obj_row[col] * tableau[row]


def _pivot_loop(tableau: np.ndarray, basis: np.ndarray, obj_row: np.ndarray, cost: np.ndarray) -> LpStatus:
    """Run Bland's-rule pivoting to optimality (maximization)."""
    m = tableau.shape[0]
    for _ in range(_MAX_PIVOTS):
        # Bland: entering = lowest index with positive reduced cost
        enter = -1
        for j in range(obj_row.shape[0] - 1):
            if obj_row[j] > _PIVOT_TOL:
                enter = j
                break
        if enter < 0:
            return LpStatus.OPTIMAL
        col = tableau[:, enter]
        rhs = tableau[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(col > _PIVOT_TOL, rhs / np.where(col > _PIVOT_TOL, col, 1.0), np.inf)
        min_ratio = ratios.min()
        if not np.isfinite(min_ratio):
            return LpStatus.UNBOUNDED
        # Bland's leaving rule: among the minimum-ratio rows (grouped within a
        # tiny absolute window for float equality), the smallest basis index
        candidates = np.flatnonzero(ratios <= min_ratio + 1e-12)
        leave = candidates[np.argmin(basis[candidates])]
        _pivot(tableau, obj_row, leave, enter)
        basis[leave] = enter
    raise SolverFailureError(f"simplex exceeded {_MAX_PIVOTS} pivots (possible numerical breakdown)")


def _solve_highs(lp: StandardLp) -> LpSolution:
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    n = lp.num_vars
    lower = lp.lower if lp.lower is not None else np.zeros(n)
    a_ub = csr_matrix(-lp.g_ineq) if lp.g_ineq is not None else None
    b_ub = -lp.h_ineq if lp.h_ineq is not None else None
    res = linprog(
        -lp.c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=lp.a_eq,
        b_eq=lp.b_eq,
        bounds=list(zip(lower, [None] * n)),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9},
    )
    if res.status == 0:
        x = np.maximum(res.x, lower)
        return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x))
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    raise SolverFailureError(f"HiGHS failed: {res.message}")


# ---------------------------------------------------------------------------
# occupancy-measure programs
# ---------------------------------------------------------------------------

def _flow_rows(cmdp: LinearCmdp) -> tuple[np.ndarray, np.ndarray]:
    """Bellman-flow equality rows over variables w_h(s, a), flattened (h, s, a)."""
    H, S, A = cmdp.H, cmdp.num_states, cmdp.num_actions
    n = H * S * A

    def idx(h, s, a):
        return (h * S + s) * A + a

    rows = np.zeros((H * S, n))
    rhs = np.zeros(H * S)
    for s in range(S):
        for a in range(A):
            rows[s, idx(0, s, a)] = 1.0
    rhs[cmdp.s1] = 1.0
    for h in range(1, H):
        for s_next in range(S):
            r = h * S + s_next
            for a in range(A):
                rows[r, idx(h, s_next, a)] = 1.0
            rows[r, (h - 1) * S * A : h * S * A] -= cmdp.transitions[h - 1, :, :, s_next].ravel()
    return rows, rhs


def extract_policy(w: np.ndarray, num_actions: int) -> ExplicitPolicy:
    """Conditional action distributions from an occupancy table (H, S, A).

    States with zero mass get the uniform distribution: they are unreachable,
    so any choice is evaluation-equivalent and uniform keeps it deterministic.
    """
    w = np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    mass = w.sum(axis=2, keepdims=True)
    probs = np.where(mass > 0, w / np.where(mass > 0, mass, 1.0), 1.0 / num_actions)
    probs /= probs.sum(axis=2, keepdims=True)
    return ExplicitPolicy(probs)


def optimal_safe_policy(cmdp: LinearCmdp, method: str = "simplex") -> tuple[ExplicitPolicy, float] | None:
    """Best safe policy and its exact reward value, or None when no policy
    meets the utility constraint.

    Solves max <w, r> over occupancy measures w subject to <w, u> >= b, then
    extracts the policy from the conditionals of w.  The returned value is
    re-verified against exact policy evaluation to 1e-7.
    """
    H, S, A = cmdp.H, cmdp.num_states, cmdp.num_actions
    a_eq, b_eq = _flow_rows(cmdp)
    lp = StandardLp(
        c=cmdp.rewards.ravel(),
        a_eq=a_eq,
        b_eq=b_eq,
        g_ineq=cmdp.utilities.ravel()[None, :],
        h_ineq=np.array([cmdp.b]),
    )
    sol = solve(lp, method=method)
    if sol.status is LpStatus.INFEASIBLE:
        return None
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverFailureError(f"occupancy LP ended with status {sol.status}")
    policy = extract_policy(sol.x.reshape(H, S, A), A)
    _, value = evaluate_policy(cmdp, policy, cmdp.rewards)
    if abs(value - sol.objective) > 1e-7:
        raise SolverFailureError(
            f"extracted policy value {value} deviates from LP objective {sol.objective}"
        )
    return policy, value


def dope_policy(
    counts: np.ndarray,
    rewards: np.ndarray,
    utilities: np.ndarray,
    c_r: float,
    c_u: float,
    b: float,
    s1: int,
    method: str = "simplex",
) -> ExplicitPolicy | None:
    """One round of the extended occupancy LP over a transition confidence set.

    ``counts`` holds visitation counts n_h(s, a, s'), shape (H, S, A, S).
    Variables z_h(s, a, s') >= 0 cover every triple; the per-transition width

        gamma = sqrt(p_hat (1 - p_hat) / max(n, 1)) + 1 / max(n, 1)

    is the empirical-deviation term plus the additive small-sample term of a
    Bernstein-style interval (unit constants, no log factors).  The additive
    term keeps unvisited transitions inside the confidence set, which is what
    lets the optimistic objective steer exploration toward them; with the
    deviation term alone, zero-count cells are pinned to zero mass and the
    program can trap itself on its initial support forever.  Returns the
    policy extracted from the z marginals, or None when the program is
    infeasible (the caller then falls back to the safe policy: with no data
    the pessimistic utility row is unsatisfiable, so episode one is always a
    fallback).  Tabular (one-hot feature) environments only; the variable
    count scales with S^2, which is intractable beyond small state spaces.
    """
    counts = np.asarray(counts, dtype=np.float64)
    H, S, A, S2 = counts.shape
    if S2 != S:
        raise InvalidInputError("counts must have shape (H, S, A, S)")
    n_sa = counts.sum(axis=3)
    denom = np.maximum(n_sa, 1.0)[..., None]
    p_hat = counts / denom
    gamma = np.sqrt(p_hat * (1.0 - p_hat) / denom) + 1.0 / denom
    beta = gamma.sum(axis=3)

    n_var = H * S * A * S
    n_grp = H * S * A

    # flow equalities over the (h, s) marginals
    a_eq = np.zeros((H * S, n_var))
    view = a_eq.reshape(H, S, H, S, A, S)
    for h in range(H):
        for s in range(S):
            view[h, s, h, s, :, :] = 1.0
            if h > 0:
                view[h, s, h - 1, :, :, s] -= 1.0
    b_eq = np.zeros(H * S)
    b_eq[s1] = 1.0

    # confidence rows, block diagonal per (h, s, a) group of S variables:
    #   (p+g) * sum_y z_y - z_i >= 0   and   z_i - (p-g) * sum_y z_y >= 0
    p_flat = p_hat.reshape(n_grp, S)
    g_flat = gamma.reshape(n_grp, S)
    eye = np.eye(S)
    blocks_u = (p_flat + g_flat)[:, :, None] - eye[None, :, :]
    blocks_l = eye[None, :, :] - (p_flat - g_flat)[:, :, None]
    upper = np.zeros((n_grp, S, n_var))
    lower = np.zeros((n_grp, S, n_var))
    gg, ii, jj = np.ogrid[:n_grp, :S, :S]
    upper[gg, ii, gg * S + jj] = blocks_u
    lower[gg, ii, gg * S + jj] = blocks_l
    # lower rows with p - g <= 0 are implied by z >= 0; drop them
    keep = (p_flat - g_flat).ravel() > 0.0
    lower = lower.reshape(-1, n_var)[keep]
    util_row = (utilities - c_u * beta)[..., None] * np.ones(S)
    g_ineq = np.concatenate([upper.reshape(-1, n_var), lower, util_row.reshape(1, n_var)])
    h_ineq = np.zeros(g_ineq.shape[0])
    h_ineq[-1] = b

    obj = ((rewards + c_r * beta)[..., None] * np.ones(S)).ravel()
    lp = StandardLp(c=obj, a_eq=a_eq, b_eq=b_eq, g_ineq=g_ineq, h_ineq=h_ineq)
    sol = solve(lp, method=method)
    if sol.status is not LpStatus.OPTIMAL:
        return None
    w = np.maximum(sol.x, 0.0).reshape(H, S, A, S).sum(axis=3)
    return extract_policy(w, A)
