"""Per-step regularized least-squares state: Gram matrices, bonuses, regressions.

One estimator instance is exclusively owned by a single agent run.  Each step
h keeps a ridge Gram matrix Lambda_h = rho*I + sum_i phi_i phi_i^T together
with a lower-triangular Cholesky factor that is kept in sync through rank-one
updates (numerically stable over tens of thousands of updates, unlike an
explicit inverse).  Recorded transitions are also aggregated by next state,
which lets value regressions be computed from a per-state value vector in
O(S*d) instead of O(k*d); the two routes are algebraically identical because
regression targets depend on samples only through the next-state values.

Bonuses for the full (step, state, action) grid are cached per episode and
invalidated whenever a new episode is recorded: the bonus does not depend on
the policy weight lambda, while a single episode evaluates many lambdas.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .exceptions import InvalidInputError


def chol_update(L: np.ndarray, x: np.ndarray) -> None:
    """In-place rank-one update: given Lambda = L L^T, rewrite L so that
    L L^T = Lambda + x x^T.  Classic sequential column algorithm, O(d^2)."""
    _kernels.chol_update_inplace(L, np.array(x, dtype=np.float64))


class EstimatorState:
    """Transition dataset plus per-step Gram factorizations for one agent run.

    Parameters
    ----------
    features:  the known feature table phi(s, a), shape (S, A, d)
    H:         horizon
    rho:       ridge coefficient, > 0
    """

    def __init__(self, features: np.ndarray, H: int, rho: float = 1.0):
        if rho <= 0:
            raise InvalidInputError("ridge coefficient rho must be positive")
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 3:
            raise InvalidInputError("features must have shape (S, A, d)")
        S, A, d = self.features.shape
        self.H = int(H)
        self.rho = float(rho)
        self.d = d
        self.num_states = S
        self.num_actions = A
        self.flat_features = self.features.reshape(S * A, d)
        self._flat_features_T = np.ascontiguousarray(self.flat_features.T)
        self.gram = np.tile(rho * np.eye(d), (self.H, 1, 1))
        self.chol = np.tile(np.sqrt(rho) * np.eye(d), (self.H, 1, 1))
        # sum of phi(s_h, a_h) grouped by observed next state, per step
        self.next_feat_sums = np.zeros((self.H, S, d))
        self.data: list[list[tuple[int, int, int]]] = [[] for _ in range(self.H)]
        self.episodes = 0
        self._bonus_cache: dict[int, np.ndarray] = {}
        self._solved_cache: dict[int, np.ndarray] = {}

    # ------------------------------------------------------------------
    # updates
    # ------------------------------------------------------------------

    def record_episode(self, trajectory) -> None:
        """Append one trajectory of H triples (s, a, s') and apply the rank-one
        Gram/Cholesky updates for every step."""
        traj = list(trajectory)
        if len(traj) != self.H:
            raise InvalidInputError(f"trajectory length {len(traj)} != horizon {self.H}")
        for h, (s, a, s_next) in enumerate(traj):
            if not (0 <= s < self.num_states and 0 <= a < self.num_actions and 0 <= s_next < self.num_states):
                raise InvalidInputError(f"trajectory index out of range at step {h}")
        for h, (s, a, s_next) in enumerate(traj):
            phi = self.features[s, a]
            self.gram[h] += np.outer(phi, phi)
            chol_update(self.chol[h], phi)
            self.next_feat_sums[h, s_next] += phi
            self.data[h].append((s, a, s_next))
        self.episodes += 1
        self._bonus_cache.clear()
        self._solved_cache.clear()

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def bonus_table(self, h: int) -> np.ndarray:
        """Elliptical bonuses sqrt(phi^T Lambda_h^{-1} phi) for every (s, a).

        Computed once per episode via a batched triangular solve and cached.
        """
        cached = self._bonus_cache.get(h)
        if cached is not None:
            return cached
        if _kernels.HAS_NUMBA:
            y = _kernels.lower_solve(self.chol[h], self._flat_features_T)
        else:
            y = solve_triangular(self.chol[h], self._flat_features_T, lower=True, check_finite=False)
        table = np.sqrt(np.sum(y * y, axis=0)).reshape(self.num_states, self.num_actions)
        self._bonus_cache[h] = table
        return table

    def bonus(self, h: int, s: int, a: int) -> float:
        """Bonus for one (step, state, action); always in (0, 1/sqrt(rho)]."""
        return float(self.bonus_table(h)[s, a])

    def regress_next_value(self, h: int, v_next: np.ndarray) -> np.ndarray:
        """Ridge-regression weights w = Lambda_h^{-1} sum_i phi_i * v_next[i],
        where v_next[i] is the value assigned to the i-th recorded next state
        at step h.  Downstream, the estimated next-step value at (s, a) is
        phi(s, a) . w.  With no data the weights are zero."""
        v_next = np.asarray(v_next, dtype=np.float64)
        n = len(self.data[h])
        if v_next.shape != (n,):
            raise InvalidInputError(f"expected {n} next-state values at step {h}, got {v_next.shape}")
        if n == 0:
            return np.zeros(self.d)
        target = np.zeros(self.d)
        for (s, a, _), v in zip(self.data[h], v_next):
            target += self.features[s, a] * v
        return self._solve(h, target)

    def regress_state_values(self, h: int, values: np.ndarray) -> np.ndarray:
        """Same regression as :meth:`regress_next_value`, but fed with a value
        per state: the target sum_i phi_i * V(s'_i) collapses to M_h^T V using
        the per-next-state feature sums M_h."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.num_states,):
            raise InvalidInputError("expected one value per state")
        if len(self.data[h]) == 0:
            return np.zeros(self.d)
        return self._solve(h, self.next_feat_sums[h].T @ values)

    def regress_state_values_multi(self, h: int, values: np.ndarray) -> np.ndarray:
        """Batched variant: ``values`` has shape (S, m); returns (d, m) weights."""
        if len(self.data[h]) == 0:
            return np.zeros((self.d, values.shape[1]))
        return self._solve(h, self.next_feat_sums[h].T @ values)

    def solved_aggregate(self, h: int) -> np.ndarray:
        """Lambda_h^{-1} M_h^T as a (d, S) matrix, where M_h holds the
        per-next-state feature sums.  Regression weights for any per-state
        value vector V are then ``solved_aggregate(h) @ V``: the triangular
        solves are batched over unit targets once per episode instead of once
        per queried value function.  Cached until the next recorded episode.
        """
        cached = self._solved_cache.get(h)
        if cached is None:
            cached = self._solve(h, self.next_feat_sums[h].T)
            self._solved_cache[h] = cached
        return cached

    def _solve(self, h: int, target: np.ndarray) -> np.ndarray:
        L = self.chol[h]
        if _kernels.HAS_NUMBA:
            squeeze = target.ndim == 1
            rhs = np.ascontiguousarray(target[:, None] if squeeze else target, dtype=np.float64)
            out = _kernels.chol_solve(L, rhs)
            return out[:, 0] if squeeze else out
        y = solve_triangular(L, target, lower=True, check_finite=False)
        return solve_triangular(L.T, y, lower=False, check_finite=False)

    def num_samples(self, h: int) -> int:
        return len(self.data[h])
