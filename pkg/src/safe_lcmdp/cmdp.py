"""Finite linear constrained MDPs: ground-truth model, policies, and exact evaluation.

States and actions are dense integer indices; every table is a dense numpy
array.  Step indices are 0-based internally (``h`` in ``0..H-1``).  The
transition table is the single source of truth for the dynamics; generated
linear environments fold their factored form into it at construction time.
All types are immutable after construction and all operations here are pure,
so instances can be shared freely across worker processes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError

_PROB_ATOL = 1e-10
_POLICY_ATOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class LinearCmdp:
    """Ground-truth constrained MDP with a linear feature map.

    Fields
    ------
    H:            horizon (number of steps per episode)
    features:     phi(s, a), shape (S, A, d), each row norm <= 1
    transitions:  P_h(s' | s, a), shape (H, S, A, S), rows sum to 1
    theta_r:      reward vectors, shape (H, d); r_h(s, a) = theta_r[h] . phi(s, a)
    theta_u:      utility vectors, shape (H, d); u_h likewise
    b:            constraint threshold in [0, H]
    s1:           fixed initial state index
    """

    H: int
    features: np.ndarray
    transitions: np.ndarray
    theta_r: np.ndarray
    theta_u: np.ndarray
    b: float
    s1: int
    rewards: np.ndarray = field(init=False)
    utilities: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "features", _readonly(self.features))
        object.__setattr__(self, "transitions", _readonly(self.transitions))
        object.__setattr__(self, "theta_r", _readonly(self.theta_r))
        object.__setattr__(self, "theta_u", _readonly(self.theta_u))
        S, A, d = self.features.shape
        if self.transitions.shape != (self.H, S, A, S):
            raise InvalidInputError(
                f"transitions shape {self.transitions.shape} != {(self.H, S, A, S)}"
            )
        if self.theta_r.shape != (self.H, d) or self.theta_u.shape != (self.H, d):
            raise InvalidInputError("theta_r / theta_u must have shape (H, d)")
        if not 0 <= self.s1 < S:
            raise InvalidInputError(f"initial state {self.s1} out of range")
        if not 0.0 <= self.b <= self.H + _PROB_ATOL:
            raise InvalidInputError(f"threshold b={self.b} outside [0, H]")
        # r_h(s,a) and u_h(s,a) as dense (H, S, A) tables, derived once.
        object.__setattr__(self, "rewards", _readonly(np.einsum("hd,sad->hsa", self.theta_r, self.features)))
        object.__setattr__(self, "utilities", _readonly(np.einsum("hd,sad->hsa", self.theta_u, self.features)))
        self._validate()

    def _validate(self) -> None:
        if np.any(self.transitions < -_PROB_ATOL):
            raise InvalidInputError("negative transition probability")
        sums = self.transitions.sum(axis=3)
        if np.max(np.abs(sums - 1.0)) > _PROB_ATOL:
            raise InvalidInputError("transition rows must sum to 1 within 1e-10")
        norms = np.linalg.norm(self.features, axis=2)
        if np.max(norms) > 1.0 + 1e-9:
            raise InvalidInputError("feature norms must satisfy ||phi(s,a)||_2 <= 1")
        for name, table in (("reward", self.rewards), ("utility", self.utilities)):
            if table.min() < -1e-9 or table.max() > 1.0 + 1e-9:
                raise InvalidInputError(f"{name} values must lie in [0, 1]")

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    @property
    def num_actions(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def sample_trajectory(self, policy: "ExplicitPolicy", rng: np.random.Generator) -> list[tuple[int, int, int]]:
        """Roll out one episode from s1; returns H triples (s, a, s')."""
        _check_policy_shape(self, policy)
        out = []
        s = self.s1
        for h in range(self.H):
            a = _sample_index(policy.probs[h, s], rng)
            s_next = _sample_index(self.transitions[h, s, a], rng)
            out.append((s, a, s_next))
            s = s_next
        return out


def _sample_index(p: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF sampling; cheaper than Generator.choice for small vectors
    c = np.cumsum(p)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right").clip(0, len(p) - 1))


@dataclass(frozen=True, eq=False)
class ExplicitPolicy:
    """Per-step, per-state action distributions pi_h(a|s), shape (H, S, A)."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))
        if self.probs.ndim != 3:
            raise InvalidInputError("policy table must have shape (H, S, A)")
        if np.any(self.probs < 0):
            raise InvalidInputError("policy probabilities must be nonnegative")
        sums = self.probs.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > _POLICY_ATOL:
            raise InvalidInputError("policy rows must sum to 1 within 1e-12")

    @staticmethod
    def uniform(H: int, S: int, A: int) -> "ExplicitPolicy":
        return ExplicitPolicy(np.full((H, S, A), 1.0 / A))

    @staticmethod
    def deterministic(actions: np.ndarray, A: int) -> "ExplicitPolicy":
        """Build a one-hot policy from an (H, S) table of action indices."""
        H, S = actions.shape
        probs = np.zeros((H, S, A))
        h_idx, s_idx = np.meshgrid(np.arange(H), np.arange(S), indexing="ij")
        probs[h_idx, s_idx, actions] = 1.0
        return ExplicitPolicy(probs)


@dataclass(frozen=True, eq=False)
class SafePolicyOracle:
    """A known strictly safe policy together with its slack xi > 0.

    The exact utility value of ``policy`` is at least ``b + xi`` (up to 1e-9)
    on the environment the oracle was derived from.
    """

    policy: ExplicitPolicy
    slack: float

    def __post_init__(self):
        if self.slack <= 0:
            raise InvalidInputError("safe-policy slack must be positive")


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Per-step state-action visitation probabilities w_h(s, a), shape (H, S, A)."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _readonly(self.w))


def _check_policy_shape(cmdp: LinearCmdp, policy: ExplicitPolicy) -> None:
    expected = (cmdp.H, cmdp.num_states, cmdp.num_actions)
    if policy.probs.shape != expected:
        raise InvalidInputError(f"policy shape {policy.probs.shape} != {expected}")


def evaluate_policy(
    cmdp: LinearCmdp,
    policy: ExplicitPolicy,
    g: np.ndarray,
    kappa: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Exact (entropy-regularized) policy evaluation by backward recursion.

    V_h(s) = sum_a pi_h(a|s) (g_h(s,a) + sum_{s'} P_h(s'|s,a) V_{h+1}(s')
             - kappa * ln pi_h(a|s)),   V_H = 0,
    with the convention 0 * ln 0 = 0.  Returns the full (H+1, S) value table
    and the scalar V_0(s1).
    """
    _check_policy_shape(cmdp, policy)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (cmdp.H, cmdp.num_states, cmdp.num_actions):
        raise InvalidInputError(f"reward table shape {g.shape} mismatches the CMDP")
    if kappa < 0:
        raise InvalidInputError("kappa must be nonnegative")
    H, S = cmdp.H, cmdp.num_states
    values = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        q = g[h] + cmdp.transitions[h] @ values[h + 1]
        pi = policy.probs[h]
        values[h] = np.einsum("sa,sa->s", pi, q)
        if kappa > 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                plogp = np.where(pi > 0.0, pi * np.log(np.where(pi > 0.0, pi, 1.0)), 0.0)
            values[h] -= kappa * plogp.sum(axis=1)
    return values, float(values[0, cmdp.s1])


def occupancy(cmdp: LinearCmdp, policy: ExplicitPolicy) -> OccupancyMeasure:
    """Occupancy measure w_h(s, a) = P(s_h = s, a_h = a) by forward recursion."""
    _check_policy_shape(cmdp, policy)
    H, S, A = cmdp.H, cmdp.num_states, cmdp.num_actions
    w = np.zeros((H, S, A))
    state_dist = np.zeros(S)
    state_dist[cmdp.s1] = 1.0
    for h in range(H):
        w[h] = state_dist[:, None] * policy.probs[h]
        state_dist = np.einsum("sa,sat->t", w[h], cmdp.transitions[h])
    return OccupancyMeasure(w)


def dp_optimal(cmdp: LinearCmdp, g: np.ndarray) -> tuple[ExplicitPolicy, float]:
    """Unconstrained backward induction: greedy policy and optimal value for g.

    Ties break toward the lowest action index so results are deterministic
    across platforms.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (cmdp.H, cmdp.num_states, cmdp.num_actions):
        raise InvalidInputError(f"reward table shape {g.shape} mismatches the CMDP")
    H, S = cmdp.H, cmdp.num_states
    values = np.zeros((H + 1, S))
    greedy = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q = g[h] + cmdp.transitions[h] @ values[h + 1]
        greedy[h] = np.argmax(q, axis=1)  # first max wins: lowest index
        values[h] = q[np.arange(S), greedy[h]]
    policy = ExplicitPolicy.deterministic(greedy, cmdp.num_actions)
    return policy, float(values[0, cmdp.s1])


def softmax_distribution(x: np.ndarray, kappa: float) -> np.ndarray:
    """softmax(x / kappa) with max-subtraction for numerical stability."""
    x = np.asarray(x, dtype=np.float64)
    if kappa <= 0:
        raise InvalidInputError("kappa must be positive")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("softmax input must be finite")
    z = x / kappa
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax (logits minus log-sum-exp); safe against underflow."""
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# Environment serialization (JSON, bit-exact round trip)
# ---------------------------------------------------------------------------

def env_to_json(cmdp: LinearCmdp, safe: SafePolicyOracle) -> str:
    """Serialize an environment and its safe-policy oracle to a JSON document.

    Floats are emitted through Python's shortest round-trip repr, so parsing
    the document recovers bit-identical values.
    """
    doc = {
        "H": cmdp.H,
        "num_states": cmdp.num_states,
        "num_actions": cmdp.num_actions,
        "d": cmdp.d,
        "features": cmdp.features.ravel().tolist(),
        "transitions": cmdp.transitions.ravel().tolist(),
        "theta_r": cmdp.theta_r.ravel().tolist(),
        "theta_u": cmdp.theta_u.ravel().tolist(),
        "b": cmdp.b,
        "s1": cmdp.s1,
        "safe_policy": safe.policy.probs.ravel().tolist(),
        "slack": safe.slack,
    }
    return json.dumps(doc)


def env_from_json(text: str) -> tuple[LinearCmdp, SafePolicyOracle]:
    doc = json.loads(text)
    H, S, A, d = doc["H"], doc["num_states"], doc["num_actions"], doc["d"]
    cmdp = LinearCmdp(
        H=H,
        features=np.array(doc["features"]).reshape(S, A, d),
        transitions=np.array(doc["transitions"]).reshape(H, S, A, S),
        theta_r=np.array(doc["theta_r"]).reshape(H, d),
        theta_u=np.array(doc["theta_u"]).reshape(H, d),
        b=doc["b"],
        s1=doc["s1"],
    )
    safe = SafePolicyOracle(
        policy=ExplicitPolicy(np.array(doc["safe_policy"]).reshape(H, S, A)),
        slack=doc["slack"],
    )
    return cmdp, safe
