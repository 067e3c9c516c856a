"""Safe exploration in finite-action linear constrained bandits.

One round: estimate the reward/utility vectors by ridge regression, widen
them with elliptical bonuses (optimistic for reward, pessimistic for
utility), then either deploy the known safe distribution-- whenever the agent
is still unconfident about the safe distribution itself -- or play the
distribution solving the optimistic-pessimistic program over the simplex.

The action set is restricted to finite sets of vectors so the program is
exactly solvable by vertex enumeration: with one linear constraint an optimal
vertex is supported on at most two actions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import chol_update
from .exceptions import InvalidInputError, NoSlackError
from .metrics import MetricsLog
from .seeding import substream

_MAX_GEN_ATTEMPTS = 16


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """Ground-truth linear constrained bandit.

    ``actions`` is an (n, d) matrix of unit-or-smaller vectors; rewards and
    utilities are noisy linear responses theta . a with Gaussian noise of
    scale ``noise_scale`` (an R-sub-Gaussian choice).  ``safe_dist`` is a
    known distribution whose exact utility clears the threshold by ``slack``.
    """

    actions: np.ndarray
    theta_r: np.ndarray
    theta_u: np.ndarray
    noise_scale: float
    b: float
    safe_dist: np.ndarray
    slack: float
    norm_bound: float = 1.0

    def __post_init__(self):
        actions = np.asarray(self.actions, dtype=np.float64)
        object.__setattr__(self, "actions", actions)
        if np.max(np.linalg.norm(actions, axis=1)) > 1.0 + 1e-9:
            raise InvalidInputError("action vectors must have norm <= 1")
        for name in ("theta_r", "theta_u"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if np.linalg.norm(v) > self.norm_bound + 1e-9:
                raise InvalidInputError(f"{name} exceeds the norm bound")
            object.__setattr__(self, name, v)
        sd = np.asarray(self.safe_dist, dtype=np.float64)
        if sd.shape != (actions.shape[0],) or abs(sd.sum() - 1.0) > 1e-9 or sd.min() < 0:
            raise InvalidInputError("safe_dist must be a distribution over the actions")
        object.__setattr__(self, "safe_dist", sd)
        if self.exact_utility(sd) < self.b + self.slack - 1e-9:
            raise InvalidInputError("safe_dist does not satisfy its declared slack")

    @property
    def num_actions(self) -> int:
        return self.actions.shape[0]

    @property
    def d(self) -> int:
        return self.actions.shape[1]

    def exact_reward(self, dist: np.ndarray) -> float:
        return float(self.theta_r @ (dist @ self.actions))

    def exact_utility(self, dist: np.ndarray) -> float:
        return float(self.theta_u @ (dist @ self.actions))


def default_instance(seed: int, num_actions: int = 20, d: int = 4, noise_scale: float = 0.1) -> BanditInstance:
    """Synthetic instance: actions uniform on the unit sphere, theta uniform
    in the unit ball, b = 0.5 * best exact utility, safe policy = the point
    mass on the best-utility action (slack exactly b)."""

    def build(rng):
        raw = rng.standard_normal((num_actions, d))
        actions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        theta_r = _uniform_ball(rng, d)
        theta_u = _uniform_ball(rng, d)
        utilities = actions @ theta_u
        best = int(np.argmax(utilities))
        b = 0.5 * utilities[best]
        slack = utilities[best] - b
        if slack <= 1e-6:
            raise NoSlackError("degenerate utility landscape")
        safe_dist = np.zeros(num_actions)
        safe_dist[best] = 1.0
        return BanditInstance(
            actions=actions, theta_r=theta_r, theta_u=theta_u,
            noise_scale=noise_scale, b=float(b), safe_dist=safe_dist, slack=float(slack),
        )

    last = None
    for attempt in range(_MAX_GEN_ATTEMPTS):
        rng = substream(seed, f"bandit-gen:{attempt}")
        try:
            return build(rng)
        except (InvalidInputError, NoSlackError) as err:
            last = err
    raise InvalidInputError(f"bandit generation failed: {last}")


def _uniform_ball(rng: np.random.Generator, d: int) -> np.ndarray:
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x) * rng.random() ** (1.0 / d)


def solve_opt_pes(obj: np.ndarray, con: np.ndarray, b: float) -> np.ndarray | None:
    """Maximize sum pi(a) obj(a) over the simplex subject to sum pi(a) con(a) >= b.

    Exact enumeration: the best single feasible action, plus for every
    feasible/infeasible pair the mixture sitting on the constraint boundary.
    Returns None when even the best constraint value misses b (infeasible).
    Ties resolve to the lexicographically smallest support.
    """
    obj = np.asarray(obj, dtype=np.float64)
    con = np.asarray(con, dtype=np.float64)
    n = obj.shape[0]
    if float(np.max(con)) < b:
        return None
    best_value = -np.inf
    best_support: tuple[int, ...] = ()
    best_dist: np.ndarray | None = None
    for i in range(n):
        if con[i] >= b and (obj[i] > best_value or (obj[i] == best_value and (i,) < best_support)):
            dist = np.zeros(n)
            dist[i] = 1.0
            best_value, best_support, best_dist = float(obj[i]), (i,), dist
    for i in range(n):
        if con[i] <= b:
            continue
        for j in range(n):
            if con[j] >= b:
                continue
            alpha = (b - con[j]) / (con[i] - con[j])  # weight on the feasible action i
            value = alpha * obj[i] + (1.0 - alpha) * obj[j]
            support = (min(i, j), max(i, j))
            if value > best_value or (value == best_value and support < best_support):
                dist = np.zeros(n)
                dist[i] = alpha
                dist[j] = 1.0 - alpha
                best_value, best_support, best_dist = float(value), support, dist
    return best_dist


class BanditAgentState:
    """OPLB-SP agent state: ridge Gram, response sums, and bonus scalers.

    The scalers follow the algorithm's input line: the pessimistic scaler is
    B + R sqrt(d ln(4K/delta)) and the optimistic one multiplies it by
    (1 + 2B/slack) to compensate the constraint-induced pessimism.
    """

    def __init__(self, instance: BanditInstance, horizon_rounds: int, delta: float = 0.01, rho: float = 1.0):
        if rho <= 0:
            raise InvalidInputError("rho must be positive")
        d = instance.d
        self.rho = float(rho)
        self.gram = rho * np.eye(d)
        self.chol = np.sqrt(rho) * np.eye(d)
        self.sum_reward = np.zeros(d)
        self.sum_utility = np.zeros(d)
        self.rounds = 0
        B, R = instance.norm_bound, instance.noise_scale
        self.c_p = B + R * np.sqrt(d * np.log(4.0 * horizon_rounds / delta))
        self.c_o = self.c_p * (1.0 + 2.0 * B / instance.slack)

    def estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """theta-hat vectors recomputed from the Gram factor and target sums."""
        stacked = np.column_stack([self.sum_reward, self.sum_utility])
        y = np.linalg.solve(self.chol, stacked)
        out = np.linalg.solve(self.chol.T, y)
        return out[:, 0], out[:, 1]

    def bonuses(self, actions: np.ndarray) -> np.ndarray:
        """Per-action elliptical widths ||a|| in the inverse-Gram norm."""
        y = np.linalg.solve(self.chol, actions.T)
        return np.sqrt(np.sum(y * y, axis=0))

    def update(self, action: np.ndarray, reward: float, utility: float) -> None:
        self.gram += np.outer(action, action)
        chol_update(self.chol, action)
        self.sum_reward += action * reward
        self.sum_utility += action * utility
        self.rounds += 1


@dataclass(frozen=True, eq=False)
class BanditRound:
    dist: np.ndarray
    safe_deployed: bool
    unconfident: bool
    infeasible_fallback: bool


def oplbsp_round(agent: BanditAgentState, instance: BanditInstance, rng: np.random.Generator) -> BanditRound:
    """One round of OPLB-SP: trigger check, Opt-Pes solve, play, update."""
    beta = agent.bonuses(instance.actions)
    beta_safe = float(instance.safe_dist @ beta)
    unconfident = agent.c_p * beta_safe > instance.slack / 2.0
    infeasible = False
    if unconfident:
        dist = instance.safe_dist
    else:
        theta_r_hat, theta_u_hat = agent.estimates()
        obj = instance.actions @ theta_r_hat + agent.c_o * beta
        con = instance.actions @ theta_u_hat - agent.c_p * beta
        dist = solve_opt_pes(obj, con, instance.b)
        if dist is None:  # cannot certify any distribution: fall back to safety
            dist = instance.safe_dist
            infeasible = True
    idx = int(rng.choice(instance.num_actions, p=dist))
    action = instance.actions[idx]
    reward = float(instance.theta_r @ action + rng.normal(0.0, instance.noise_scale))
    utility = float(instance.theta_u @ action + rng.normal(0.0, instance.noise_scale))
    agent.update(action, reward, utility)
    return BanditRound(
        dist=dist,
        safe_deployed=unconfident or infeasible,
        unconfident=unconfident,
        infeasible_fallback=infeasible,
    )


def optimal_safe_dist(instance: BanditInstance) -> tuple[np.ndarray, float]:
    """Best safe distribution under the exact parameters (regret reference)."""
    obj = instance.actions @ instance.theta_r
    con = instance.actions @ instance.theta_u
    dist = solve_opt_pes(obj, con, instance.b)
    if dist is None:
        raise NoSlackError("instance admits no safe distribution")
    return dist, float(obj @ dist)


def run_oplbsp(
    instance: BanditInstance,
    rounds: int,
    seed: int,
    delta: float = 0.01,
    rho: float = 1.0,
    record_timing: bool = True,
    config_echo: dict | None = None,
    round_sink: list | None = None,
) -> MetricsLog:
    """Seeded OPLB-SP run emitting the shared metrics schema.

    ``lambda`` has no bandit counterpart and is recorded as 0; the
    safe-deploy counter counts trigger rounds plus infeasible fallbacks.
    ``round_sink`` collects the per-round :class:`BanditRound` outcomes.
    """
    import time

    if rounds < 1:
        raise InvalidInputError("round budget must be >= 1")
    agent = BanditAgentState(instance, rounds, delta=delta, rho=rho)
    rng = substream(seed, "bandit-noise")
    _, v_star = optimal_safe_dist(instance)

    episode = np.arange(1, rounds + 1, dtype=np.int64)
    reward_value = np.empty(rounds)
    utility_value = np.empty(rounds)
    violation = np.empty(rounds)
    lam = np.zeros(rounds)
    wall = np.zeros(rounds)
    cum_regret = np.empty(rounds)
    cum_violation = np.empty(rounds)
    cum_safe = np.empty(rounds, dtype=np.int64)

    total_regret = 0.0
    total_violation = 0.0
    total_safe = 0
    for k in range(rounds):
        t0 = time.perf_counter() if record_timing else 0.0
        outcome = oplbsp_round(agent, instance, rng)
        r_val = instance.exact_reward(outcome.dist)
        u_val = instance.exact_utility(outcome.dist)
        vio = max(instance.b - u_val, 0.0)
        total_regret += v_star - r_val
        total_violation += vio
        total_safe += int(outcome.safe_deployed)
        reward_value[k] = r_val
        utility_value[k] = u_val
        violation[k] = vio
        cum_regret[k] = total_regret
        cum_violation[k] = total_violation
        cum_safe[k] = total_safe
        if round_sink is not None:
            round_sink.append(outcome)
        if record_timing:
            wall[k] = (time.perf_counter() - t0) * 1e3

    log = MetricsLog(
        config=config_echo if config_echo is not None else {"algo": "oplbsp", "seed": seed, "episodes": rounds, "delta": delta, "rho": rho},
        pi_star_value=v_star,
        b=instance.b,
        xi=instance.slack,
        episode=episode,
        reward_value=reward_value,
        utility_value=utility_value,
        violation=violation,
        cum_regret=cum_regret,
        cum_violation=cum_violation,
        cum_safe_deploys=cum_safe,
        lam=lam,
        wall_ms=wall,
    )
    return log
