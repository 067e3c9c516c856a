"""Seeded constructors for the three benchmark environments.

All three return a ground-truth :class:`LinearCmdp` plus a safe-policy oracle
derived from it.  Tabular environments are expressed as linear CMDPs with
one-hot features (d = S*A) so that every agent runs unmodified.  Construction
draws from the named "env-gen" sub-stream of the master seed; if a generated
model fails validation (or leaves no safety slack), generation retries on the
next sub-stream rather than silently accepting the draw.
"""

from __future__ import annotations

import numpy as np

from .cmdp import ExplicitPolicy, LinearCmdp, SafePolicyOracle, dp_optimal, evaluate_policy
from .exceptions import InvalidInputError, NoSlackError
from .seeding import dirichlet, substream

_MAX_GEN_ATTEMPTS = 16

SLOW, FAST = 0, 1  # streaming action indices (paper-style labels 1 and 2)


def derive_safe_policy(cmdp: LinearCmdp) -> SafePolicyOracle:
    """Safe policy as the utility-greedy DP policy; slack is exact.

    The greedy policy maximizes the utility value, so the slack
    xi = V_utility(greedy) - b is the largest achievable and is strictly
    positive whenever b sits below the best utility value.
    """
    policy, best_utility = dp_optimal(cmdp, cmdp.utilities)
    xi = best_utility - cmdp.b
    if xi <= 0:
        raise NoSlackError(f"threshold b={cmdp.b} leaves no slack (max utility {best_utility})")
    return SafePolicyOracle(policy=policy, slack=xi)


def _one_hot_features(S: int, A: int) -> np.ndarray:
    return np.eye(S * A).reshape(S, A, S * A)


def _retrying(builder, seed: int):
    last_err = None
    for attempt in range(_MAX_GEN_ATTEMPTS):
        rng = substream(seed, f"env-gen:{attempt}")
        try:
            return builder(rng)
        except (InvalidInputError, NoSlackError) as err:  # retry next sub-stream
            last_err = err
    raise InvalidInputError(f"environment generation failed after {_MAX_GEN_ATTEMPTS} attempts: {last_err}")


def gen_tabular(seed: int) -> tuple[LinearCmdp, SafePolicyOracle]:
    """Random dense tabular CMDP: |S|=5, |A|=3, H=4, Dirichlet(0.1) rows.

    Rewards and utilities are 1 with probability 0.9 and 0 otherwise, drawn
    per (h, s, a).  One-hot features, fixed random initial state, and
    threshold b = 0.6 * max_pi V_utility.
    """
    S, A, H = 5, 3, 4

    def build(rng):
        transitions = dirichlet(np.full(S, 0.1), rng, size=H * S * A).reshape(H, S, A, S)
        rewards = (rng.random((H, S, A)) >= 0.1).astype(np.float64)
        utilities = (rng.random((H, S, A)) >= 0.1).astype(np.float64)
        s1 = int(rng.integers(S))
        return _assemble_tabular(H, S, A, transitions, rewards, utilities, s1, factor=0.6)

    return _retrying(build, seed)


def _assemble_tabular(H, S, A, transitions, rewards, utilities, s1, factor):
    d = S * A
    theta_r = rewards.reshape(H, d)
    theta_u = utilities.reshape(H, d)
    probe = LinearCmdp(
        H=H,
        features=_one_hot_features(S, A),
        transitions=transitions,
        theta_r=theta_r,
        theta_u=theta_u,
        b=0.0,
        s1=s1,
    )
    _, best_utility = dp_optimal(probe, probe.utilities)
    cmdp = LinearCmdp(
        H=H,
        features=probe.features,
        transitions=transitions,
        theta_r=theta_r,
        theta_u=theta_u,
        b=factor * best_utility,
        s1=s1,
    )
    return cmdp, derive_safe_policy(cmdp)


def gen_streaming(seed: int) -> tuple[LinearCmdp, SafePolicyOracle]:
    """Media-buffer CMDP: a base station streams packets into a playout buffer.

    Buffer length is the state (0..L with L=5), actions are the slow and fast
    service options.  The fast service delivers a packet with probability
    mu1 ~ U[0.5, 0.9], the slow one with 1 - mu1; playout consumes a packet
    with probability rho ~ U[0.1, 0.4]; the buffer moves by the arrival minus
    the departure, clamped to [0, L].  Reward 1 whenever the buffer holds at
    least 0.3*L packets; utility 1 whenever the slow (cheap) service is used;
    b = 0.6 * max V_utility, which equals 0.6 * H for the always-slow policy.
    """
    L = 5
    S, A, H = L + 1, 2, 4

    def build(rng):
        mu1 = rng.uniform(0.5, 0.9)
        rho = rng.uniform(0.1, 0.4)
        arrival = {SLOW: 1.0 - mu1, FAST: mu1}
        transitions = np.zeros((H, S, A, S))
        for s in range(S):
            for a in (SLOW, FAST):
                p_arr = arrival[a]
                for arr in (0, 1):
                    for dep in (0, 1):
                        prob = (p_arr if arr else 1 - p_arr) * (rho if dep else 1 - rho)
                        s_next = min(max(s + arr - dep, 0), L)
                        transitions[:, s, a, s_next] += prob
        rewards = np.zeros((H, S, A))
        rewards[:, [s for s in range(S) if s >= 0.3 * L], :] = 1.0
        utilities = np.zeros((H, S, A))
        utilities[:, :, SLOW] = 1.0
        return _assemble_tabular(H, S, A, transitions, rewards, utilities, s1=0, factor=0.6)

    return _retrying(build, seed)


def gen_linear(seed: int, num_states: int = 100, d: int = 5) -> tuple[LinearCmdp, SafePolicyOracle]:
    """Random linear CMDP whose state count exceeds the feature dimension.

    Features phi(s, a) and the per-dimension next-state measures are both
    Dirichlet(0.1) draws, so every transition row P_h(.|s, a) is a convex
    combination of probability vectors and hence a valid distribution
    (verified explicitly at construction).  theta_r, theta_u ~ U[0, 1]^d;
    b = 0.68 * max V_utility.
    """
    if num_states <= d:
        raise InvalidInputError("gen_linear requires num_states > d")
    A, H = 3, 4

    def build(rng):
        features = dirichlet(np.full(d, 0.1), rng, size=num_states * A).reshape(num_states, A, d)
        measures = dirichlet(np.full(num_states, 0.1), rng, size=H * d).reshape(H, d, num_states)
        transitions = np.einsum("sad,hdt->hsat", features, measures)
        row_sums = transitions.sum(axis=3)
        if np.max(np.abs(row_sums - 1.0)) > 1e-9 or transitions.min() < 0:
            raise InvalidInputError("generated transition rows failed validation")
        theta_r = rng.uniform(0.0, 1.0, size=(H, d))
        theta_u = rng.uniform(0.0, 1.0, size=(H, d))
        s1 = int(rng.integers(num_states))
        probe = LinearCmdp(
            H=H, features=features, transitions=transitions,
            theta_r=theta_r, theta_u=theta_u, b=0.0, s1=s1,
        )
        _, best_utility = dp_optimal(probe, probe.utilities)
        cmdp = LinearCmdp(
            H=H, features=features, transitions=transitions,
            theta_r=theta_r, theta_u=theta_u, b=0.68 * best_utility, s1=s1,
        )
        return cmdp, derive_safe_policy(cmdp)

    return _retrying(build, seed)


GENERATORS = {
    "tabular": gen_tabular,
    "streaming": gen_streaming,
    "linear": gen_linear,
}


def generate(env: str, seed: int, **params) -> tuple[LinearCmdp, SafePolicyOracle]:
    try:
        gen = GENERATORS[env]
    except KeyError:
        raise InvalidInputError(f"unknown environment {env!r}; choose from {sorted(GENERATORS)}")
    return gen(seed, **params)
