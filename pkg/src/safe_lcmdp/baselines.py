"""Comparison agents: optimistic dual softmax, extended-LP (DOPE-style), uniform.

The optimistic softmax variant reuses the composite-softmax machinery with
three modifications: no safe-policy branch, no compensation head
(c_dagger = b_dagger = 0), and an optimistic utility bonus (+c_u * beta
inside the clip instead of -c_u * beta).  Its bisection hunts the smallest
lambda whose *optimistic* utility clears the threshold; when even lambda_max
fails, it deploys the lambda_max policy (the most constraint-biased member of
the family) since the variant has no safe fallback.

The extended-LP agent is tabular-only: it maintains transition counts and
solves the confidence-set occupancy program each episode, deploying the safe
policy whenever the program is infeasible.
"""

from __future__ import annotations

import numpy as np

from .cmdp import ExplicitPolicy, LinearCmdp, SafePolicyOracle
from .estimator import EstimatorState
from .exceptions import SolverFailureError, UnsupportedEnvironmentError
from .lpsolve import dope_policy
from .metrics import EpisodeDecision, MetricsLog, run_episode_loop
from .opse import HeadWeights, LambdaEvaluations, OpseConfig, PolicyChoice
from .seeding import substream


def uniform_policy(cmdp: LinearCmdp) -> ExplicitPolicy:
    """The constant 1/A policy."""
    return ExplicitPolicy.uniform(cmdp.H, cmdp.num_states, cmdp.num_actions)


def ghosh_select_policy(
    est: EstimatorState,
    cmdp_view: LinearCmdp,
    cfg: OpseConfig,
) -> PolicyChoice:
    """Optimistic-softmax selection: same skeleton, optimistic u-head, no safe branch."""
    cfg = _ghosh_config(cfg)
    b = cmdp_view.b
    evals = LambdaEvaluations(
        est, cmdp_view.rewards, cmdp_view.utilities, cfg, cmdp_view.s1, u_bonus_sign=+1.0
    )
    weights0, v0 = evals.at(0.0)
    if v0 >= b:
        return PolicyChoice("softmax", 0.0, v0, weights0)
    weights_cap, v_cap = evals.at(cfg.lambda_max)
    if v_cap < b:
        # nothing in the family certifies the constraint: deploy the most
        # constraint-biased policy available
        return PolicyChoice("softmax", cfg.lambda_max, v_cap, weights_cap)
    from .opse import bisection

    result = bisection(evals, cfg, b)
    weights, value = evals.at(result.lam_hi)
    return PolicyChoice("softmax", result.lam_hi, value, weights)


def _ghosh_config(cfg: OpseConfig) -> OpseConfig:
    if cfg.c_dagger == 0.0 and cfg.b_dagger == 0.0:
        return cfg
    return OpseConfig(
        rho=cfg.rho, c_r=cfg.c_r, c_u=cfg.c_u, c_dagger=0.0, b_dagger=0.0,
        kappa=cfg.kappa, bisection_iters=cfg.bisection_iters, lambda_max=cfg.lambda_max,
        episodes=cfg.episodes, delta=cfg.delta, seed=cfg.seed,
    )


class GhoshAgent:
    """Episode driver for the optimistic dual softmax variant."""

    def __init__(self, cmdp: LinearCmdp, cfg: OpseConfig):
        self.cmdp = cmdp
        self.cfg = _ghosh_config(cfg)
        self.est = EstimatorState(cmdp.features, cmdp.H, cfg.rho)

    def select(self, k: int) -> EpisodeDecision:
        choice = ghosh_select_policy(self.est, self.cmdp, self.cfg)
        return EpisodeDecision(choice.weights.materialize(), lam=choice.lambda_selected)

    def observe(self, trajectory) -> None:
        self.est.record_episode(trajectory)


class DopeAgent:
    """Per-episode extended-LP baseline on tabular environments.

    Requires one-hot features (the LP enumerates states); any other feature
    map raises :class:`UnsupportedEnvironmentError`.
    """

    def __init__(self, cmdp: LinearCmdp, safe: SafePolicyOracle, c_r: float = 1.0,
                 c_u: float = 1.0, lp_method: str = "highs"):
        if not _is_tabular(cmdp):
            raise UnsupportedEnvironmentError("extended-LP baseline requires one-hot tabular features")
        self.cmdp = cmdp
        self.safe = safe
        self.c_r = c_r
        self.c_u = c_u
        self.lp_method = lp_method
        H, S, A = cmdp.H, cmdp.num_states, cmdp.num_actions
        self.counts = np.zeros((H, S, A, S))

    def select(self, k: int) -> EpisodeDecision:
        try:
            policy = dope_policy(
                self.counts, self.cmdp.rewards, self.cmdp.utilities,
                self.c_r, self.c_u, self.cmdp.b, self.cmdp.s1, method=self.lp_method,
            )
        except SolverFailureError:
            # a numerically inconclusive episode gets the safe fallback, same
            # as an infeasible one; the next episode rebuilds the program
            policy = None
        if policy is None:
            return EpisodeDecision(self.safe.policy, safe_deployed=True, value_key="safe")
        return EpisodeDecision(policy)

    def observe(self, trajectory) -> None:
        for h, (s, a, s_next) in enumerate(trajectory):
            self.counts[h, s, a, s_next] += 1.0


class UniformAgent:
    def __init__(self, cmdp: LinearCmdp):
        self.policy = uniform_policy(cmdp)

    def select(self, k: int) -> EpisodeDecision:
        return EpisodeDecision(self.policy, value_key="uniform")

    def observe(self, trajectory) -> None:
        pass


def _is_tabular(cmdp: LinearCmdp) -> bool:
    S, A, d = cmdp.features.shape
    if d != S * A:
        return False
    return bool(np.array_equal(cmdp.features.reshape(S * A, d), np.eye(d)))


def run_baseline(
    algo: str,
    cmdp: LinearCmdp,
    safe: SafePolicyOracle,
    pi_star_value: float,
    episodes: int,
    seed: int,
    cfg: OpseConfig | None = None,
    eval_stride: int = 1,
    record_timing: bool = True,
    config_echo: dict | None = None,
    trajectory_sink: list | None = None,
    lp_method: str = "highs",
) -> MetricsLog:
    """Run one baseline for ``episodes`` episodes under the shared loop."""
    if algo == "ghosh":
        agent = GhoshAgent(cmdp, cfg if cfg is not None else OpseConfig(episodes=episodes, seed=seed))
    elif algo == "dope":
        c_r = cfg.c_r if cfg is not None else 1.0
        c_u = cfg.c_u if cfg is not None else 1.0
        agent = DopeAgent(cmdp, safe, c_r=c_r, c_u=c_u, lp_method=lp_method)
    elif algo == "uniform":
        agent = UniformAgent(cmdp)
    else:
        raise UnsupportedEnvironmentError(f"unknown baseline {algo!r}")
    rng = substream(seed, "trajectory-noise")
    echo = config_echo if config_echo is not None else {"algo": algo, "seed": seed, "episodes": episodes}
    return run_episode_loop(
        cmdp, agent.select, agent.observe, episodes, pi_star_value,
        cmdp.b, safe.slack, echo, rng,
        eval_stride=eval_stride, record_timing=record_timing, trajectory_sink=trajectory_sink,
    )
