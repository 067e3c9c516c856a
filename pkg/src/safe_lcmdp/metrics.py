"""Per-episode metrics records, their CSV format, and the shared episode loop.

The CSV layout is fixed: commented header lines carrying the config echo and
the exact optimal value / threshold / slack, then the column row

    episode,reward_value,utility_value,violation,cum_regret,cum_violation,cum_safe_deploys,lambda,wall_ms

Floats are written with shortest round-trip repr, so re-reading a file
recovers bit-identical values.  ``wall_ms`` is measured wall-clock time and is
the one column excluded from byte-level determinism; runs that need
byte-identical files set ``record_timing=False`` to zero it out.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .cmdp import ExplicitPolicy, LinearCmdp, evaluate_policy
from .exceptions import InvalidInputError

CSV_COLUMNS = (
    "episode",
    "reward_value",
    "utility_value",
    "violation",
    "cum_regret",
    "cum_violation",
    "cum_safe_deploys",
    "lambda",
    "wall_ms",
)


@dataclass(eq=False)
class MetricsLog:
    """Exact per-episode metrics for one seeded run."""

    config: dict
    pi_star_value: float
    b: float
    xi: float
    episode: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    reward_value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    utility_value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    violation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cum_regret: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cum_violation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cum_safe_deploys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wall_ms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def column(self, name: str) -> np.ndarray:
        return getattr(self, "lam" if name == "lambda" else name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
        buf.write(f"# pi_star_value: {self.pi_star_value!r}\n")
        buf.write(f"# b: {self.b!r}\n")
        buf.write(f"# xi: {self.xi!r}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        cols = [self.column(c) for c in CSV_COLUMNS]
        for i in range(len(self.episode)):
            buf.write(
                ",".join(
                    repr(float(col[i])) if col.dtype.kind == "f" else str(int(col[i])) for col in cols
                )
            )
            buf.write("\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "MetricsLog":
        header: dict[str, str] = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            key, _, value = lines[i][1:].partition(":")
            header[key.strip()] = value.strip()
            i += 1
        if i >= len(lines):
            raise InvalidInputError("metrics file has no column row")
        columns = lines[i].split(",")
        if tuple(columns) != CSV_COLUMNS:
            unexpected = [c for c in columns if c not in CSV_COLUMNS] or [
                c for c in CSV_COLUMNS if c not in columns
            ]
            raise InvalidInputError(f"metrics file column mismatch: offending column(s) {unexpected}")
        rows = [line.split(",") for line in lines[i + 1 :] if line]
        data = {c: np.array([r[j] for r in rows], dtype=np.float64) for j, c in enumerate(columns)}
        log = MetricsLog(
            config=json.loads(header.get("config", "{}")),
            pi_star_value=float(header.get("pi_star_value", "nan")),
            b=float(header.get("b", "nan")),
            xi=float(header.get("xi", "nan")),
            episode=data["episode"].astype(np.int64),
            reward_value=data["reward_value"],
            utility_value=data["utility_value"],
            violation=data["violation"],
            cum_regret=data["cum_regret"],
            cum_violation=data["cum_violation"],
            cum_safe_deploys=data["cum_safe_deploys"].astype(np.int64),
            lam=data["lambda"],
            wall_ms=data["wall_ms"],
        )
        return log


@dataclass(frozen=True, eq=False)
class EpisodeDecision:
    """What an agent chose to deploy in one episode.

    ``value_key`` marks policies the agent promises are identical across
    episodes (e.g. the safe policy); their exact values are computed once and
    cached under that key.  Fresh policies leave it None.
    """

    policy: ExplicitPolicy
    lam: float = 0.0
    safe_deployed: bool = False
    value_key: str | None = None


def run_episode_loop(
    cmdp: LinearCmdp,
    select,
    observe,
    episodes: int,
    pi_star_value: float,
    b: float,
    xi: float,
    config_echo: dict,
    rng: np.random.Generator,
    eval_stride: int = 1,
    record_timing: bool = True,
    trajectory_sink: list | None = None,
) -> MetricsLog:
    """Shared episode loop: select -> exact metrics -> sample -> observe.

    ``select(k)`` returns an :class:`EpisodeDecision` for episode k (1-based);
    ``observe(trajectory)`` feeds the sampled trajectory back to the agent.
    Exact reward/utility values are computed with the ground-truth model every
    ``eval_stride``-th episode (all agents still act every episode).
    """
    if episodes < 1:
        raise InvalidInputError("episode budget must be >= 1")
    k_axis = []
    rewards, utilities, violations = [], [], []
    cum_regret, cum_violation, cum_safe = [], [], []
    lam_col, wall_col = [], []
    total_regret = 0.0
    total_violation = 0.0
    total_safe = 0
    value_cache: dict[int, tuple[float, float]] = {}

    for k in range(1, episodes + 1):
        t0 = time.perf_counter() if record_timing else 0.0
        decision = select(k)
        recorded = (k - 1) % eval_stride == 0
        if recorded:
            cached = value_cache.get(decision.value_key) if decision.value_key else None
            if cached is None:
                _, r_val = evaluate_policy(cmdp, decision.policy, cmdp.rewards)
                _, u_val = evaluate_policy(cmdp, decision.policy, cmdp.utilities)
                if decision.value_key:
                    value_cache[decision.value_key] = (r_val, u_val)
            else:
                r_val, u_val = cached
            vio = max(b - u_val, 0.0)
            total_regret += pi_star_value - r_val
            total_violation += vio
        total_safe += int(decision.safe_deployed)
        trajectory = cmdp.sample_trajectory(decision.policy, rng)
        observe(trajectory)
        if trajectory_sink is not None:
            trajectory_sink.append(trajectory)
        if recorded:
            k_axis.append(k)
            rewards.append(r_val)
            utilities.append(u_val)
            violations.append(vio)
            cum_regret.append(total_regret)
            cum_violation.append(total_violation)
            cum_safe.append(total_safe)
            lam_col.append(decision.lam)
            wall_col.append((time.perf_counter() - t0) * 1e3 if record_timing else 0.0)

    return MetricsLog(
        config=config_echo,
        pi_star_value=pi_star_value,
        b=b,
        xi=xi,
        episode=np.array(k_axis, dtype=np.int64),
        reward_value=np.array(rewards),
        utility_value=np.array(utilities),
        violation=np.array(violations),
        cum_regret=np.array(cum_regret),
        cum_violation=np.array(cum_violation),
        cum_safe_deploys=np.array(cum_safe, dtype=np.int64),
        lam=np.array(lam_col),
        wall_ms=np.array(wall_col),
    )
