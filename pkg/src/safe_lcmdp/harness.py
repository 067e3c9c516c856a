"""Seeded experiment runner: config, per-seed workers, file output, summaries.

One experiment = one (environment, algorithm) pair swept over seeds.  Each
seed's run is self-contained (environment generation, the exact-optimum
oracle, the agent loop) and lands in its own CSV, written atomically via a
temp file + rename.  Seeds run in a process pool capped by the
``SAFE_LCMDP_THREADS`` environment variable.  A failed seed leaves a
``.error.json`` diagnostic next to where its metrics file would have gone and
does not disturb the other seeds.
"""

from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bandit as bandit_mod
from . import baselines, envs, lpsolve, opse
from .exceptions import InvalidInputError
from .metrics import CSV_COLUMNS, MetricsLog

ALGOS = ("opse", "ghosh", "dope", "uniform", "oplbsp")
ENVS = ("tabular", "streaming", "linear", "bandit")

# Desk-scale defaults per environment.  Tabular/streaming scalers follow the
# benchmark's published values; the linear environment has no published set,
# so its values come from a small sweep balancing exploration and safety.
ENV_HYPERS: dict[str, dict] = {
    "tabular": dict(c_r=1.0, c_u=1.0, c_dagger=1.0, b_dagger=1.0, kappa=0.1),
    "streaming": dict(c_r=2.0, c_u=2.0, c_dagger=2.0, b_dagger=1.0, kappa=0.1),
    "linear": dict(c_r=1.0, c_u=1.0, c_dagger=1.0, b_dagger=1.0, kappa=0.05),
}
GHOSH_HYPERS: dict[str, dict] = {
    "tabular": dict(c_r=1.0, c_u=1.0, kappa=0.1),
    "streaming": dict(c_r=2.0, c_u=2.0, kappa=0.1),
    "linear": dict(c_r=1.0, c_u=1.0, kappa=0.05),
}
DOPE_HYPERS = dict(c_r=1.0, c_u=1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run and where to put it."""

    env: str
    algo: str
    episodes: int
    seeds: tuple[int, ...]
    out_dir: str
    env_params: dict = field(default_factory=dict)
    hypers: dict = field(default_factory=dict)
    eval_stride: int = 1
    record_timing: bool = True
    lp_method: str = "highs"  # extended-LP baseline only

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise InvalidInputError(f"unknown algo {self.algo!r}; choose from {ALGOS}")
        if self.env not in ENVS:
            raise InvalidInputError(f"unknown env {self.env!r}; choose from {ENVS}")
        if self.algo == "oplbsp" and self.env != "bandit":
            raise InvalidInputError("algo 'oplbsp' runs on env 'bandit'")
        if self.algo != "oplbsp" and self.env == "bandit":
            raise InvalidInputError("env 'bandit' is only for algo 'oplbsp'")
        if self.episodes < 1:
            raise InvalidInputError("episodes must be >= 1")
        if not self.seeds:
            raise InvalidInputError("at least one seed is required")
        if self.eval_stride < 1:
            raise InvalidInputError("eval_stride must be >= 1")

    def agent_config(self, seed: int) -> opse.OpseConfig:
        base = dict(ENV_HYPERS.get(self.env, ENV_HYPERS["tabular"]))
        if self.algo == "ghosh":
            base = dict(GHOSH_HYPERS.get(self.env, GHOSH_HYPERS["tabular"]))
            base.update(c_dagger=0.0, b_dagger=0.0)
        base.update(self.hypers)
        known = {f for f in opse.OpseConfig.__dataclass_fields__}
        base = {k: v for k, v in base.items() if k in known}
        return opse.OpseConfig(episodes=self.episodes, seed=seed, **base)

    def echo(self, seed: int) -> dict:
        doc = asdict(self)
        doc["seed"] = seed
        doc.pop("seeds", None)
        doc.pop("out_dir", None)
        return doc

    def file_name(self, seed: int) -> str:
        return f"{self.algo}_{self.env}_seed{seed}.csv"


@dataclass(frozen=True)
class SeedResult:
    seed: int
    path: str
    ok: bool
    error: str | None = None


def max_workers() -> int:
    cap = os.environ.get("SAFE_LCMDP_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return max(1, os.cpu_count() or 1)


def run_single_seed(cfg: ExperimentConfig, seed: int) -> MetricsLog:
    """Generate the seed's environment, solve the exact oracle, run the agent."""
    echo = cfg.echo(seed)
    if cfg.env == "bandit":
        instance = bandit_mod.default_instance(seed, **cfg.env_params)
        return bandit_mod.run_oplbsp(
            instance, cfg.episodes, seed,
            delta=cfg.hypers.get("delta", 0.01), rho=cfg.hypers.get("rho", 1.0),
            record_timing=cfg.record_timing, config_echo=echo,
        )
    cmdp, safe = envs.generate(cfg.env, seed, **cfg.env_params)
    # exact-regret reference; the large linear program goes through HiGHS
    lp_method = "highs" if cfg.env == "linear" else "simplex"
    solved = lpsolve.optimal_safe_policy(cmdp, method=lp_method)
    if solved is None:
        raise InvalidInputError("generated environment admits no safe policy")
    _, pi_star_value = solved
    if cfg.algo == "opse":
        agent_cfg = cfg.agent_config(seed)
        return opse.run(
            cmdp, agent_cfg, safe, pi_star_value,
            eval_stride=cfg.eval_stride, record_timing=cfg.record_timing, config_echo=echo,
        )
    if cfg.algo == "dope":
        hyp = dict(DOPE_HYPERS)
        hyp.update({k: v for k, v in cfg.hypers.items() if k in ("c_r", "c_u")})
        dope_cfg = opse.OpseConfig(episodes=cfg.episodes, seed=seed, c_r=hyp["c_r"], c_u=hyp["c_u"])
        return baselines.run_baseline(
            "dope", cmdp, safe, pi_star_value, cfg.episodes, seed, cfg=dope_cfg,
            eval_stride=cfg.eval_stride, record_timing=cfg.record_timing,
            config_echo=echo, lp_method=cfg.lp_method,
        )
    if cfg.algo in ("ghosh", "uniform"):
        return baselines.run_baseline(
            cfg.algo, cmdp, safe, pi_star_value, cfg.episodes, seed,
            cfg=cfg.agent_config(seed) if cfg.algo == "ghosh" else None,
            eval_stride=cfg.eval_stride, record_timing=cfg.record_timing, config_echo=echo,
        )
    raise InvalidInputError(f"unhandled algo {cfg.algo!r}")


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    out = Path(cfg.out_dir)
    target = out / cfg.file_name(seed)
    try:
        log = run_single_seed(cfg, seed)
        write_atomic(target, log.to_csv())
        return SeedResult(seed=seed, path=str(target), ok=True)
    except Exception as err:  # diagnostic record; sibling seeds keep running
        diag = {
            "seed": seed,
            "error": repr(err),
            "traceback": traceback.format_exc(),
            "config": cfg.echo(seed),
        }
        write_atomic(target.with_suffix(".error.json"), json.dumps(diag, indent=2))
        return SeedResult(seed=seed, path=str(target), ok=False, error=repr(err))


def run_experiment(cfg: ExperimentConfig) -> list[SeedResult]:
    """Run every seed (process pool, capped by SAFE_LCMDP_THREADS)."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(max_workers(), len(cfg.seeds))
    if workers <= 1:
        return [_seed_worker(cfg, seed) for seed in cfg.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_seed_worker, cfg, seed) for seed in cfg.seeds]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def summarize_logs(logs: list[MetricsLog]) -> str:
    """Mean and standard deviation per episode across seeds, as CSV text.

    All logs must share the same episode axis.  The standard deviation is the
    population one (ddof=0), matching the shaded bands downstream.
    """
    if not logs:
        raise InvalidInputError("nothing to summarize")
    axis = logs[0].episode
    for log in logs[1:]:
        if not np.array_equal(log.episode, axis):
            raise InvalidInputError("metrics files disagree on the episode axis")
    metric_cols = [c for c in CSV_COLUMNS if c != "episode"]
    header = ["episode"]
    for c in metric_cols:
        header += [f"{c}_mean", f"{c}_std"]
    lines = [",".join(header)]
    stacked = {c: np.stack([log.column(c).astype(np.float64) for log in logs]) for c in metric_cols}
    means = {c: stacked[c].mean(axis=0) for c in metric_cols}
    stds = {c: stacked[c].std(axis=0) for c in metric_cols}
    for i, ep in enumerate(axis):
        row = [str(int(ep))]
        for c in metric_cols:
            row += [repr(float(means[c][i])), repr(float(stds[c][i]))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def summarize_files(paths: list[str | Path]) -> str:
    logs = [MetricsLog.from_csv(Path(p).read_text()) for p in paths]
    return summarize_logs(logs)
