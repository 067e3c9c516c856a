"""Three-panel figure rendering: regret, violation regret, safe deployments.

One figure per panel per environment, each saved as PNG and SVG.  Rendering
is a pure function of the input files: styles are pinned, fonts and ids are
salted deterministically, and date metadata is stripped, so re-running on the
same inputs reproduces the images byte for byte.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lcmdp-plots"

import matplotlib.pyplot as plt

from .metrics_io import MetricsFile

PANELS = (
    ("regret", "cum_regret", "cumulative regret"),
    ("violation", "cum_violation", "cumulative violation regret"),
    ("safe_deploys", "cum_safe_deploys", "cumulative safe-policy deployments"),
)

# fixed palette keyed by algorithm name; unknown algos get the fallback cycle
ALGO_COLORS = {
    "opse": "#1b6ca8",
    "ghosh": "#d1495b",
    "dope": "#66a182",
    "uniform": "#8d8d8d",
    "oplbsp": "#b07aa1",
}
FALLBACK_COLORS = ("#404040", "#e6a23c", "#2ca02c", "#9467bd")


def group_by_env_algo(files: list[MetricsFile]) -> dict[str, dict[str, list[MetricsFile]]]:
    grouped: dict[str, dict[str, list[MetricsFile]]] = defaultdict(lambda: defaultdict(list))
    for f in files:
        grouped[f.env][f.algo].append(f)
    return grouped


def render(files: list[MetricsFile], out_dir: str | Path) -> list[Path]:
    """Write the three panels for every environment present; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    grouped = group_by_env_algo(files)
    for env in sorted(grouped):
        by_algo = grouped[env]
        for panel_name, column, ylabel in PANELS:
            fig, ax = plt.subplots(figsize=(5.2, 3.6), dpi=150)
            for idx, algo in enumerate(sorted(by_algo)):
                runs = sorted(by_algo[algo], key=lambda f: (f.seed is None, f.seed))
                axis = runs[0].episode
                for run in runs[1:]:
                    if not np.array_equal(run.episode, axis):
                        raise ValueError(
                            f"{run.path}: episode axis differs from {runs[0].path}"
                        )
                stack = np.stack([run.columns[column] for run in runs])
                mean = stack.mean(axis=0)
                color = ALGO_COLORS.get(algo, FALLBACK_COLORS[idx % len(FALLBACK_COLORS)])
                ax.plot(axis, mean, label=f"{algo} ({len(runs)} seed{'s' if len(runs) > 1 else ''})",
                        color=color, linewidth=1.6)
                if len(runs) > 1:
                    std = stack.std(axis=0)
                    ax.fill_between(axis, mean - std, mean + std, color=color, alpha=0.18, linewidth=0)
            ax.set_xlabel("episode")
            ax.set_ylabel(ylabel)
            ax.set_title(f"{env}: {ylabel}")
            ax.legend(frameon=False, fontsize=8)
            ax.grid(alpha=0.25, linewidth=0.5)
            fig.tight_layout()
            for ext, meta in (("png", {}), ("svg", {"Date": None})):
                target = out / f"{env}_{panel_name}.{ext}"
                fig.savefig(target, metadata=meta)
                written.append(target)
            plt.close(fig)
    return written
