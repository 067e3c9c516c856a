"""Reader for the experiment metrics file format.

The format contract: '#'-prefixed header lines carrying ``config`` (JSON),
``pi_star_value``, ``b`` and ``xi``, then a fixed column row

    episode,reward_value,utility_value,violation,cum_regret,cum_violation,cum_safe_deploys,lambda,wall_ms

followed by one CSV row per recorded episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXPECTED_COLUMNS = (
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


class SchemaError(ValueError):
    """The file does not match the metrics schema; names the offending column."""


@dataclass(frozen=True)
class MetricsFile:
    path: str
    algo: str
    env: str
    seed: int | None
    episode: np.ndarray
    columns: dict[str, np.ndarray]


def read_metrics_file(path: str | Path) -> MetricsFile:
    lines = Path(path).read_text().splitlines()
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].partition(":")
        header[key.strip()] = value.strip()
        i += 1
    if i >= len(lines):
        raise SchemaError(f"{path}: no column row found")
    columns = tuple(lines[i].split(","))
    if columns != EXPECTED_COLUMNS:
        offending = [c for c in columns if c not in EXPECTED_COLUMNS] or [
            c for c in EXPECTED_COLUMNS if c not in columns
        ]
        raise SchemaError(f"{path}: unexpected column(s) {offending}")
    rows = [line.split(",") for line in lines[i + 1 :] if line]
    if any(len(r) != len(columns) for r in rows):
        raise SchemaError(f"{path}: ragged data rows")
    try:
        data = {
            name: np.array([r[j] for r in rows], dtype=np.float64)
            for j, name in enumerate(columns)
        }
    except ValueError as err:
        raise SchemaError(f"{path}: non-numeric cell ({err})")
    config = json.loads(header.get("config", "{}") or "{}")
    return MetricsFile(
        path=str(path),
        algo=str(config.get("algo", "unknown")),
        env=str(config.get("env", "unknown")),
        seed=config.get("seed"),
        episode=data["episode"],
        columns=data,
    )


def scan_directory(directory: str | Path) -> list[MetricsFile]:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix == ".csv")
    return [read_metrics_file(p) for p in paths]
