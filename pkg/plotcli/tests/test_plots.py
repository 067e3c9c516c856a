"""Plot pipeline tests: schema handling, figure output, byte determinism."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from lcmdp_plots.cli import main
from lcmdp_plots.metrics_io import SchemaError, read_metrics_file, scan_directory
from lcmdp_plots.render import render

COLUMNS = (
    "episode,reward_value,utility_value,violation,cum_regret,"
    "cum_violation,cum_safe_deploys,lambda,wall_ms"
)


def write_metrics(path: Path, algo: str, env: str, seed: int, episodes: int = 40) -> None:
    rng = np.random.default_rng(seed)
    lines = [
        f'# config: {json.dumps({"algo": algo, "env": env, "seed": seed})}',
        "# pi_star_value: 1.0",
        "# b: 0.5",
        "# xi: 0.25",
        COLUMNS,
    ]
    cum_r = 0.0
    cum_v = 0.0
    safe = 0
    for k in range(1, episodes + 1):
        r = float(rng.uniform(0.2, 0.9))
        u = float(rng.uniform(0.3, 1.0))
        vio = max(0.5 - u, 0.0)
        cum_r += 1.0 - r
        cum_v += vio
        safe += int(rng.random() < 0.05)
        lines.append(
            f"{k},{r!r},{u!r},{vio!r},{cum_r!r},{cum_v!r},{safe},{0.0!r},{0.0!r}"
        )
    path.write_text("\n".join(lines) + "\n")


class TestReader:
    def test_reads_config_header(self, tmp_path):
        path = tmp_path / "opse_tabular_seed1.csv"
        write_metrics(path, "opse", "tabular", 1)
        mf = read_metrics_file(path)
        assert (mf.algo, mf.env, mf.seed) == ("opse", "tabular", 1)
        assert len(mf.episode) == 40

    def test_schema_error_names_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_metrics(path, "opse", "tabular", 1)
        path.write_text(path.read_text().replace("cum_regret", "regret_cum"))
        with pytest.raises(SchemaError, match="regret_cum"):
            read_metrics_file(path)

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "bad2.csv"
        write_metrics(path, "opse", "tabular", 1)
        text = path.read_text().splitlines()
        text[6] = text[6].replace(text[6].split(",")[1], "NaNope", 1)
        path.write_text("\n".join(text))
        with pytest.raises(SchemaError):
            read_metrics_file(path)


class TestRender:
    def test_three_figures_per_environment(self, tmp_path):
        data = tmp_path / "runs"
        data.mkdir()
        for seed in (1, 2, 3):
            write_metrics(data / f"opse_tabular_seed{seed}.csv", "opse", "tabular", seed)
            write_metrics(data / f"uniform_tabular_seed{seed}.csv", "uniform", "tabular", seed)
        for seed in (1, 2):
            write_metrics(data / f"opse_streaming_seed{seed}.csv", "opse", "streaming", seed)
        out = tmp_path / "figs"
        written = render(scan_directory(data), out)
        names = sorted(p.name for p in written)
        for env in ("tabular", "streaming"):
            for panel in ("regret", "violation", "safe_deploys"):
                assert f"{env}_{panel}.png" in names
                assert f"{env}_{panel}.svg" in names
        assert len(names) == 12

    def test_single_seed_renders_without_band(self, tmp_path):
        data = tmp_path / "runs"
        data.mkdir()
        write_metrics(data / "opse_linear_seed1.csv", "opse", "linear", 1)
        out = tmp_path / "figs"
        written = render(scan_directory(data), out)
        assert len(written) == 6
        # no shading band for a single seed: the svg has no filled collection
        svg = (out / "linear_regret.svg").read_text()
        assert "PolyCollection" not in svg

    def test_multi_seed_renders_with_band(self, tmp_path):
        data = tmp_path / "runs"
        data.mkdir()
        write_metrics(data / "opse_linear_seed1.csv", "opse", "linear", 1)
        write_metrics(data / "opse_linear_seed2.csv", "opse", "linear", 2)
        out = tmp_path / "figs"
        render(scan_directory(data), out)
        assert "PolyCollection" in (out / "linear_regret.svg").read_text()

    def test_rerender_is_byte_identical(self, tmp_path):
        data = tmp_path / "runs"
        data.mkdir()
        for seed in (1, 2):
            write_metrics(data / f"opse_tabular_seed{seed}.csv", "opse", "tabular", seed)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        render(scan_directory(data), out_a)
        render(scan_directory(data), out_b)
        for path_a in sorted(out_a.iterdir()):
            path_b = out_b / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name

    def test_mismatched_axes_rejected(self, tmp_path):
        data = tmp_path / "runs"
        data.mkdir()
        write_metrics(data / "opse_tabular_seed1.csv", "opse", "tabular", 1, episodes=40)
        write_metrics(data / "opse_tabular_seed2.csv", "opse", "tabular", 2, episodes=30)
        with pytest.raises(ValueError, match="episode axis"):
            render(scan_directory(data), tmp_path / "figs")


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        data = tmp_path / "runs"
        data.mkdir()
        write_metrics(data / "uniform_streaming_seed1.csv", "uniform", "streaming", 1)
        rc = main(["--in", str(data), "--out", str(tmp_path / "figs")])
        assert rc == 0
        assert (tmp_path / "figs" / "streaming_regret.png").is_file()

    def test_schema_error_exit_code(self, tmp_path, capsys):
        data = tmp_path / "runs"
        data.mkdir()
        write_metrics(data / "x.csv", "opse", "tabular", 1)
        (data / "x.csv").write_text((data / "x.csv").read_text().replace("lambda", "lambada"))
        rc = main(["--in", str(data), "--out", str(tmp_path / "figs")])
        assert rc == 2
        assert "lambada" in capsys.readouterr().err
