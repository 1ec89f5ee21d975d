"""Tests for the command-line entry point"""

import numpy as np
import pandas as pd
import pytest

from main import main
from tests.factories import random_walk_levels, write_csv

EXPERIMENT = """
[calendar]
start = 2020-01-01
end = 2021-06-30
first_test_start = 2021-01-01

[universe]
assets = ["AAA", "BBB"]
features = [
    {name = "open", source = "CMC"},
    {name = "signal", source = "BIC"},
    {name = "noise", source = "BIC"},
]

[strategies]
kinds = ["MOP", "BAZ"]
mop_k = [5, 21]
baz_pairs = [[4, 12], [8, 24]]

[hyperband]
enabled = false

[backtest]
seeds = [0]
cost_grid = [0.0, 5.0, 10.0]
"""


def run(tmp_path, *args):
    return main(["--data-dir", str(tmp_path / "data"), "--out-dir", str(tmp_path / "out"), *args])


@pytest.fixture
def experiment(tmp_path):
    """Raw snapshots for two assets and the experiment file that reads them"""
    rng = np.random.default_rng(1)
    dates = pd.date_range("2020-01-01", "2021-06-30", freq="D").strftime("%Y-%m-%d")
    for asset in ("AAA", "BBB"):
        levels = random_walk_levels(rng, (len(dates), 3))
        write_csv(
            tmp_path / "data" / "raw" / "CMC" / f"{asset}.csv",
            "date,open",
            [f"{d},{v:.6f}" for d, v in zip(dates, levels[:, 0])],
        )
        write_csv(
            tmp_path / "data" / "raw" / "BIC" / f"{asset}.csv",
            "date,signal,noise",
            [f"{d},{a:.6f},{b:.6f}" for d, a, b in zip(dates, levels[:, 1], levels[:, 2])],
        )
    path = tmp_path / "experiment.toml"
    path.write_text(EXPERIMENT, encoding="utf-8")
    return path


class TestParamCount:
    def test_table(self, tmp_path, capsys):
        assert run(tmp_path, "param-count", "--days", "1916", "--assets", "1", "7") == 0
        assert "datapoints" in capsys.readouterr().out
        table = pd.read_csv(tmp_path / "out" / "param_count.csv", index_col=[0, 1], keep_default_na=False)
        assert table.loc[("datapoints", ""), "1"] == 42152
        assert (tmp_path / "out" / "param_breakdown.json").is_file()


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert run(tmp_path, "--config", str(tmp_path / "nope.toml"), "param-count") == 2

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[portfolio]\nsigma_target = -1\n", encoding="utf-8")
        assert run(tmp_path, "--config", str(path), "param-count") == 2

    def test_zero_threads(self, tmp_path):
        assert run(tmp_path, "--threads", "0", "param-count") == 2

    def test_backtest_without_panel(self, tmp_path):
        assert run(tmp_path, "backtest", "--skip-mfin") == 2

    def test_missing_raw_directory(self, tmp_path):
        assert run(tmp_path, "ingest") == 2


@pytest.mark.slow
class TestEndToEnd:
    def test_pipeline(self, tmp_path, experiment, capsys):
        """ingest -> backtest -> cost-sweep -> report -> explore"""
        config = ["--config", str(experiment)]
        assert run(tmp_path, *config, "ingest") == 0
        assert (tmp_path / "data" / "panel" / "manifest.json").is_file()

        assert run(tmp_path, *config, "backtest", "--skip-mfin") == 0
        out = tmp_path / "out"
        for name in ("mop", "baz", "cmb", "long_only"):
            assert (out / "series" / f"{name}.csv").is_file()
        assert (out / "run_manifest.json").is_file()
        metrics = pd.read_csv(out / "metrics.csv", index_col=0)
        assert set(metrics.index) == {"MOP", "BAZ", "CMB", "Long-only"}

        assert run(tmp_path, *config, "cost-sweep") == 0
        sweep = pd.read_csv(out / "cost_sweep.csv", index_col=0)
        assert list(sweep.columns) == ["0.0", "5.0", "10.0"]

        assert run(tmp_path, *config, "report", "--svg") == 0
        assert (out / "equity.svg").is_file()
        rebuilt = pd.read_csv(out / "metrics.csv", index_col=0)
        np.testing.assert_allclose(rebuilt["Sharpe"].to_numpy(), metrics["Sharpe"].to_numpy(), rtol=1e-9)

        assert run(tmp_path, *config, "explore") == 0
        assert (out / "exploration.csv").is_file()
        capsys.readouterr()
