"""Tests for the MFIN parameter counts"""

import pytest

from schemas.mfin import MfinConfig
from services.mfin.complexity import breakdown_table, complexity_table, param_count

MEDIANS = dict(hidden_size=32, n_filters=40, ts_filter_length=10)

# Published totals for one and seven assets
REFERENCE = {
    ("hidden_size", "32"): (64e3, 170e3),
    ("hidden_size", "64"): (80e3, 185e3),
    ("hidden_size", "96"): (103e3, 209e3),
    ("hidden_size", "128"): (135e3, 241e3),
    ("n_filters", "16"): (49e3, 66e3),
    ("n_filters", "32"): (74e3, 142e3),
    ("n_filters", "48"): (110e3, 262e3),
    ("n_filters", "64"): (156e3, 426e3),
    ("ts_filter_length", "3"): (68e3, 107e3),
    ("ts_filter_length", "5"): (74e3, 132e3),
    ("ts_filter_length", "10"): (90e3, 196e3),
    ("ts_filter_length", "15"): (106e3, 260e3),
    ("ts_filter_length", "20"): (122e3, 324e3),
}


class TestParamCount:
    def test_stage_counts(self):
        counts = param_count(MfinConfig(**MEDIANS), n_assets=1, n_inputs=22)
        assert counts.extractor == 10280
        assert counts.reduction == 73640
        assert counts.lstm == 9344
        assert counts.head == 33
        assert counts.total == 93297

    def test_grows_with_assets(self):
        config = MfinConfig(**MEDIANS)
        assert param_count(config, 7).total == 124215
        assert param_count(config, 50).total == 345794
        assert param_count(config, 50).total / param_count(config, 1).total == pytest.approx(3.7, abs=0.05)

    def test_default_config(self):
        """The inception block holds most parameters at one asset"""
        counts = param_count(MfinConfig(), 1)
        assert counts.total == 80257
        assert counts.extractor_share == pytest.approx(0.69, abs=0.005)
        assert int(counts) == counts.total


class TestComplexityTable:
    def test_layout(self):
        table = complexity_table(days=1916)
        assert list(table.columns) == ["1", "7", "20", "50"]
        assert table.index.names == ["hyperparameter", "value"]
        assert table.loc[("datapoints", ""), "1"] == 42152
        assert table.loc[("datapoints", ""), "7"] == 295064

    def test_within_a_factor_of_two_of_published(self):
        table = complexity_table()
        for key, (one, seven) in REFERENCE.items():
            assert 0.5 <= table.loc[key, "1"] / one <= 2.0, key
            assert 0.5 <= table.loc[key, "7"] / seven <= 2.0, key

    def test_monotone_in_each_hyperparameter(self):
        table = complexity_table()
        for name in ("hidden_size", "n_filters", "ts_filter_length"):
            column = table.loc[name, "7"].to_numpy()
            assert (column[1:] > column[:-1]).all()

    def test_breakdown(self):
        frame = breakdown_table(MfinConfig(**MEDIANS), asset_columns=(1, 7))
        assert frame.loc["1", "total"] == 93297
        assert frame.loc["7", "lstm"] > frame.loc["1", "lstm"]
