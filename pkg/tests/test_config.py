"""Tests for settings, experiment configuration and exceptions"""

import pytest
from pydantic import ValidationError

from core.config import Settings
from core.exceptions import (
    ConfigurationError,
    DataIntegrityError,
    LookaheadError,
    NonFiniteLossError,
    ParseError,
    ResearchError,
    SelectionError,
    StorageError,
    exit_code_for,
    handle_command_error,
)
from schemas.config import ResearchConfig
from schemas.mfin import MfinConfig, SearchSpace
from schemas.strategy import BazParams, ComboSelection, Pick, RevParams, StrategyKind


class TestSettings:
    """Environment settings"""

    def test_defaults(self):
        """Defaults run one thread with console logs"""
        s = Settings(_env_file=None)
        assert s.THREADS == 1
        assert s.LOG_FORMAT == "console"
        assert s.SEED == 0

    @pytest.mark.parametrize("threads", [0, -2])
    def test_invalid_threads(self, threads):
        """THREADS must be positive or -1"""
        with pytest.raises(ValidationError):
            Settings(_env_file=None, THREADS=threads)

    def test_invalid_log_format(self):
        """Only json and console renderers exist"""
        with pytest.raises(ValidationError):
            Settings(_env_file=None, LOG_FORMAT="xml")


class TestResearchConfig:
    """TOML experiment files"""

    def test_default_catalogue(self):
        """22 features, 16 of them alternative, seven assets"""
        config = ResearchConfig()
        assert len(config.universe.feature_names) == 22
        assert len(config.grid_features) == 16
        assert "open" not in config.grid_features
        assert len(config.universe.assets) == 7

    def test_load_toml(self, tmp_path):
        """Omitted keys keep their defaults"""
        path = tmp_path / "exp.toml"
        path.write_text("[portfolio]\ncost_bps = 5.0\n\n[strategies]\nmop_k = [21]\n", encoding="utf-8")
        config = ResearchConfig.from_toml(path)
        assert config.portfolio.cost_bps == 5.0
        assert config.strategies.mop_k == [21]
        assert config.portfolio.sigma_target == 0.15

    def test_missing_file(self, tmp_path):
        """A missing file is a configuration error"""
        with pytest.raises(ConfigurationError):
            ResearchConfig.from_toml(tmp_path / "missing.toml")

    def test_bad_toml(self, tmp_path):
        """Unparseable TOML is a configuration error"""
        path = tmp_path / "bad.toml"
        path.write_text("[portfolio\ncost_bps = ", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            ResearchConfig.from_toml(path)

    def test_invalid_values(self, tmp_path):
        """Validation failures are reported as configuration errors"""
        path = tmp_path / "invalid.toml"
        path.write_text("[calendar]\nstart = 2020-01-01\nend = 2019-01-01\n", encoding="utf-8")
        with pytest.raises(ConfigurationError) as info:
            ResearchConfig.from_toml(path)
        assert info.value.details["errors"]

    def test_unknown_price_feature(self):
        """The price feature must be part of the universe"""
        with pytest.raises(ValidationError):
            ResearchConfig.model_validate({"universe": {"price_feature": "mid"}})

    def test_config_hash(self):
        """Hash is stable and changes with any value"""
        a = ResearchConfig()
        assert a.config_hash() == ResearchConfig().config_hash()
        b = ResearchConfig.model_validate({"portfolio": {"cost_bps": 2.5}})
        assert a.config_hash() != b.config_hash()

    def test_grid_kinds_only(self):
        """CMB and Long-only are not grid strategies"""
        with pytest.raises(ValidationError):
            ResearchConfig.model_validate({"strategies": {"kinds": ["CMB"]}})


class TestStrategySchemas:
    """Parameter validation"""

    def test_baz_order(self):
        """Short timescale must be below the long one"""
        with pytest.raises(ValidationError):
            BazParams(short=24, long=8)

    def test_rev_thresholds(self):
        """Entry threshold must exceed the exit threshold"""
        with pytest.raises(ValidationError):
            RevParams(k=5, z_upper=0.5, z_lower=1.0)

    def test_distinct_picks(self):
        """A selection never holds two picks on one feature"""
        pick = Pick(feature="hashrate", params={"k": 5}, train_sharpe=1.0)
        with pytest.raises(ValidationError):
            ComboSelection(kind=StrategyKind.MOP, picks=[pick, pick])


class TestMfinConfig:
    """Hyperparameter blocks"""

    def test_validation_loss_terms(self):
        """Validation uses C = K = 0"""
        with pytest.raises(ValidationError):
            MfinConfig(valid_cost_bps=1.0)

    def test_filter_fits_window(self):
        """Temporal filter cannot exceed the window"""
        with pytest.raises(ValidationError):
            MfinConfig(window=5, ts_filter_length=10)

    def test_default_on_grid(self):
        """The default tuned block sits on the search grid"""
        assert MfinConfig().on_grid()
        assert not MfinConfig(hidden_size=7).on_grid()

    def test_search_space_size(self):
        """5 x 4 x 3 x 3 x 4 x 4 x 5 grid points"""
        space = SearchSpace()
        assert space.size() == 5 * 4 * 3 * 3 * 4 * 4 * 5
        first = next(space.points())
        assert first == {
            "cost_bps": 0.0,
            "correlation_penalty": 0.0,
            "dropout_rate": 0.1,
            "learning_rate": 1e-3,
            "hidden_size": 32,
            "n_filters": 16,
            "ts_filter_length": 3,
        }


class TestExceptions:
    """Error codes and exit codes"""

    @pytest.mark.parametrize(
        "exc, code",
        [
            (ConfigurationError("x"), 2),
            (SelectionError("x"), 2),
            (DataIntegrityError("x"), 3),
            (ParseError("x", row=4), 3),
            (LookaheadError("x"), 3),
            (NonFiniteLossError("x"), 4),
            (StorageError("x"), 1),
            (ResearchError("x"), 1),
            (RuntimeError("x"), 1),
        ],
    )
    def test_exit_codes(self, exc, code):
        """Each error family maps to its exit code"""
        assert exit_code_for(exc) == code
        assert handle_command_error(exc) == code

    def test_parse_error_row(self):
        """Parse errors carry the offending row"""
        error = ParseError("bad date", row=7, details={"path": "x.csv"})
        assert error.row == 7
        assert error.details == {"path": "x.csv", "row": 7}
        assert error.code == "PARSE_ERROR"
        assert isinstance(error, DataIntegrityError)
