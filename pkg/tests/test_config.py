"""
Tests for lift configuration.
"""

import numpy as np
import pytest

from lift import config
from lift.config import SEED_ENV_VAR, Config, resolve_seed
from lift.errors import ConfigError
from lift.tensor import Tensor, float64_mode


class TestConfig:
    """Tests for the Config class."""

    def test_defaults(self):
        """Default precision is float32 with finiteness checks on."""
        c = Config()
        assert c.precision == "float32"
        assert c.check_finite is True
        assert c.dtype == np.float32

    def test_set_precision_valid(self):
        c = Config()
        c.precision = "float64"
        assert c.precision == "float64"
        assert c.dtype == np.float64

    def test_set_precision_invalid(self):
        """Invalid precision raises ValueError."""
        c = Config()
        with pytest.raises(ValueError, match="Invalid precision"):
            c.precision = "float16"

    def test_check_finite_must_be_bool(self):
        c = Config()
        with pytest.raises(ValueError):
            c.check_finite = 1

    def test_config_repr(self):
        c = Config()
        assert "precision" in repr(c)
        assert "float32" in repr(c)

    def test_global_config_exists(self):
        assert isinstance(config, Config)


class TestOverride:
    """Tests for Config.override."""

    def test_restores_previous_values(self):
        with config.override(precision="float64", check_finite=False):
            assert config.precision == "float64"
            assert config.check_finite is False
        assert config.precision == "float32"
        assert config.check_finite is True

    def test_restores_after_exception(self):
        with pytest.raises(RuntimeError), config.override(precision="float64"):
            raise RuntimeError("boom")
        assert config.precision == "float32"

    def test_unknown_field_rejected_before_change(self):
        with pytest.raises(ValueError, match="Unknown config field"):
            with config.override(precision="float64", device="gpu"):
                pass
        assert config.precision == "float32"

    def test_tensor_dtype_follows_precision(self):
        with float64_mode():
            assert Tensor([1.0, 2.0]).dtype == np.float64
        assert Tensor([1.0, 2.0]).dtype == np.float32


class TestResolveSeed:
    """Seed precedence: argument, then LIFT_SEED, then 0."""

    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "9")
        assert resolve_seed(3) == 3

    def test_environment_fallback(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "9")
        assert resolve_seed(None) == 9

    def test_default_zero(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        assert resolve_seed(None) == 0

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "seven")
        with pytest.raises(ConfigError, match="seven") as exc_info:
            resolve_seed(None)
        assert exc_info.value.argument == SEED_ENV_VAR
