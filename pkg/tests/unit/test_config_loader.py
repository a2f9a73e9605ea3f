"""
Unit tests for configuration loader.
"""

import pytest
import tempfile
from pathlib import Path
from src.core.config_loader import ConfigLoader, RunConfig, RunMode, ModelSection, dump_config
from src.core.errors import ConfigError


BASE_CONFIG = """\
name: base
model:
  preset: three_factor_base
experiment:
  b: 0.3
  B1: 500
  B2: 1000
  seed: 11
  mode: both
"""


class TestConfigLoader:
    """Test cases for ConfigLoader."""

    def setup_method(self):
        """Setup test environment."""
        self.temp_dir = tempfile.mkdtemp()
        self.config_loader = ConfigLoader(self.temp_dir)

    def test_load_run(self):
        """Test loading a run configuration by experiment id."""
        run_file = Path(self.temp_dir) / "experiments" / "base.yaml"
        run_file.parent.mkdir(parents=True, exist_ok=True)
        run_file.write_text(BASE_CONFIG)

        loaded = self.config_loader.load_run("base")

        assert loaded.name == "base"
        assert loaded.model.preset == "three_factor_base"
        assert loaded.experiment.B1 == 500
        assert loaded.experiment.mode == RunMode.BOTH
        assert self.config_loader.list_experiments() == ["base"]

    def test_load_run_by_path(self):
        run_file = Path(self.temp_dir) / "custom.yaml"
        run_file.write_text(BASE_CONFIG)
        assert self.config_loader.load_run(run_file).experiment.seed == 11

    def test_missing_run(self):
        with pytest.raises(ConfigError, match="not found"):
            self.config_loader.load_run("does_not_exist")

    def test_unknown_key_is_line_anchored(self):
        """An unknown key is rejected with its line number and name."""
        text = BASE_CONFIG.replace("  B2: 1000\n", "  B3: 1000\n")
        with pytest.raises(ConfigError) as info:
            self.config_loader.parse(text)
        assert info.value.line == 7
        assert "B3" in str(info.value)
        assert str(info.value).startswith("line 7: ")

    def test_invalid_value_is_line_anchored(self):
        text = BASE_CONFIG.replace("  B1: 500\n", "  B1: -5\n")
        with pytest.raises(ConfigError) as info:
            self.config_loader.parse(text)
        assert info.value.line == 6
        assert "experiment.B1" in str(info.value)

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError, match="invalid YAML"):
            self.config_loader.parse("model: [unclosed\n")

    def test_non_mapping(self):
        with pytest.raises(ConfigError):
            self.config_loader.parse("- just\n- a list\n")

    def test_environment_variable_substitution(self, monkeypatch):
        """Test environment variable substitution."""
        monkeypatch.setenv("TEST_SEED", "4242")
        config = self.config_loader.parse(BASE_CONFIG.replace("seed: 11", "seed: ${TEST_SEED}"))
        assert config.experiment.seed == 4242

    def test_unset_variable_is_left_in_place(self, monkeypatch):
        monkeypatch.delenv("TEST_UNSET_VAR", raising=False)
        assert self.config_loader._substitute_env_vars("x: ${TEST_UNSET_VAR}") == "x: ${TEST_UNSET_VAR}"

    def test_round_trip(self):
        """Serializing a parsed config and parsing it again gives the same config."""
        config = self.config_loader.parse(BASE_CONFIG)
        again = self.config_loader.parse(dump_config(config))
        assert again.model_dump() == config.model_dump()
        assert again.config_hash() == config.config_hash()

    def test_hash_changes_with_content(self):
        config = self.config_loader.parse(BASE_CONFIG)
        other = self.config_loader.parse(BASE_CONFIG.replace("seed: 11", "seed: 12"))
        assert config.config_hash() != other.config_hash()
        assert len(config.config_hash()) == 64

    def test_with_overrides(self):
        config = self.config_loader.parse(BASE_CONFIG)
        updated = config.with_overrides(seed=99, B1=None, mode="is")
        assert updated.experiment.seed == 99
        assert updated.experiment.B1 == 500
        assert updated.experiment.mode == RunMode.IS
        assert config.experiment.seed == 11

    def test_bad_override(self):
        config = self.config_loader.parse(BASE_CONFIG)
        with pytest.raises(ConfigError, match="experiment.B2"):
            config.with_overrides(B2=0)


class TestRunConfigValidation:
    """Validation rules of the run configuration sections."""

    def test_b_and_tau_are_exclusive(self):
        with pytest.raises(ValueError):
            RunConfig(model={"preset": "one_factor_t"}, experiment={"b": 0.2, "tau": 40})

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            ModelSection(preset="no_such_preset")

    def test_preset_rejects_structural_overrides(self):
        with pytest.raises(ValueError, match="cannot override"):
            ModelSection(preset="three_factor_base", d=2)

    def test_explicit_model_needs_shock(self):
        with pytest.raises(ValueError, match="shock"):
            RunConfig(model={"n": 10, "d": 1, "loading": 0.3, "thresholds": 2.0}, experiment={"b": 0.1})

    def test_explicit_model_loading_norm(self):
        with pytest.raises(ValueError, match="sum to more than 1"):
            ModelSection(n=2, loadings=[[0.8, 0.8], [0.1, 0.1]], thresholds=1.0)

    def test_explicit_model(self):
        config = RunConfig(
            model={"n": 10, "d": 2, "loading": 0.3, "thresholds": 2.0},
            shock={"variant": "t_copula", "nu": [4, 4, 4]},
            experiment={"tau": 3},
        )
        assert config.shock.nu == [4, 4, 4]
        assert config.experiment.tau == 3

    def test_shock_validation(self):
        with pytest.raises(ValueError):
            RunConfig(
                model={"n": 10, "d": 1, "loading": 0.3, "thresholds": 2.0},
                shock={"variant": "gamma_direct", "alpha": [1.0, 2.0], "beta": [1.0]},
                experiment={"b": 0.1},
            )

    def test_overrides_mapping(self):
        section = ModelSection(preset="three_factor_base", n=100, factor_sigmas=[1.0, 0.5, 0.2])
        assert section.overrides() == {"n": 100, "sigmas": [1.0, 0.5, 0.2]}

    def test_shipped_experiments_parse(self):
        loader = ConfigLoader(str(Path(__file__).resolve().parents[2] / "config"))
        names = loader.list_experiments()
        assert "three_factor_base" in names
        for name in names:
            assert loader.load_run(name).name == name
