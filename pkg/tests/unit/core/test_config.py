"""
Unit tests for the layered run configuration.
"""

import logging

import pytest

from src.config import Config
from src.core.exceptions import ConfigurationError, ResourceNotFoundError
from src.diffusion.domain.schedule import ScheduleConfig


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.handlers = handlers
    root.setLevel(level)


class TestConfigPrecedence:
    """Defaults < environment < file < overrides."""

    def test_defaults(self, clean_env):
        config = Config()
        assert config["schedule"]["T"] == 4000
        assert config["training"]["importance_sampling"] is True
        assert config["runtime"]["threads"] == 0

    def test_environment_beats_defaults(self, clean_env):
        clean_env.setenv("VQDDM_T", "50")
        clean_env.setenv("VQDDM_THREADS", "2")
        config = Config()
        assert config["schedule"]["T"] == 50
        assert config["runtime"]["threads"] == 2

    def test_yaml_file_beats_environment(self, clean_env, tmp_path):
        clean_env.setenv("VQDDM_T", "50")
        path = tmp_path / "run.yaml"
        path.write_text("schedule:\n  T: 77\ntraining:\n  lr: 0.001\n")
        config = Config(str(path))
        assert config["schedule"]["T"] == 77
        assert config["schedule"]["s"] == 0.008
        assert config["training"]["lr"] == 0.001

    def test_key_value_file(self, clean_env, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("# comment\nschedule.T = 33  # inline\n\ntraining.importance_sampling = false\n")
        config = Config(str(path))
        assert config["schedule"]["T"] == 33
        assert config["training"]["importance_sampling"] is False

    def test_overrides_beat_file(self, clean_env, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("schedule:\n  T: 77\n")
        config = Config(str(path), overrides={"schedule.T": 12, "denoiser.hidden": [8, 8]})
        assert config["schedule"]["T"] == 12
        assert config["denoiser"]["hidden"] == [8, 8]


class TestConfigErrors:
    """Tests for configuration failures."""

    def test_bad_environment_integer(self, clean_env):
        clean_env.setenv("VQDDM_T", "many")
        with pytest.raises(ConfigurationError):
            Config()

    def test_missing_file(self, clean_env, tmp_path):
        with pytest.raises(ResourceNotFoundError):
            Config(str(tmp_path / "absent.yaml"))

    @pytest.mark.parametrize("content", ["bogus:\n  x: 1\n", "- a\n- b\n", "schedule: 5\n", "schedule: [\n"])
    def test_bad_yaml(self, clean_env, tmp_path, content):
        path = tmp_path / "bad.yaml"
        path.write_text(content)
        with pytest.raises(ConfigurationError):
            Config(str(path))

    @pytest.mark.parametrize("content", ["schedule.T\n", "bogus.x = 1\n", "T = 5\n"])
    def test_bad_key_values(self, clean_env, tmp_path, content):
        path = tmp_path / "bad.conf"
        path.write_text(content)
        with pytest.raises(ConfigurationError):
            Config(str(path))

    def test_unknown_override_section(self, clean_env):
        with pytest.raises(ConfigurationError):
            Config(overrides={"nothing.here": 1})

    def test_bad_log_level(self, clean_env):
        with pytest.raises(ConfigurationError):
            Config(overrides={"logging.level": "chatty"})


class TestConfigSections:
    def test_section_validates(self, clean_env):
        sched = Config(overrides={"schedule.T": 10}).section("schedule", ScheduleConfig)
        assert (sched.T, sched.s) == (10, 0.008)

    def test_section_extra_values(self, clean_env):
        assert Config().section("schedule", ScheduleConfig, T=3).T == 3

    def test_section_out_of_range(self, clean_env):
        with pytest.raises(ConfigurationError, match="schedule.T"):
            Config(overrides={"schedule.T": 0}).section("schedule", ScheduleConfig)

    def test_log_level_applied(self, clean_env):
        Config(overrides={"logging.level": "debug"})
        assert logging.getLogger().level == logging.DEBUG


class TestConfigHash:
    def test_stable_and_short(self, clean_env):
        assert Config().config_hash == Config().config_hash
        assert len(Config().config_hash) == 16

    def test_ignores_runtime_and_logging(self, clean_env):
        base = Config().config_hash
        assert Config(overrides={"runtime.threads": 4, "logging.level": "INFO"}).config_hash == base

    def test_changes_with_results_relevant_values(self, clean_env):
        assert Config(overrides={"schedule.T": 99}).config_hash != Config().config_hash
