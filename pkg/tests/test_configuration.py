"""Tests for ConfigResolver, the user config file and the settings models."""

import logging

import pytest
import tomlkit
from pydantic import ValidationError

from moproc.configuration.defaults import DEFAULT_OPTIM_CONFIG
from moproc.configuration.models import GaitRanges, OptimConfig, PriorSpec, RunRequest
from moproc.configuration.resolver import ConfigResolver, read_toml, write_user_config
from moproc.errors import UserError
from moproc.logging import setup_logging


class TestConfigResolverBasics:
    """Layering without a user file."""

    def test_defaults(self):
        config = ConfigResolver().resolve()
        assert config == OptimConfig()
        assert config.model_dump() == DEFAULT_OPTIM_CONFIG

    def test_task_config_overrides_defaults(self):
        config = ConfigResolver().resolve(task_config={"steps": 200})
        assert config.steps == 200
        assert config.lr == DEFAULT_OPTIM_CONFIG["lr"]

    def test_cli_overrides_task_config(self):
        config = ConfigResolver().resolve(task_config={"steps": 200, "lr": 0.01}, cli_config={"steps": 50})
        assert config.steps == 50
        assert config.lr == 0.01

    def test_unset_flags_are_skipped(self):
        config = ConfigResolver().resolve(task_config={"restarts": 4}, cli_config={"restarts": None})
        assert config.restarts == 4

    def test_invalid_layer_is_named(self):
        with pytest.raises(UserError, match="from command line"):
            ConfigResolver().resolve(cli_config={"steps": 0})
        with pytest.raises(UserError, match="from task metadata"):
            ConfigResolver().resolve(task_config={"momentum": 0.9})


class TestConfigResolverUserFile:
    """The [optim] table of a `--config` file."""

    def test_user_file_sits_between_task_and_cli(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("[optim]\nsteps = 300\nrestarts = 2\n")
        resolver = ConfigResolver(path)
        config = resolver.resolve(task_config={"steps": 200, "lr": 0.02}, cli_config={"restarts": 5})
        assert config.steps == 300
        assert config.lr == 0.02
        assert config.restarts == 5

    def test_file_without_optim_table(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("[other]\nkey = 1\n")
        assert ConfigResolver(path).resolve() == OptimConfig()

    def test_user_file_is_read_once(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("[optim]\nsteps = 300\n")
        resolver = ConfigResolver(path)
        assert resolver.resolve().steps == 300
        path.write_text("[optim]\nsteps = 400\n")
        assert resolver.resolve().steps == 300

    def test_missing_file(self, tmp_path):
        with pytest.raises(UserError, match="Config file not found"):
            ConfigResolver(tmp_path / "absent.toml").resolve()

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("[optim\n")
        with pytest.raises(UserError, match="Invalid TOML"):
            read_toml(path)

    def test_optim_must_be_a_table(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("optim = 3\n")
        with pytest.raises(UserError, match="must be a table"):
            ConfigResolver(path).resolve()

    def test_invalid_value_names_the_file(self, tmp_path):
        path = tmp_path / "settings.toml"
        path.write_text("[optim]\nlr = -1.0\n")
        with pytest.raises(UserError, match="settings.toml"):
            ConfigResolver(path).resolve()


class TestWriteUserConfig:
    """`moproc init-config` output."""

    def test_new_file(self, tmp_path):
        path = tmp_path / "moproc.toml"
        assert write_user_config(path, OptimConfig(steps=250)) is None
        text = path.read_text()
        assert "steps = 250" in text
        assert "# Number of optimization steps" in text
        assert ConfigResolver(path).resolve().steps == 250

    def test_booleans_are_written_with_their_comment(self, tmp_path):
        path = tmp_path / "moproc.toml"
        assert write_user_config(path, OptimConfig(fast=True)) is None
        lines = path.read_text().splitlines()
        (fast_line,) = [line for line in lines if line.startswith("fast = ")]
        assert fast_line.startswith("fast = true")
        assert "# Decay the learning rate linearly" in fast_line
        doc = tomlkit.parse(path.read_text())
        assert doc["optim"]["fast"] is True
        assert "# Decay the learning rate linearly" in tomlkit.dumps(doc)
        assert ConfigResolver(path).resolve().fast is True

    def test_existing_keys_and_tables_survive(self, tmp_path):
        path = tmp_path / "moproc.toml"
        path.write_text("# mine\n[optim]\nsteps = 7 # tuned by hand\n\n[plots]\ndpi = 90\n")
        write_user_config(path, OptimConfig())
        doc = tomlkit.parse(path.read_text())
        assert doc["optim"]["steps"] == 7
        assert doc["optim"]["lr"] == DEFAULT_OPTIM_CONFIG["lr"]
        assert doc["plots"]["dpi"] == 90
        assert "tuned by hand" in path.read_text()

    def test_complete_table_is_skipped(self, tmp_path):
        path = tmp_path / "moproc.toml"
        write_user_config(path, OptimConfig())
        message = write_user_config(path, OptimConfig(steps=1))
        assert message is not None
        assert "already sets every option" in message
        assert ConfigResolver(path).resolve().steps == DEFAULT_OPTIM_CONFIG["steps"]


class TestModels:
    """Validation in the settings models."""

    def test_optim_config_rejects_unknown_keys(self):
        with pytest.raises(ValidationError):
            OptimConfig(momentum=0.9)

    def test_run_request_needs_one_source(self, tmp_path):
        with pytest.raises(ValidationError, match="exactly one"):
            RunRequest()
        with pytest.raises(ValidationError, match="exactly one"):
            RunRequest(task="HSI-1", program=tmp_path / "p.mopro")
        with pytest.raises(ValidationError, match="at least one seed"):
            RunRequest(task="HSI-1", seeds=[])

    def test_pca_prior_needs_a_path(self):
        with pytest.raises(ValidationError, match="blob path"):
            PriorSpec(kind="pca")

    def test_gait_ranges_must_be_ordered(self):
        with pytest.raises(ValidationError, match="exceeds"):
            GaitRanges(stride=(0.4, 0.1))


class TestSetupLogging:
    """Level selection from the flag and MOPROC_LOG_LEVEL."""

    @pytest.fixture(autouse=True)
    def restore_level(self):
        logger = logging.getLogger("moproc")
        level = logger.level
        yield
        logger.setLevel(level)

    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("MOPROC_LOG_LEVEL", "debug")
        setup_logging()
        assert logging.getLogger("moproc").level == logging.DEBUG

    def test_invalid_level_falls_back_to_warning(self, monkeypatch):
        monkeypatch.setenv("MOPROC_LOG_LEVEL", "chatty")
        setup_logging()
        assert logging.getLogger("moproc").level == logging.WARNING

    def test_flag_beats_environment(self, monkeypatch):
        monkeypatch.setenv("MOPROC_LOG_LEVEL", "error")
        setup_logging("info")
        assert logging.getLogger("moproc").level == logging.INFO

    def test_repeated_setup_keeps_one_handler(self, monkeypatch):
        monkeypatch.delenv("MOPROC_LOG_LEVEL", raising=False)
        setup_logging()
        setup_logging()
        assert len(logging.getLogger("moproc").handlers) == 1
        assert logging.getLogger("moproc").propagate
