"""Tests for CLI commands in the app module."""

import csv
import json

import pytest
import tomlkit
from typer.testing import CliRunner

import moproc
from moproc.app.main import app
from moproc.app.utils import parse_params, parse_seeds, resolve_task
from moproc.configuration.defaults import DEFAULT_OPTIM_CONFIG
from moproc.errors import UserError
from moproc.serialization import read_manifest
from moproc.tasks import get_task
from tests.conftest import strip_ansi

runner = CliRunner()

QUICK = ["--steps", "3", "--frames", "10", "--prior", "dct:K=4"]
RUN_FILES = [
    "motion.json",
    "motion.bvh",
    "positions.csv",
    "manifest.json",
    "metrics.json",
    "metrics.csv",
    "root_path.svg",
    "joint_heights.svg",
    "error_trace.svg",
]


@pytest.fixture
def hsi1_run(tmp_path):
    """Output directory of a short HSI-1 run."""
    out = tmp_path / "run"
    result = runner.invoke(app, ["run", "--task", "HSI-1", *QUICK, "--seed", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestUtils:
    """Flag parsing helpers."""

    @pytest.mark.parametrize(
        "seeds,seed,expected",
        [(None, None, [0]), (None, 5, [5]), ("0..3", None, [0, 1, 2, 3]), ("1,4,7", None, [1, 4, 7])],
    )
    def test_parse_seeds(self, seeds, seed, expected):
        assert parse_seeds(seeds, seed) == expected

    @pytest.mark.parametrize("seeds", ["3..1", "a,b", "", "-1"])
    def test_invalid_seeds(self, seeds):
        with pytest.raises(UserError):
            parse_seeds(seeds, None)

    def test_seed_and_seeds(self):
        with pytest.raises(UserError, match="not both"):
            parse_seeds("0..2", 1)

    def test_parse_params(self):
        assert parse_params(["h=1.5", "A=(1, 0.8, 1)", "B=-1,0.8,-1"]) == {
            "h": 1.5,
            "A": [1.0, 0.8, 1.0],
            "B": [-1.0, 0.8, -1.0],
        }

    @pytest.mark.parametrize("item", ["h", "=1", "h=x", "h=1,2"])
    def test_invalid_params(self, item):
        with pytest.raises(UserError):
            parse_params([item])

    def test_resolve_task(self, tmp_path):
        assert resolve_task("HSI-1", None).id == "HSI-1"
        with pytest.raises(UserError, match="exactly one"):
            resolve_task(None, None)
        with pytest.raises(UserError, match="not found"):
            resolve_task(None, tmp_path / "absent.mopro")


class TestRun:
    """`moproc run`."""

    def test_writes_every_artifact(self, hsi1_run):
        for name in RUN_FILES:
            assert (hsi1_run / name).exists(), name

    def test_manifest(self, hsi1_run):
        manifest = read_manifest(hsi1_run / "manifest.json")
        assert manifest.task == "HSI-1"
        assert manifest.program_hash == get_task("HSI-1").program.hash
        assert manifest.prior == "dct:K=4"
        assert manifest.seed == 2
        assert manifest.config.steps == 3
        assert manifest.frames == 10
        assert manifest.params == {"first_height": 1.5, "mid_height": 1.4, "last_height": 1.5}
        assert manifest.moproc_version == moproc.__version__

    def test_parameter_override_and_text(self, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            app,
            ["run", "-t", "HSI-1", *QUICK, "--param", "mid_height=1.2", "--text", "duck low", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        manifest = read_manifest(out / "manifest.json")
        assert manifest.params["mid_height"] == 1.2
        assert manifest.text == "duck low"

    def test_several_seeds(self, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(app, ["run", "-t", "HSI-1", *QUICK, "--seeds", "0..1", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "seed-0" / "motion.json").exists()
        assert (out / "seed-1" / "motion.json").exists()
        with open(out / "metrics.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [row["Sample"] for row in rows] == ["HSI-1:seed0", "HSI-1:seed1"]

    def test_relaxed_task(self, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(app, ["run", "-t", "GEO-1", *QUICK, "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert read_manifest(out / "manifest.json").relax.variant == "plane_fit"

    def test_ik_baseline(self, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(app, ["run", "-t", "HSI-1", "--steps", "2", "--frames", "10", "--baseline", "ik-reg", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert read_manifest(out / "manifest.json").prior == "ik-reg"

    def test_program_file(self, tmp_path):
        program = tmp_path / "reach.mopro"
        program.write_text('task "reach" {\n  constraint frame last: joint(left_hand).y > 1.8;\n}\n')
        out = tmp_path / "run"
        result = runner.invoke(app, ["run", "--program", str(program), *QUICK, "-o", str(out)])
        assert result.exit_code == 0, result.output
        manifest = read_manifest(out / "manifest.json")
        assert manifest.task == "reach"
        assert manifest.program == program.read_text()

    @pytest.mark.parametrize(
        "args,message",
        [
            (["-t", "NOPE-1"], "Unknown task 'NOPE-1'"),
            (["-t", "HSI-1", "--seed", "1", "--seeds", "0..2"], "not both"),
            (["-t", "HSI-1", "--baseline", "mocap"], "Unknown baseline"),
            (["-t", "HSI-1", "--prior", "vae"], "vae"),
            (["-t", "HSI-1", "--relax", "line"], "supports relaxation"),
            (["-t", "HSI-1", "--param", "mid_height=1,2"], "one number or three"),
            (["-t", "HSI-1", "--steps", "0"], "Invalid optimizer settings"),
            (["-t", "HSI-1", "--program", "x.mopro"], "exactly one"),
        ],
    )
    def test_user_errors(self, tmp_path, args, message):
        result = runner.invoke(app, ["run", *args, "-o", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert message in strip_ansi(result.output)

    def test_program_with_errors(self, tmp_path):
        program = tmp_path / "bad.mopro"
        program.write_text('task "bad" {\n  constraint all frames: joint(tail).y > 1;\n}\n')
        result = runner.invoke(app, ["run", "--program", str(program), "-o", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert "unknown joint 'tail'" in result.output
        assert not (tmp_path / "run").exists()


class TestEval:
    """`moproc eval`."""

    def test_reproduces_run_metrics(self, hsi1_run):
        result = runner.invoke(app, ["eval", str(hsi1_run / "motion.json"), "--json"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        expected = read_manifest(hsi1_run / "manifest.json").metrics
        assert report["sample"] == "HSI-1:seed2"
        assert report["constraint_error"] == pytest.approx(expected.constraint_error)
        assert report["foot_skate_ratio"] == pytest.approx(expected.foot_skate_ratio)

    def test_directory_and_csv(self, hsi1_run, tmp_path):
        table = tmp_path / "all.csv"
        result = runner.invoke(app, ["eval", str(hsi1_run), "--csv", str(table)])
        assert result.exit_code == 0, result.output
        assert "HSI-1:seed2" in result.output
        with open(table, newline="") as f:
            assert len(list(csv.DictReader(f))) == 1

    def test_parameter_override(self, hsi1_run):
        base = json.loads(runner.invoke(app, ["eval", str(hsi1_run / "motion.json"), "--json"]).stdout)
        result = runner.invoke(app, ["eval", str(hsi1_run / "motion.json"), "--json", "--param", "mid_height=-50"])
        assert json.loads(result.stdout)["constraint_error"] > base["constraint_error"]

    def test_motion_without_manifest(self, hsi1_run, tmp_path):
        loose = tmp_path / "loose.json"
        loose.write_text((hsi1_run / "motion.json").read_text())
        result = runner.invoke(app, ["eval", str(loose)])
        assert result.exit_code == 2
        assert "pass --task" in result.output
        result = runner.invoke(app, ["eval", str(loose), "--task", "HSI-1", "--json"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["sample"] == str(loose)

    def test_missing_file(self, tmp_path):
        result = runner.invoke(app, ["eval", str(tmp_path / "absent.json")])
        assert result.exit_code == 2
        assert "not found" in result.output


class TestGradcheck:
    """`moproc gradcheck`."""

    def test_corpus_task(self):
        result = runner.invoke(app, ["gradcheck", "--task", "HSI-1", "--motions", "1", "--coords", "8", "--frames", "4"])
        assert result.exit_code == 0, result.output
        assert "HSI-1: max relative error" in result.output
        assert "(8 coordinates over 1 motions)" in result.output

    def test_program_file(self, tmp_path):
        program = tmp_path / "wall.mopro"
        program.write_text((get_task("GEO-1").source))
        result = runner.invoke(app, ["gradcheck", str(program), "--motions", "1", "--coords", "8", "--frames", "4"])
        assert result.exit_code == 0, result.output

    def test_failure_exit_code(self):
        result = runner.invoke(
            app, ["gradcheck", "-t", "HSI-1", "--motions", "1", "--coords", "4", "--frames", "4", "--tolerance", "0"]
        )
        assert result.exit_code == 3
        assert "gradient check failed" in result.output


class TestOtherCommands:
    """prompt, list-tasks, pca-train, init-config and --version."""

    def test_version(self):
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert result.output.strip() == moproc.__version__

    def test_prompt(self):
        result = runner.invoke(app, ["prompt", "Jump over a puddle"])
        assert result.exit_code == 0, result.output
        assert "## Grammar" in result.output
        assert result.output.rstrip().endswith("Jump over a puddle")

    def test_prompt_from_file(self, tmp_path):
        description = tmp_path / "ask.txt"
        description.write_text("Wave with the left hand\n")
        result = runner.invoke(app, ["prompt", "--file", str(description)])
        assert result.exit_code == 0, result.output
        assert "Wave with the left hand" in result.output
        result = runner.invoke(app, ["prompt", "Jump", "--file", str(description)])
        assert result.exit_code == 2

    def test_list_tasks(self):
        result = runner.invoke(app, ["list-tasks"])
        assert result.exit_code == 0, result.output
        for task_id in ("GEO-1", "HSI-3", "PBG-2"):
            assert task_id in result.output

    def test_list_tasks_json(self):
        result = runner.invoke(app, ["list-tasks", "--json"])
        payload = json.loads(result.stdout)
        assert len(payload) == 13
        geo = next(entry for entry in payload if entry["id"] == "GEO-1")
        assert geo["relax"] == "plane_fit"
        assert geo["params"] == {"normal": [1.0, 0.0, 0.0], "offset": 0.5}

    def test_pca_train(self, tmp_path):
        out = tmp_path / "prior.json"
        args = ["pca-train", "-o", str(out), "--motions", "12", "--components", "4", "--frames", "10"]
        result = runner.invoke(app, args)
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "4-dimensional" in result.output
        run = runner.invoke(
            app, ["run", "-t", "HSI-1", "--steps", "2", "--frames", "10", "--prior", f"pca:{out}", "-o", str(tmp_path / "run")]
        )
        assert run.exit_code == 0, run.output

    def test_pca_train_too_few_motions(self, tmp_path):
        args = ["pca-train", "-o", str(tmp_path / "p.json"), "--motions", "2", "--components", "4", "--frames", "10"]
        result = runner.invoke(app, args)
        assert result.exit_code == 2
        assert "Cannot train PCA prior" in result.output

    def test_init_config(self, tmp_path):
        path = tmp_path / "moproc.toml"
        result = runner.invoke(app, ["init-config", str(path)])
        assert result.exit_code == 0, result.output
        text = path.read_text()
        assert "[optim]" in text
        assert any(line.startswith("fast = false #") for line in text.splitlines())
        assert tomlkit.parse(text)["optim"]["steps"] == DEFAULT_OPTIM_CONFIG["steps"]
        again = runner.invoke(app, ["init-config", str(path)])
        assert again.exit_code == 0
        assert "already sets every option" in " ".join(strip_ansi(again.output).split())

    def test_run_reads_config_file(self, tmp_path):
        path = tmp_path / "moproc.toml"
        path.write_text("[optim]\nsteps = 2\nlr = 0.01\n")
        out = tmp_path / "run"
        result = runner.invoke(app, ["run", "-t", "HSI-1", "--frames", "10", "--config", str(path), "-o", str(out)])
        assert result.exit_code == 0, result.output
        config = read_manifest(out / "manifest.json").config
        assert config.steps == 2
        assert config.lr == 0.01
