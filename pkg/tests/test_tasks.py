"""Tests for the task corpus and its metadata."""

import pytest

from moproc.configuration.defaults import CORPUS_ENV_VAR
from moproc.errors import DiagnosticError, UnknownTaskError, UserError
from moproc.tasks import SHIPPED_CORPUS, adhoc_task, get_task, list_tasks, load_task

SHIPPED_IDS = [
    "GEO-1",
    "GEO-2",
    "HOD-1",
    "HOI-1",
    "HOI-2",
    "HSC-1",
    "HSI-1",
    "HSI-2",
    "HSI-3",
    "HSI-4",
    "HSI-5",
    "PBG-1",
    "PBG-2",
]


class TestShippedCorpus:
    """The thirteen tasks that come with the package."""

    def test_ids(self):
        assert list_tasks() == SHIPPED_IDS

    @pytest.mark.parametrize("task_id", SHIPPED_IDS)
    def test_every_task_has_metadata(self, task_id):
        task = get_task(task_id)
        assert task.id == task_id
        assert task.program.name == task_id
        assert task.summary
        assert task.formulas
        assert task.frames == 60
        assert task.path == SHIPPED_CORPUS / f"{task_id}.mopro"

    def test_default_params(self):
        assert get_task("HOI-1").default_params == {"A": [1.0, 0.8, 1.0], "B": [-1.0, 0.8, -1.0]}
        assert get_task("GEO-1").default_params == {"normal": [1.0, 0.0, 0.0], "offset": 0.5}

    def test_relaxation_defaults(self):
        assert get_task("GEO-1").relax.variant == "plane_fit"
        assert get_task("GEO-2").relax.joints == ("left_toe", "right_toe")
        assert get_task("HOI-1").relax.params == ("A", "B")
        assert not get_task("HSI-1").relax.enabled

    def test_balance_support(self):
        assert get_task("PBG-1").metadata.support == ["right_ankle", "right_foot"]
        assert get_task("PBG-2").formulas == ["ball", "com"]

    def test_unknown_task(self):
        with pytest.raises(UnknownTaskError) as exc_info:
            get_task("HSI-9")
        assert exc_info.value.exit_code == 2
        assert "HSI-1" in str(exc_info.value)


class TestLoading:
    """Single programs and ad-hoc tasks."""

    def test_stem_wins_over_declared_name(self, tmp_path):
        path = tmp_path / "mine.mopro"
        path.write_text('task "Other" {\n  constraint all frames: joint(head).y > 1;\n}\n')
        task = load_task(path)
        assert task.id == "mine"
        assert task.program.name == "Other"

    def test_invalid_metadata(self, tmp_path):
        path = tmp_path / "mine.mopro"
        path.write_text('task "mine" {\n  constraint all frames: joint(head).y > 1;\n}\n')
        with pytest.raises(UserError, match="Invalid metadata"):
            load_task(path, {"frames": 1})
        with pytest.raises(UserError, match="unknown constraint-error formulas: wobble"):
            load_task(path, {"formulas": ["wobble"]})

    def test_broken_program(self, tmp_path):
        path = tmp_path / "bad.mopro"
        path.write_text('task "bad" {\n  constraint all frames: joint(tail).y > 1;\n}\n')
        with pytest.raises(DiagnosticError, match="unknown joint 'tail'"):
            load_task(path)

    def test_adhoc_task(self, skeleton):
        task = adhoc_task('task "Mine" {\n  param h: float = 1;\n  constraint all frames: joint(head).y > h;\n}\n', skeleton)
        assert task.id == "Mine"
        assert task.formulas == []
        assert task.default_params == {"h": 1.0}
        assert task.path is None


class TestCorpusOverride:
    """Extra and replacement tasks from MOPROC_CORPUS."""

    def test_added_task(self, tmp_path, monkeypatch):
        (tmp_path / "EXTRA-1.mopro").write_text('task "EXTRA-1" {\n  constraint all frames: joint(head).y > 1;\n}\n')
        monkeypatch.setenv(CORPUS_ENV_VAR, str(tmp_path))
        assert "EXTRA-1" in list_tasks()
        assert len(list_tasks()) == len(SHIPPED_IDS) + 1
        assert get_task("EXTRA-1").formulas == []

    def test_replaced_task_keeps_shipped_metadata(self, tmp_path, monkeypatch):
        (tmp_path / "HSI-1.mopro").write_text(
            'task "HSI-1" {\n'
            "  param first_height: float = 1.6;\n"
            "  param mid_height: float = 1.4;\n"
            "  param last_height: float = 1.6;\n"
            "  constraint frame first: joint(head).y == first_height;\n"
            "  constraint frame mid: joint(head).y == mid_height;\n"
            "  constraint frame last: joint(head).y == last_height;\n"
            "}\n"
        )
        monkeypatch.setenv(CORPUS_ENV_VAR, str(tmp_path))
        task = get_task("HSI-1")
        assert task.path == tmp_path / "HSI-1.mopro"
        assert task.default_params["first_height"] == 1.6
        assert task.formulas == ["keyframe_height"]

    def test_metadata_is_merged(self, tmp_path, monkeypatch):
        (tmp_path / "tasks.toml").write_text('[HSI-1]\nframes = 40\n')
        monkeypatch.setenv(CORPUS_ENV_VAR, str(tmp_path))
        task = get_task("HSI-1")
        assert task.frames == 40
        assert task.summary == "Duck slightly at mid-motion"

    def test_override_must_be_a_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv(CORPUS_ENV_VAR, str(tmp_path / "absent"))
        with pytest.raises(UserError, match="not a directory"):
            list_tasks()
