"""Tests for parsing, typechecking, printing and evaluating motion programs."""

import numpy as np
import pytest

from moproc import autodiff as ad
from moproc.dsl import FUNCTIONS, load_program, parse, pretty_print, program_hash, typecheck
from moproc.dsl.grammar import GRAMMAR_EBNF, RESERVED_WORDS
from moproc.errors import DiagnosticError, EvaluationError, MissingParameterError, ParameterTypeError
from moproc.kinematics import MotionSequence, forward_kinematics
from moproc.tasks import SHIPPED_CORPUS
from tests.conftest import translated

CORPUS_FILES = sorted(SHIPPED_CORPUS.glob("*.mopro"))


def diagnostics_of(text, skeleton):
    with pytest.raises(DiagnosticError) as exc_info:
        typecheck(parse(text), skeleton)
    return exc_info.value.diagnostics


def wrap(*lines):
    return 'task "T" {\n' + "\n".join(lines) + "\n}\n"


class TestParsing:
    """Program text to syntax tree."""

    def test_minimal_program(self):
        program = parse('task "Empty" {}')
        assert program.name == "Empty"
        assert program.items == ()

    def test_comments_and_whitespace_are_ignored(self):
        a = parse(wrap("  # leading comment", "  constraint all frames: joint(head).y == 1;"))
        b = parse('task "T" { constraint   all frames :joint(head).y==1 ; }')
        assert a == b

    def test_norm_suffix(self):
        program = parse(wrap("  constraint all frames: joint(head).pos == (0, 1, 0) norm 1;"))
        assert program.items[0].pred.norm == 1.0

    def test_text_is_kept(self):
        text = wrap("  param a: float = 1;")
        assert parse(text).text == text

    @pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
    def test_corpus_round_trip(self, path):
        """Printing and reparsing gives back the same tree, and printing is idempotent."""
        program = parse(path.read_text())
        printed = pretty_print(program)
        assert parse(printed) == program
        assert pretty_print(parse(printed)) == printed

    def test_printer_keeps_needed_parentheses(self):
        program = parse(wrap("  let a = (1 - 2) - (3 - 4) * -(5 + 6);"))
        printed = pretty_print(program)
        assert "let a = 1 - 2 - (3 - 4) * -(5 + 6);" in printed
        assert parse(printed) == program

    def test_printer_keeps_predicate_grouping(self):
        program = parse(wrap("  constraint all frames: (joint(head).y < 1 or joint(head).y > 2) and far(joint(head).x, 1);"))
        assert parse(pretty_print(program)) == program


class TestDiagnostics:
    """Malformed programs report a code and a 1-based line and column."""

    @pytest.mark.parametrize(
        "text,code,line,column",
        [
            (wrap("  param a: float = 1", "  constraint all frames: joint(head).y == a;"), "syntax", 3, 3),
            (wrap("  constraint all frames: jiont(head).y == 1;"), "unknown-function", 2, 26),
            (wrap("  param first: float = 1;"), "reserved-word", 2, 9),
            (wrap("  constraint all frames: joint(head).y == height;"), "undefined", 2, 43),
            (wrap("  param a: float = 1;", "  param a: float = 2;"), "duplicate", 3, 3),
            (wrap("  for j in joints {", "    param a: float = 1;", "  }"), "param-scope", 3, 5),
            (wrap("  constraint all frames: joint(head).y == 1 $;"), "syntax", 2, 45),
            ('task "T" {\n  param a: float = 1;\n', "syntax", 2, 22),
            (wrap("  constraint all frames: joint(lef_hand).y == 1;"), "unknown-joint", 2, 32),
            (wrap("  constraint all frames: dist(joint(head)) == 0;"), "arity", 2, 26),
        ],
        ids=[
            "missing-semicolon",
            "unknown-function",
            "reserved-word",
            "undefined-name",
            "duplicate-param",
            "param-in-loop",
            "unexpected-character",
            "unexpected-end",
            "unknown-joint",
            "arity",
        ],
    )
    def test_malformed_program(self, skeleton, text, code, line, column):
        (diagnostic,) = diagnostics_of(text, skeleton)
        assert diagnostic.code == code
        assert (diagnostic.line, diagnostic.column) == (line, column)
        assert diagnostic.severity == "error"

    def test_suggestions(self, skeleton):
        (unknown_joint,) = diagnostics_of(wrap("  constraint all frames: joint(lef_hand).y == 1;"), skeleton)
        assert "did you mean 'left_hand'" in unknown_joint.message
        (unknown_fn,) = diagnostics_of(wrap("  constraint all frames: jiont(head).y == 1;"), skeleton)
        assert "did you mean 'joint'" in unknown_fn.message

    def test_render_points_at_the_problem(self, skeleton):
        text = wrap("  constraint all frames: joint(head).y == height;")
        (diagnostic,) = diagnostics_of(text, skeleton)
        rendered = diagnostic.render(text)
        assert rendered.startswith("2:43: error: undefined name 'height'")
        assert rendered.splitlines()[-1] == "  " + " " * 42 + "^" * len("height")

    def test_all_problems_are_reported_in_order(self, skeleton):
        text = wrap(
            "  constraint all frames: joint(nose).y == 1;",
            "  constraint all frames: joint(head).y == missing;",
        )
        codes = [d.code for d in diagnostics_of(text, skeleton)]
        assert codes == ["unknown-joint", "undefined"]

    def test_use_before_declaration(self, skeleton):
        text = wrap("  constraint all frames: joint(head).y == h;", "  param h: float = 1;")
        (diagnostic,) = diagnostics_of(text, skeleton)
        assert "before its declaration" in diagnostic.message

    @pytest.mark.parametrize(
        "constraint,fragment",
        [
            ("joint(head).pos == 1", "vector-scalar mismatch"),
            ("joint(head).pos < (0, 1, 0)", "needs scalars"),
            ("joint(head).pos * joint(chest).pos == (0, 0, 0)", "use dot()"),
            ("com().vel.vel.pos == (0, 0, 0)", "joint(...) only"),
        ],
    )
    def test_type_errors(self, skeleton, constraint, fragment):
        (diagnostic,) = diagnostics_of(wrap(f"  constraint all frames: {constraint};"), skeleton)
        assert diagnostic.code == "type"
        assert fragment in diagnostic.message

    @pytest.mark.parametrize(
        "weight,fragment",
        [("-1", "nonnegative"), ("joint(head).y", "constant scalar")],
    )
    def test_weight_errors(self, skeleton, weight, fragment):
        (diagnostic,) = diagnostics_of(wrap(f"  constraint all frames: joint(head).y == 1 weight {weight};"), skeleton)
        assert diagnostic.code == "weight"
        assert fragment in diagnostic.message

    def test_non_constant_param_default(self, skeleton):
        (diagnostic,) = diagnostics_of(wrap("  param a: float = joint(head).y;"), skeleton)
        assert diagnostic.code == "constant"

    def test_empty_frame_range(self, skeleton):
        (diagnostic,) = diagnostics_of(wrap("  constraint frames 5..2: joint(head).y == 1;"), skeleton)
        assert diagnostic.code == "range"

    def test_diagnostic_error_message_has_every_line(self, skeleton):
        with pytest.raises(DiagnosticError, match="2:26: error: unknown function 'jiont'"):
            load_program(wrap("  constraint all frames: jiont(head).y == 1;"), skeleton)


class TestTypecheck:
    """Loop unrolling, labels and parameters."""

    def test_loop_over_all_joints(self, skeleton):
        program = load_program((SHIPPED_CORPUS / "HSI-3.mopro").read_text(), skeleton)
        assert len(program.terms) == 88
        assert program.terms[0].label == "all frames: joint(j).x < half_size weight 1 / 88 [j=pelvis]"
        assert all(t.weight == pytest.approx(1 / 88) for t in program.terms)

    def test_loop_over_joint_list_and_frames(self, skeleton):
        text = wrap(
            "  for f in 0..2 {",
            "    for j in [left_toe, right_toe] {",
            "      constraint frame f: joint(j).y == 0;",
            "    }",
            "  }",
        )
        program = load_program(text, skeleton)
        assert len(program.terms) == 6
        assert program.terms[-1].label.endswith("[f=2, j=right_toe]")

    def test_params(self, skeleton):
        program = load_program(wrap("  param p: vec3 = (1, 2, 3);", "  param q: float;"), skeleton)
        np.testing.assert_array_equal(program.param("p").default, [1.0, 2.0, 3.0])
        assert program.param("q").default is None
        with pytest.raises(KeyError):
            program.param("r")

    def test_let_is_inlined(self, skeleton, standing):
        a = load_program(wrap("  let h = joint(head).y;", "  constraint all frames: h == 1;"), skeleton)
        b = load_program(wrap("  constraint all frames: joint(head).y == 1;"), skeleton)
        assert a.evaluate(standing).value == pytest.approx(b.evaluate(standing).value)

    def test_functions_table(self):
        for name in ("joint", "bone", "com", "distToPlane", "distToLine", "distToSupport", "angleTo"):
            assert name in FUNCTIONS
        assert FUNCTIONS["distToPlane"].signature == "distToPlane(vec3, plane) -> scalar"

    def test_grammar_mentions_every_reserved_word(self):
        for word in RESERVED_WORDS:
            assert word in GRAMMAR_EBNF


class TestEvaluation:
    """Compiled programs against hand-computed errors."""

    def test_square_area_closed_form(self, skeleton, standing):
        """Shifting the T-pose 1.5 m along x breaks the x < 1 bound by a known amount."""
        program = load_program((SHIPPED_CORPUS / "HSI-3.mopro").read_text(), skeleton)
        assert program.evaluate(standing).value == pytest.approx(0.0)
        shifted = translated(standing, [1.5, 0.0, 0.0])
        # 0.5 + x over every joint right of x = 1: six spine joints, seven mirrored pairs, the left wrist
        assert program.evaluate(shifted).value == pytest.approx(11.19 / 88)

    def test_keyframe_heights(self, skeleton, standing):
        program = load_program((SHIPPED_CORPUS / "HSI-1.mopro").read_text(), skeleton)
        evaluation = program.evaluate(standing)
        # head is at 1.52 in every frame
        assert evaluation.value == pytest.approx((0.02 + 0.12 + 0.02) / 3)
        assert [t.weight for t in evaluation.per_term] == pytest.approx([1 / 3] * 3)
        assert len(evaluation.blame()) == 3

    def test_params_override_defaults(self, skeleton, standing):
        program = load_program((SHIPPED_CORPUS / "HSI-1.mopro").read_text(), skeleton)
        params = {"first_height": 1.52, "mid_height": 1.52, "last_height": 1.52}
        assert program.evaluate(standing, params).value == pytest.approx(0.0)

    def test_velocity_attribute(self, skeleton, standing):
        program = load_program(wrap("  constraint all frames: joint(root).vel == (0, 0, 1);"), skeleton)
        walking = translated(standing, np.outer(np.arange(20) / 20.0, [0.0, 0.0, 1.0]))
        assert program.evaluate(walking).value == pytest.approx(0.0, abs=1e-9)
        assert program.evaluate(standing).value == pytest.approx(1.0)

    def test_vector_norm_order(self, skeleton, standing):
        text = wrap("  constraint frame 0: joint(root).pos == (1, 1.95, 1) norm 1;")
        assert load_program(text, skeleton).evaluate(standing).value == pytest.approx(3.0)

    def test_zero_weight_is_reported_but_not_counted(self, skeleton, standing):
        text = wrap(
            "  constraint all frames: joint(head).y == 1.5;",
            "  constraint all frames: joint(head).y == 0 weight 0;",
        )
        evaluation = load_program(text, skeleton).evaluate(standing)
        assert evaluation.value == pytest.approx(0.02)
        assert len(evaluation.per_term) == 2
        assert evaluation.per_term[1].contribution == 0.0

    def test_or_and_when(self, skeleton, standing):
        either = wrap("  constraint all frames: joint(head).y < 1 or joint(head).y > 1.5;")
        assert load_program(either, skeleton).evaluate(standing).value == pytest.approx(0.0)
        guarded = wrap("  constraint all frames: when (joint(head).y > 2) joint(head).y == 0;")
        assert load_program(guarded, skeleton).evaluate(standing).value == pytest.approx(0.0)
        active = wrap("  constraint all frames: when (joint(head).y > 1) joint(head).y == 0;")
        assert load_program(active, skeleton).evaluate(standing).value == pytest.approx(1.52)

    def test_far(self, skeleton, standing):
        text = wrap("  constraint all frames: far(dist(joint(left_hand), joint(right_hand)), 2);")
        assert load_program(text, skeleton).evaluate(standing).value == pytest.approx(2.0 - 1.38)

    def test_positions_are_accepted(self, skeleton, standing):
        program = load_program(wrap("  constraint all frames: joint(head).y == 1.5;"), skeleton)
        pos = forward_kinematics(skeleton, standing)
        assert program.evaluate(pos).value == pytest.approx(program.evaluate(standing).value)

    def test_evaluation_error_carries_span(self, skeleton, standing):
        text = wrap(
            "  constraint all frames:",
            "    joint(head).y / (joint(head).y - joint(head).y) == 0;",
        )
        with pytest.raises(EvaluationError, match="division by zero") as exc_info:
            load_program(text, skeleton).evaluate(standing)
        assert exc_info.value.span.line == 3

    def test_frame_out_of_range(self, skeleton, standing):
        program = load_program(wrap("  constraint frame 40: joint(head).y == 1;"), skeleton)
        with pytest.raises(EvaluationError, match="outside"):
            program.evaluate(standing)

    def test_gradient_is_available(self, skeleton, standing):
        program = load_program((SHIPPED_CORPUS / "HSI-1.mopro").read_text(), skeleton)
        tape = ad.Tape()
        flat = tape.variable(np.asarray(standing.flatten()))
        total = program.evaluate(MotionSequence.from_flat(flat, 22)).total
        (grad,) = ad.gradient(total, [flat])
        # the head height depends on the root height at the three keyframes only
        assert np.count_nonzero(grad[:, 1]) == 3


class TestParameters:
    """Binding supplied values against declared parameters."""

    def test_missing_parameter(self, skeleton, standing):
        program = load_program(wrap("  param h: float;", "  constraint all frames: joint(head).y == h;"), skeleton)
        with pytest.raises(MissingParameterError, match="'h'"):
            program.evaluate(standing)
        assert program.evaluate(standing, {"h": 1.52}).value == pytest.approx(0.0)

    def test_wrong_shape(self, skeleton):
        program = load_program(wrap("  param p: vec3 = (0, 0, 0);"), skeleton)
        with pytest.raises(ParameterTypeError, match="vec3"):
            program.bind({"p": 1.0})

    def test_undeclared_names_are_ignored(self, skeleton):
        program = load_program(wrap("  param a: float = 1;"), skeleton)
        assert set(program.bind({"a": 2.0, "b": 3.0})) == {"a"}


class TestHash:
    """Program identity is the canonical text."""

    def test_formatting_does_not_change_hash(self):
        a = parse(wrap("  constraint all frames: joint(head).y == 1;"))
        b = parse('task "T" {constraint all frames:joint(head).y==1;} # trailing')
        assert program_hash(a) == program_hash(b)
        assert len(program_hash(a)) == 8

    def test_content_changes_hash(self):
        a = parse(wrap("  constraint all frames: joint(head).y == 1;"))
        b = parse(wrap("  constraint all frames: joint(head).y == 2;"))
        assert program_hash(a) != program_hash(b)
