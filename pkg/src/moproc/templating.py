"""Prompt rendering for writing programs with a language model.

The prompt is the fixed instruction preamble, the grammar, the function
catalog and the joint names, followed by an optional task description. The
program that comes back is run like any other with `moproc run --program`.
"""

import logging
from pathlib import Path

from jinja2 import Environment, FileSystemLoader

from moproc.configuration.defaults import DEFAULT_FPS, DEFAULT_FRAMES
from moproc.dsl.grammar import GRAMMAR_EBNF
from moproc.dsl.typecheck import FUNCTIONS
from moproc.kinematics import JOINT_ALIASES, Skeleton, default_skeleton
from moproc.tasks import get_task

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / "templates"
PROMPT_TEMPLATE = "prompt.md.jinja"
EXAMPLE_TASK = "HSI-1"


def render_prompt(description: str = "", skeleton: Skeleton | None = None) -> str:
    """Render the programming prompt; an empty description omits the task section."""
    skeleton = skeleton or default_skeleton()
    jinja_env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)
    template = jinja_env.get_template(PROMPT_TEMPLATE)
    joints = skeleton.names + [f"{alias} (= {target})" for alias, target in JOINT_ALIASES.items()]
    prompt = template.render(
        frames=DEFAULT_FRAMES,
        fps=f"{DEFAULT_FPS:g}",
        n_joints=skeleton.n_joints,
        grammar=GRAMMAR_EBNF,
        functions=list(FUNCTIONS.values()),
        joints=joints,
        example=get_task(EXAMPLE_TASK).source,
        description=description.strip(),
    )
    logger.debug(f"Rendered prompt ({len(prompt)} chars)")
    return prompt
