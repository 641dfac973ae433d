"""Task descriptors: fixed prompt templates with one ``{{STATE}}`` slot."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

MARKER = "{{STATE}}"


@dataclass(frozen=True)
class TaskDescriptor:
    id: str
    template: str
    env_id: str = ""

    def __post_init__(self):
        count = self.template.count(MARKER)
        if count != 1:
            raise ValueError(f"descriptor {self.id!r} needs exactly one {MARKER} marker, found {count}")

    def fill(self, rendered_state: str) -> str:
        return self.template.replace(MARKER, rendered_state)


def render_prompt(descriptor: TaskDescriptor, state, env) -> str:
    return descriptor.fill(env.render_state(state))


def load_template(name: str) -> str:
    return resources.files("lagrseq.oracle.templates").joinpath(f"{name}.txt").read_text()


def _cube_template(cubes) -> str:
    # Same wording as the 8-cube prompt, minus its 8-letter worked example.
    lines = ["A table contains the following objects: \\"]
    for c in cubes:
        lines.append(f"- {c.color} cube of edge length {c.edge_length:g}cm \\")
        lines.append(f"(represented by '{chr(ord('a') + c.id - 1)}')\\")
    lines += [
        "A human is currently stacking some\\",
        "of the cubes in the following \\",
        "sequence (from bottom to top): \\",
        MARKER,
        "You are an organizing robot.\\",
        "Stack the remaining cubes in the\\",
        "pattern that human seems to be \\",
        "following. The final stack should\\",
        f"have all {len(cubes)} cubes. Lets think step by step.\\",
        "Make sure your response contains \\",
        "only the order in the form of a \\",
        "list and not the explanation.",
    ]
    return "\n".join(lines) + "\n"


def descriptor_for(env) -> TaskDescriptor:
    """The task descriptor matching an environment instance."""
    from ..envs.cube import TABLE_CUBES, CubeEnv

    if isinstance(env, CubeEnv):
        if tuple(env.config.cubes) == TABLE_CUBES:
            return TaskDescriptor("cube8", load_template("cube8"), env.env_id)
        return TaskDescriptor(f"cube{env.n}", _cube_template(env.config.cubes), env.env_id)
    if env.mode == "image":
        if (env.config.width, env.config.height) != (10, 10):
            raise ValueError("the image prompt is written for 10x10 images")
        return TaskDescriptor("image10", load_template("image10"), env.env_id)
    if (env.config.width, env.config.height) != (5, 5):
        raise ValueError("the arrangement prompt is written for a 5x5 table")
    return TaskDescriptor("arrange5", load_template("arrange5"), env.env_id)
