"""Shared builders: assets, hand-placed states, and small task specs."""
from __future__ import annotations

from typing import Optional, Sequence

import pytest

from blocksmith.core import (
    DEFAULT_CONSTANTS,
    DEFAULT_CUBE_EDGE_M,
    AssetDecl,
    AssetKind,
    InitDistribution,
    Pose,
    TaskSpec,
    WorldState,
    default_region,
)
from blocksmith.geometry import IDENTITY_QUAT
from blocksmith.predicates import AllOf, Node, On, OnTable

EDGE = DEFAULT_CUBE_EDGE_M
TABLE_Z = DEFAULT_CONSTANTS.table_z
REST_Z = TABLE_Z + EDGE / 2


def colored_cube(asset_id: str, color: str = "red", edge: float = EDGE) -> AssetDecl:
    return AssetDecl(id=asset_id, kind=AssetKind.COLORED_CUBE, color=color, edge_m=edge)


def semantic_cube(asset_id: str, label: str, edge: float = EDGE) -> AssetDecl:
    return AssetDecl(id=asset_id, kind=AssetKind.SEMANTIC_CUBE, label=label, edge_m=edge)


def goal_patch(asset_id: str, color: Optional[str] = None, half_extent: float = 0.05) -> AssetDecl:
    return AssetDecl(id=asset_id, kind=AssetKind.GOAL_PATCH, color=color, edge_m=half_extent)


def make_state(
    entries: Sequence[tuple[AssetDecl, tuple[float, float, float]]],
    orientations: Optional[dict[str, tuple[float, float, float, float]]] = None,
) -> WorldState:
    """State from (asset, position) pairs; orientation defaults to identity."""
    orientations = orientations or {}
    assets = {decl.id: decl for decl, _ in entries}
    poses = {
        decl.id: Pose(position=pos, orientation=orientations.get(decl.id, IDENTITY_QUAT))
        for decl, pos in entries
    }
    return WorldState(poses=poses, assets=assets, constants=DEFAULT_CONSTANTS)


def table_pose(x: float, y: float, edge: float = EDGE) -> tuple[float, float, float]:
    return (x, y, TABLE_Z + edge / 2)


def simple_spec(
    assets: Sequence[AssetDecl],
    goal: Node,
    name: str = "fixture-task",
    instruction: str = "fixture instruction",
    fixed_poses: Optional[dict[str, Pose]] = None,
) -> TaskSpec:
    return TaskSpec(
        name=name,
        assets=tuple(assets),
        init=InitDistribution(
            region=default_region(),
            min_separation_m=0.06,
            fixed_poses=fixed_poses,
        ),
        goal=goal,
        instruction=instruction,
        paraphrases=(),
    )


@pytest.fixture
def red_on_yellow_spec() -> TaskSpec:
    """Two cubes, red must end up resting on yellow."""
    red = colored_cube("cube-red-0", "red")
    yellow = colored_cube("cube-yellow-0", "yellow")
    goal = AllOf((OnTable("cube-yellow-0"), On("cube-red-0", "cube-yellow-0")))
    return simple_spec([red, yellow], goal, name="stack-red-yellow")


# Scripted multi-turn benchmarks reused by the steering, service, and
# acceptance tests. Each entry after the first is a steering sentence.

PROGRESSIVE_TOWER = (
    "Place a blue cube on top of a red cube on the table",
    "Add a green cube on top of the blue",
    "Replace the green cube with a yellow cube",
    "Add letter 'A' semantic cube on top of the tower",
    "Flip the color order of the tower but keep the letter 'A' on top",
    "Change the base cube to purple",
)

REVERT_AND_EXTEND = (
    "Make a simple 2-block tower with a red block on bottom and blue on top",
    "Add a green block on top",
    "Add a yellow block on top of that",
    "Actually, go back to when it was just red and blue and instead add a purple block",
    "Now from this simpler version, add letter cubes instead of colored ones",
)

# One instruction per task family the controlled grammar covers.
ARCHETYPE_INSTRUCTIONS = (
    "Stack the red block on top of the yellow block",
    "Stack 2 blocks on the goal patch",
    "Align 4 cubes in a straight line",
    "Arrange the letter cubes B, A, and C in alphabetical order",
    "Arrange the cubes so they spell CAT from left to right",
    "Arrange the number cubes 3, 1, and 2 in increasing numerical order",
    "Form the equation 2+3=5 with number cubes",
    "Place 6 cubes in a circle",
    "Place each colored cube on its matching colored patch in order: red first, then blue",
    "Rotate the A cube so the letter faces the camera",
)

# Verdict lines collected by the admission-gate tests; echoed after the run
# so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("admission gate")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
