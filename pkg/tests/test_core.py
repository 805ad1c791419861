"""Spec model: validation, canonical bytes, and the frozen golden hash."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocksmith.core import (
    AssetDecl,
    AssetKind,
    InitDistribution,
    InvalidSpec,
    Pose,
    Region,
    SceneConstants,
    TaskSpec,
    WorldState,
    canonical_serialize,
    content_hash,
    default_region,
    deserialize_spec,
    q9,
    validate_spec,
)
from blocksmith.predicates import AllOf, On, OnTable
from conftest import colored_cube, goal_patch, semantic_cube, simple_spec, table_pose
from oracles import reference_digest

# sha256 of the hand-built canonical object below, frozen so any drift in
# serialization, defaults, or quantization shows up as a hash change.
GOLDEN_HASH = "6a5d9a64355e35f514913a486e7246cce5cb53f7a8fb0f892dbedb0b0ba18482"


def _reference_spec() -> TaskSpec:
    return simple_spec(
        [colored_cube("cube-red-0", "red"), colored_cube("cube-yellow-0", "yellow")],
        AllOf((OnTable("cube-yellow-0"), On("cube-red-0", "cube-yellow-0"))),
        name="stack-red-yellow",
    )


def _reference_obj() -> dict:
    # built by hand against the documented wire layout, not via to_obj
    return {
        "assets": [
            {"color": "red", "edge_m": 0.04, "id": "cube-red-0", "kind": "ColoredCube", "label": None},
            {"color": "yellow", "edge_m": 0.04, "id": "cube-yellow-0", "kind": "ColoredCube", "label": None},
        ],
        "goal": {
            "kind": "all",
            "children": [
                {"kind": "on_table", "a": "cube-yellow-0", "tol_m": 0.005},
                {"kind": "on", "a": "cube-red-0", "b": "cube-yellow-0", "tol_m": 0.005},
            ],
        },
        "init": {
            "fixed_poses": None,
            "min_separation_m": 0.06,
            "region": {"x": [0.42, 0.68], "y": [-0.23, 0.23]},
            "seedable": True,
        },
        "instruction": "fixture instruction",
        "name": "stack-red-yellow",
        "paraphrases": [],
    }


def test_content_hash_matches_independent_reference_and_frozen_value():
    spec = _reference_spec()
    assert reference_digest(_reference_obj()) == GOLDEN_HASH
    assert content_hash(spec) == GOLDEN_HASH


def test_canonical_bytes_are_sorted_compact_utf8():
    data = canonical_serialize(_reference_spec())
    text = data.decode("utf-8")
    assert ": " not in text and ", " not in text
    obj = json.loads(text)
    assert list(obj) == sorted(obj)
    assert json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8") == data


def test_tolerance_change_changes_bytes_and_hash():
    base = _reference_spec()
    looser = simple_spec(
        [colored_cube("cube-red-0", "red"), colored_cube("cube-yellow-0", "yellow")],
        AllOf((OnTable("cube-yellow-0"), On("cube-red-0", "cube-yellow-0", tol_m=0.01))),
        name="stack-red-yellow",
    )
    assert canonical_serialize(base) != canonical_serialize(looser)
    assert content_hash(base) != content_hash(looser)


def test_paraphrase_change_changes_hash():
    base = _reference_spec()
    verbose = TaskSpec(
        name=base.name,
        assets=base.assets,
        init=base.init,
        goal=base.goal,
        instruction=base.instruction,
        paraphrases=("put red on yellow",),
    )
    assert content_hash(base) != content_hash(verbose)


def test_round_trip_preserves_bytes():
    data = canonical_serialize(_reference_spec())
    again = canonical_serialize(deserialize_spec(data))
    assert again == data


@given(
    x=st.floats(min_value=0.40, max_value=0.70),
    y=st.floats(min_value=-0.25, max_value=0.25),
    tol=st.floats(min_value=1e-4, max_value=0.02),
)
@settings(max_examples=100, deadline=None)
def test_round_trip_with_fixed_poses_and_tolerances(x, y, tol):
    spec = simple_spec(
        [colored_cube("cube-red-0", "red"), colored_cube("cube-yellow-0", "yellow")],
        AllOf((OnTable("cube-yellow-0", tol_m=tol), On("cube-red-0", "cube-yellow-0"))),
        fixed_poses={"cube-yellow-0": Pose(position=(x, y, 0.97))},
    )
    data = canonical_serialize(spec)
    assert canonical_serialize(deserialize_spec(data)) == data


def test_q9_quantization_applied_at_construction():
    assert q9(0.1 + 0.2) == q9(0.3)
    pose = Pose(position=(0.1 + 0.2, 0.0, 1.0))
    assert pose.x == q9(0.3)


def test_asset_decl_rules():
    with pytest.raises(InvalidSpec):
        AssetDecl(id="Bad_ID", kind=AssetKind.COLORED_CUBE, color="red")
    with pytest.raises(InvalidSpec):
        AssetDecl(id="cube-0", kind=AssetKind.SEMANTIC_CUBE)  # label required
    with pytest.raises(InvalidSpec):
        AssetDecl(id="cube-0", kind=AssetKind.SEMANTIC_CUBE, label="AB")
    with pytest.raises(InvalidSpec):
        AssetDecl(id="cube-0", kind=AssetKind.COLORED_CUBE, color="red", edge_m=0.0)
    ok = AssetDecl(id="cube-a-0", kind=AssetKind.SEMANTIC_CUBE, label="A")
    assert ok.edge_m == 0.04


def test_pose_rejects_non_unit_orientation():
    with pytest.raises(InvalidSpec):
        Pose(position=(0.5, 0.0, 1.0), orientation=(1.0, 1.0, 0.0, 0.0))


def test_validate_spec_rejects_undeclared_goal_reference():
    with pytest.raises(InvalidSpec):
        simple_spec(
            [colored_cube("cube-red-0", "red")],
            AllOf((On("cube-red-0", "cube-ghost-0"),)),
        )


def test_validate_spec_rejects_duplicate_ids():
    with pytest.raises(InvalidSpec):
        simple_spec(
            [colored_cube("cube-red-0", "red"), colored_cube("cube-red-0", "blue")],
            AllOf((OnTable("cube-red-0"),)),
        )


def test_validate_spec_rejects_fixed_pose_for_unknown_asset():
    with pytest.raises(InvalidSpec):
        simple_spec(
            [colored_cube("cube-red-0", "red")],
            AllOf((OnTable("cube-red-0"),)),
            fixed_poses={"cube-ghost-0": Pose(position=(0.5, 0.0, 0.97))},
        )


def test_init_region_must_stay_inside_workspace():
    with pytest.raises(InvalidSpec):
        InitDistribution(region=Region(x=(0.2, 0.68), y=(-0.23, 0.23)))
    with pytest.raises(InvalidSpec):
        InitDistribution(region=default_region(), seedable=False)


def test_world_state_patch_constraints():
    patch = goal_patch("patch-goal-0")
    cube = colored_cube("cube-red-0", "red")
    with pytest.raises(InvalidSpec):
        WorldState(
            poses={
                "patch-goal-0": Pose(position=(0.5, 0.0, 1.2)),  # off the table plane
                "cube-red-0": Pose(position=table_pose(0.5, 0.1)),
            },
            assets={"patch-goal-0": patch, "cube-red-0": cube},
        )
    with pytest.raises(InvalidSpec):
        WorldState(poses={}, assets={"cube-red-0": cube})  # missing pose


def test_deserialize_wraps_bad_payloads():
    with pytest.raises(InvalidSpec):
        deserialize_spec(b"not json")
    with pytest.raises(InvalidSpec):
        deserialize_spec(b"\xff\xfe")
    with pytest.raises(InvalidSpec):
        deserialize_spec(json.dumps({"name": "x"}).encode())


def test_scene_constants_defaults():
    constants = SceneConstants()
    assert constants.table_z == 0.95
    assert constants.workspace_x == (0.40, 0.70)
    assert constants.workspace_y == (-0.25, 0.25)
    assert constants.camera_pos == (1.20, 0.0, 1.60)
    assert constants.in_workspace(0.40, -0.25) and constants.in_workspace(0.70, 0.25)
    assert not constants.in_workspace(0.399999, 0.0)


def test_semantic_cube_label_survives_round_trip():
    spec = simple_spec(
        [semantic_cube("cube-a-0", "A"), colored_cube("cube-red-0", "red")],
        AllOf((OnTable("cube-a-0"), OnTable("cube-red-0"))),
    )
    again = deserialize_spec(canonical_serialize(spec))
    by_id = {a.id: a for a in again.assets}
    assert by_id["cube-a-0"].label == "A"
    assert by_id["cube-a-0"].kind is AssetKind.SEMANTIC_CUBE
