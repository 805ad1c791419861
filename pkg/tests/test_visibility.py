"""Ray-based face visibility and glyph readability thresholds."""
from __future__ import annotations

import math

import pytest

from blocksmith.core import DEFAULT_CONSTANTS
from blocksmith.geometry import Face, quat_from_axis_angle
from blocksmith.visibility import (
    CORNER_EXTENT_FRACTION,
    MIN_CLEAR_RAYS,
    RAYS_PER_FACE,
    FaceId,
    NotSemantic,
    apply_shortcuts,
    count_clear_rays,
    face_readability,
    face_sample_points,
    face_visibility,
    visibility_report,
)
from conftest import EDGE, REST_Z, TABLE_Z, colored_cube, make_state, semantic_cube
from oracles import ray_blocked, tilt_cosines, yaw_glyph_cos

CAMERA = DEFAULT_CONSTANTS.camera_pos
RED = "cube-red-0"


def _lone_cube(y: float = 0.0):
    return make_state([(colored_cube(RED), (0.55, y, REST_Z))])


def _boxes(state):
    return [
        (state.pose(a).position, state.edge(a) / 2.0, state.pose(a).orientation)
        for a in state.cube_ids()
    ]


# -- sampling pattern ----------------------------------------------------------


def test_five_sample_points_center_plus_80_percent_corners():
    assert RAYS_PER_FACE == 5 and MIN_CLEAR_RAYS == 3 and CORNER_EXTENT_FRACTION == 0.8
    state = _lone_cube()
    points = face_sample_points(state, FaceId(RED, Face.TOP))
    assert len(points) == 5
    top_z = REST_Z + EDGE / 2.0
    assert all(p[2] == pytest.approx(top_z) for p in points)
    assert (0.55, 0.0, top_z) in [tuple(map(lambda v: round(v, 9), p)) for p in points]
    reach = 0.8 * EDGE / 2.0
    xs = sorted(round(p[0] - 0.55, 9) for p in points)
    assert xs == [pytest.approx(-reach), pytest.approx(-reach), 0.0, pytest.approx(reach), pytest.approx(reach)]


# -- lone-cube visibility against the ray oracle --------------------------------


def test_lone_cube_face_visibility_matches_oracle():
    state = _lone_cube()
    boxes = _boxes(state)
    for face in Face:
        face_id = FaceId(RED, face)
        points = face_sample_points(state, face_id)
        want_clear = sum(
            0 if ray_blocked(p, CAMERA, boxes, TABLE_Z) else 1 for p in points
        )
        assert count_clear_rays(state, face_id) == want_clear, face


def test_lone_cube_visible_faces():
    state = _lone_cube()
    report = visibility_report(state)
    # single cube at rest: the coplanar shortcut marks TOP, rays do the rest
    assert report.visibility(RED, Face.TOP).visible
    assert report.visibility(RED, Face.FRONT).visible
    assert not report.visibility(RED, Face.BACK).visible  # behind its own body
    assert not report.visibility(RED, Face.BOTTOM).visible  # rays dip below table


def test_lateral_face_visibility_depends_on_camera_side():
    # camera sits on the y = 0 centerline; a cube far to the right exposes
    # its LEFT (+y) face to the camera and hides its RIGHT face
    state = _lone_cube(y=-0.2)
    report = visibility_report(state)
    assert report.visibility(RED, Face.LEFT).visible
    assert not report.visibility(RED, Face.RIGHT).visible
    mirrored = _lone_cube(y=+0.2)
    report = visibility_report(mirrored)
    assert report.visibility(RED, Face.RIGHT).visible
    assert not report.visibility(RED, Face.LEFT).visible


def test_multi_cube_ray_counts_match_oracle():
    state = make_state(
        [
            (colored_cube(RED), (0.55, 0.0, REST_Z)),
            (colored_cube("cube-blue-0", "blue"), (0.59, 0.0, REST_Z)),
            (colored_cube("cube-green-0", "green"), (0.55, 0.0, REST_Z + EDGE)),
            (colored_cube("cube-yellow-0", "yellow"), (0.47, 0.12, REST_Z)),
        ]
    )
    boxes = _boxes(state)
    for aid in state.cube_ids():
        for face in Face:
            face_id = FaceId(aid, face)
            points = face_sample_points(state, face_id)
            want = sum(0 if ray_blocked(p, CAMERA, boxes, TABLE_Z) else 1 for p in points)
            assert count_clear_rays(state, face_id) == want, (aid, face)


# -- the 3-of-5 rule -------------------------------------------------------------


def _ray_point(p0, t):
    return tuple(p0[i] + t * (CAMERA[i] - p0[i]) for i in range(3))


def _with_speck_occluders(n_blocked: int):
    """Target cube plus tiny cubes parked on n of its TOP-face ray paths."""
    state = _lone_cube()
    points = face_sample_points(state, FaceId(RED, Face.TOP))
    entries = [(colored_cube(RED), (0.55, 0.0, REST_Z))]
    for i in range(n_blocked):
        speck = colored_cube(f"cube-gray-{i}", "gray", edge=0.004)
        entries.append((speck, _ray_point(points[i], 0.5)))
    return make_state(entries)


def test_visibility_flips_between_two_and_three_clear_rays():
    two_blocked = _with_speck_occluders(2)
    fv = face_visibility(two_blocked, FaceId(RED, Face.TOP), shortcuts={})
    assert fv.rays_clear == 3 and fv.visible
    three_blocked = _with_speck_occluders(3)
    fv = face_visibility(three_blocked, FaceId(RED, Face.TOP), shortcuts={})
    assert fv.rays_clear == 2 and not fv.visible


# -- shortcuts -------------------------------------------------------------------


def test_coplanar_scene_marks_all_tops_visible():
    # the rear cube's TOP rays graze the front cube, but the scene is flat
    state = make_state(
        [
            (colored_cube(RED), (0.60, 0.0, REST_Z)),
            (colored_cube("cube-blue-0", "blue"), (0.46, 0.0, REST_Z)),
        ]
    )
    shortcuts = apply_shortcuts(state)
    assert shortcuts[FaceId(RED, Face.TOP)] == "coplanar"
    assert shortcuts[FaceId("cube-blue-0", Face.TOP)] == "coplanar"
    report = visibility_report(state)
    assert report.visibility("cube-blue-0", Face.TOP).visible


def test_stack_column_marks_back_faces_visible():
    state = make_state(
        [
            (colored_cube(RED), (0.55, 0.0, REST_Z)),
            (colored_cube("cube-blue-0", "blue"), (0.552, 0.001, REST_Z + EDGE)),
            (colored_cube("cube-green-0", "green"), (0.55, 0.0, REST_Z + 2 * EDGE)),
            (colored_cube("cube-yellow-0", "yellow"), (0.45, 0.2, REST_Z)),
        ]
    )
    shortcuts = apply_shortcuts(state)
    for aid in (RED, "cube-blue-0", "cube-green-0"):
        assert shortcuts[FaceId(aid, Face.BACK)] == "stack"
    assert FaceId("cube-yellow-0", Face.BACK) not in shortcuts
    # offsets above a quarter edge do not form a column
    apart = make_state(
        [
            (colored_cube(RED), (0.55, 0.0, REST_Z)),
            (colored_cube("cube-blue-0", "blue"), (0.55 + 0.3 * EDGE, 0.0, REST_Z + EDGE)),
        ]
    )
    assert FaceId(RED, Face.BACK) not in apply_shortcuts(apart)


# -- readability -----------------------------------------------------------------


def _labeled(orientation):
    return make_state(
        [(semantic_cube("cube-a-0", "A"), (0.55, 0.0, REST_Z))],
        orientations={"cube-a-0": orientation},
    )


def _read(state):
    return face_readability(state, FaceId("cube-a-0", Face.TOP))


def test_upright_glyph_is_readable():
    from blocksmith.geometry import IDENTITY_QUAT

    result = _read(_labeled(IDENTITY_QUAT))
    assert result.readable
    assert result.normal_cos == pytest.approx(1.0)
    assert result.glyph_cos == pytest.approx(1.0)


def test_yaw_sweep_flips_at_the_glyph_threshold():
    # glyph_cos = cos(yaw); 0.94 falls between 19.9 and 20.0 degrees
    for yaw_deg, want in ((19.9, True), (20.0, False)):
        q = quat_from_axis_angle((0, 0, 1), math.radians(yaw_deg))
        result = _read(_labeled(q))
        assert result.glyph_cos == pytest.approx(yaw_glyph_cos(math.radians(yaw_deg)), abs=1e-9)
        assert result.readable is want, yaw_deg
    assert yaw_glyph_cos(math.radians(19.9)) > 0.94 > yaw_glyph_cos(math.radians(20.0))


def test_tilt_sweep_flips_at_the_normal_threshold():
    # both cosines equal cos(tilt); 0.97 falls between 14.0 and 14.1 degrees
    for tilt_deg, want in ((14.0, True), (14.1, False)):
        q = quat_from_axis_angle((0, 1, 0), math.radians(tilt_deg))
        result = _read(_labeled(q))
        n_want, g_want = tilt_cosines(math.radians(tilt_deg))
        assert result.normal_cos == pytest.approx(n_want, abs=1e-9)
        assert result.glyph_cos == pytest.approx(g_want, abs=1e-9)
        assert result.readable is want, tilt_deg


def test_documented_sweep_examples():
    # 25 degree spin: glyph upright cosine ~0.906, below 0.94
    spun = _read(_labeled(quat_from_axis_angle((0, 0, 1), math.radians(25))))
    assert spun.glyph_cos == pytest.approx(0.9063, abs=1e-4)
    assert not spun.readable
    # 10 degree tip: ~0.985 on both axes, comfortably readable
    tipped = _read(_labeled(quat_from_axis_angle((0, 1, 0), math.radians(10))))
    assert tipped.normal_cos == pytest.approx(0.9848, abs=1e-4)
    assert tipped.readable


def test_readability_requires_a_glyph_and_the_top_face():
    plain = _lone_cube()
    with pytest.raises(NotSemantic):
        face_readability(plain, FaceId(RED, Face.TOP))
    labeled = _labeled((1.0, 0.0, 0.0, 0.0))
    with pytest.raises(NotSemantic):
        face_readability(labeled, FaceId("cube-a-0", Face.FRONT))


def test_report_scores_readability_only_for_visible_glyph_tops():
    # upright labeled cube: TOP visible, readability computed
    state = make_state(
        [
            (semantic_cube("cube-a-0", "A"), (0.55, 0.0, REST_Z)),
            (colored_cube(RED), (0.45, 0.1, REST_Z)),
        ]
    )
    report = visibility_report(state)
    scored = {r.face_id.asset_id for r in report.readable}
    assert scored == {"cube-a-0"}
    # flip the labeled cube glyph-down: the coplanar shortcut still marks the
    # local TOP, but the face points at the table and cannot be read
    upside_down = make_state(
        [
            (semantic_cube("cube-a-0", "A"), (0.55, 0.0, REST_Z)),
            (colored_cube(RED), (0.45, 0.1, REST_Z)),
        ],
        orientations={"cube-a-0": quat_from_axis_angle((0, 1, 0), math.pi)},
    )
    report = visibility_report(upside_down)
    (row,) = report.readable
    assert not row.readable and row.normal_cos < 0
    # lift the flipped cube so no shortcut fires and its glyph face is hidden
    hovering = make_state(
        [(semantic_cube("cube-a-0", "A"), (0.55, 0.0, REST_Z + 0.05))],
        orientations={"cube-a-0": quat_from_axis_angle((0, 1, 0), math.pi)},
    )
    report = visibility_report(hovering)
    assert not report.visibility("cube-a-0", Face.TOP).visible
    assert not report.readable
