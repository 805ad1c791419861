"""Camera visibility and glyph readability.

Each cube face is probed with five rays from the camera (face center plus
the four corners pulled in to 80% of the face extent). A ray is clear when
it reaches its sample point without passing through any cube volume,
including the probed cube's own body, and without dipping under the table.
A face is visible when at least three of its five rays are clear, or when
a structural shortcut applies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import AssetKind, InvalidSpec, WorldState
from .geometry import (
    FACE_NORMALS,
    Face,
    Vec3,
    canonical_upright,
    face_normal_world,
    glyph_up_world,
    rotate,
    segment_box_chord,
    vadd,
    vdot,
    vnormalize,
    vscale,
    vsub,
)
from .predicates import READ_GLYPH_COS_MIN, READ_NORMAL_COS_MIN

RAYS_PER_FACE = 5
MIN_CLEAR_RAYS = 3
CORNER_EXTENT_FRACTION = 0.8
RAY_EPS = 1e-9

# Horizontal center offset (as a fraction of the edge) under which stacked
# cubes count as one vertical column for the stack shortcut.
STACK_COLUMN_OFFSET_FRACTION = 0.25


class NotSemantic(InvalidSpec):
    """Readability was asked of a face that carries no glyph."""


@dataclass(frozen=True)
class FaceId:
    """A local face of one cube (TOP is the face that is up at identity)."""

    asset_id: str
    face: Face


@dataclass(frozen=True)
class FaceVisibility:
    face_id: FaceId
    visible: bool
    rays_clear: int
    shortcut: Optional[str] = None


@dataclass(frozen=True)
class FaceReadability:
    face_id: FaceId
    readable: bool
    normal_cos: float
    glyph_cos: float


@dataclass(frozen=True)
class VisibilityReport:
    faces: tuple[FaceVisibility, ...]
    readable: tuple[FaceReadability, ...]

    def visibility(self, asset_id: str, face: Face) -> FaceVisibility:
        for fv in self.faces:
            if fv.face_id.asset_id == asset_id and fv.face_id.face == face:
                return fv
        raise KeyError((asset_id, face))


def face_sample_points(state: WorldState, face_id: FaceId) -> list[Vec3]:
    """Center plus four 80%-extent corners of the face, in world frame."""
    pose = state.pose(face_id.asset_id)
    half = state.edge(face_id.asset_id) / 2.0
    normal = FACE_NORMALS[face_id.face]
    # Build the local face plane basis from the two axes orthogonal to it.
    axes = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    plane = [a for a in axes if abs(vdot(a, normal)) < 0.5]
    u, v = plane
    center_local = vscale(normal, half)
    offsets = [(0.0, 0.0)]
    reach = half * CORNER_EXTENT_FRACTION
    offsets += [(-reach, -reach), (-reach, reach), (reach, -reach), (reach, reach)]
    points = []
    for du, dv in offsets:
        local = vadd(center_local, vadd(vscale(u, du), vscale(v, dv)))
        points.append(vadd(pose.position, rotate(pose.orientation, local)))
    return points


def _ray_clear(state: WorldState, origin: Vec3, target: Vec3) -> bool:
    # Below-table travel is blocked; sample points at table height are fine.
    lowest = min(origin[2], target[2])
    if lowest < state.constants.table_z - RAY_EPS:
        return False
    for aid in state.cube_ids():
        pose = state.pose(aid)
        chord = segment_box_chord(
            origin, target, pose.position, state.edge(aid) / 2.0, pose.orientation
        )
        if chord > RAY_EPS:
            return False
    return True


def count_clear_rays(state: WorldState, face_id: FaceId) -> int:
    origin = state.constants.camera_pos
    return sum(
        1 for point in face_sample_points(state, face_id) if _ray_clear(state, origin, point)
    )


def face_visibility(state: WorldState, face_id: FaceId, shortcuts: Optional[dict[FaceId, str]] = None) -> FaceVisibility:
    if shortcuts is None:
        shortcuts = apply_shortcuts(state)
    shortcut = shortcuts.get(face_id)
    rays = count_clear_rays(state, face_id)
    visible = shortcut is not None or rays >= MIN_CLEAR_RAYS
    return FaceVisibility(face_id=face_id, visible=visible, rays_clear=rays, shortcut=shortcut)


def apply_shortcuts(state: WorldState) -> dict[FaceId, str]:
    """Structural visibility rules that skip ray casting.

    Coplanar scenes (every cube at table rest height) mark all TOP faces
    visible. Vertical columns of two or more cubes mark every BACK face
    in the column visible.
    """
    out: dict[FaceId, str] = {}
    cubes = state.cube_ids()
    if not cubes:
        return out

    def rest_height(aid: str) -> float:
        return state.constants.table_z + state.edge(aid) / 2.0

    if all(abs(state.pose(a).z - rest_height(a)) <= 1e-6 for a in cubes):
        for aid in cubes:
            out[FaceId(aid, Face.TOP)] = "coplanar"
        return out

    # Group cubes into columns by horizontal proximity.
    remaining = set(cubes)
    while remaining:
        aid = min(remaining)
        column = [aid]
        remaining.discard(aid)
        pose = state.pose(aid)
        limit = STACK_COLUMN_OFFSET_FRACTION * state.edge(aid)
        for other in sorted(remaining):
            op = state.pose(other)
            if abs(op.x - pose.x) <= limit and abs(op.y - pose.y) <= limit:
                column.append(other)
                remaining.discard(other)
        if len(column) >= 2:
            for cid in column:
                out[FaceId(cid, Face.BACK)] = "stack"
    return out


def visibility_report(state: WorldState) -> VisibilityReport:
    shortcuts = apply_shortcuts(state)
    faces = []
    for aid in state.cube_ids():
        for face in Face:
            faces.append(face_visibility(state, FaceId(aid, face), shortcuts))
    visible_index = {fv.face_id: fv.visible for fv in faces}
    readable = []
    for aid in state.cube_ids():
        if state.decl(aid).label is None:
            continue
        face_id = FaceId(aid, Face.TOP)  # the glyph lives on the local TOP face
        if not visible_index.get(face_id, False):
            continue
        readable.append(face_readability(state, face_id))
    return VisibilityReport(faces=tuple(faces), readable=tuple(readable))


def expected_view_direction(state: WorldState, face_id: FaceId) -> Vec3:
    """Overhead for up-facing glyph faces, camera direction otherwise."""
    pose = state.pose(face_id.asset_id)
    normal = face_normal_world(pose.orientation, face_id.face)
    if normal[2] > 0.5:
        return (0.0, 0.0, 1.0)
    half = state.edge(face_id.asset_id) / 2.0
    center = vadd(pose.position, vscale(normal, half))
    return vnormalize(vsub(state.constants.camera_pos, center))


def face_readability(
    state: WorldState, face_id: FaceId, expected_view: Optional[Vec3] = None
) -> FaceReadability:
    """Cosine tests for reading the glyph painted on this face.

    ``normal_cos`` compares the face's outward normal with the expected
    viewing direction; ``glyph_cos`` compares the glyph's up direction
    with the canonical upright for the plane the face currently occupies.
    Raises :class:`NotSemantic` for unlabeled cubes or glyph-free faces.
    """
    decl = state.decl(face_id.asset_id)
    if decl.kind is not AssetKind.SEMANTIC_CUBE or decl.label is None:
        raise NotSemantic(f"{face_id.asset_id} carries no glyph")
    if face_id.face is not Face.TOP:
        raise NotSemantic(f"glyph lives on the local TOP face, not {face_id.face.value}")
    pose = state.pose(face_id.asset_id)
    if expected_view is None:
        expected_view = expected_view_direction(state, face_id)
    normal = face_normal_world(pose.orientation, face_id.face)
    normal_cos = vdot(normal, expected_view)
    glyph_cos = vdot(glyph_up_world(pose.orientation), canonical_upright(normal))
    readable = normal_cos >= READ_NORMAL_COS_MIN and glyph_cos >= READ_GLYPH_COS_MIN
    return FaceReadability(
        face_id=face_id, readable=readable, normal_cos=normal_cos, glyph_cos=glyph_cos
    )
