"""Scene construction and quasi-static physics.

The world is a tabletop of axis-aligned cubes. Instead of a dynamics
engine, resting heights are computed bottom-up from footprint overlaps and
a state is "settled" when another pass moves nothing. A cube whose center
of mass hangs outside its support contact region is flagged toppled and
kept at its last pose so validation can report exactly what fell.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import (
    AssetKind,
    DEFAULT_CONSTANTS,
    InvalidSpec,
    Pose,
    SceneConstants,
    TaskSpec,
    WorldState,
)
from .geometry import (
    convex_hull_2d,
    point_in_convex_hull,
    rect_overlap_1d,
)

MAX_SETTLE_PASSES = 50
SETTLE_EPS_M = 1e-6
MAX_SAMPLING_REJECTIONS = 1000

# A cube rests on another only when at least this fraction of its footprint
# overlaps the supporter's top face.
SUPPORT_OVERLAP_FRACTION = 0.25

MAX_DRIFT_M = 0.01
MAX_VERTICAL_M = 0.02


class SamplingExhausted(RuntimeError):
    """Rejection sampling could not place every asset."""


class NonConvergence(RuntimeError):
    """Settling still moved cubes after the pass budget."""


class Interpenetration(ValueError):
    """Two cubes overlap more than the settling model tolerates."""


@dataclass(frozen=True)
class SettleResult:
    settled: WorldState
    toppled: tuple[str, ...]
    iterations: int
    # Rest height each cube would occupy, including cubes flagged toppled;
    # stability measures vertical displacement against these.
    rest_z: Mapping[str, float]


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    max_drift_m: float
    max_vertical_m: float


def sample_initial(spec: TaskSpec, seed: int, constants: SceneConstants = DEFAULT_CONSTANTS) -> WorldState:
    """Draw one initial state for the spec, deterministically in the seed.

    Assets pinned by ``fixed_poses`` keep their poses verbatim. Everything
    else lands inside the init region at table rest height with pairwise
    ``min_separation_m`` against every already-placed asset. Raises
    :class:`SamplingExhausted` after 1000 rejections.
    """
    rng = random.Random(seed)
    assets = spec.asset_map()
    init = spec.init
    poses: dict[str, Pose] = {}
    fixed = dict(init.fixed_poses or {})
    for aid, pose in fixed.items():
        poses[aid] = pose

    order = sorted(aid for aid in assets if aid not in fixed)
    # Patches without pinned poses spread along y at the workspace center.
    patches = [aid for aid in order if assets[aid].kind is AssetKind.GOAL_PATCH]
    if patches:
        span = (len(patches) - 1) * 0.12
        cx = (constants.workspace_x[0] + constants.workspace_x[1]) / 2.0
        for i, pid in enumerate(patches):
            poses[pid] = Pose(position=(cx, span / 2.0 - i * 0.12, constants.table_z))

    rejections = 0
    for aid in order:
        if aid in poses:
            continue
        edge = assets[aid].edge_m
        z = constants.table_z + edge / 2.0
        while True:
            x = rng.uniform(*init.region.x)
            y = rng.uniform(*init.region.y)
            clash = any(
                math.hypot(x - p.x, y - p.y) < init.min_separation_m
                for other, p in poses.items()
                if other != aid
            )
            if not clash:
                poses[aid] = Pose(position=(x, y, z))
                break
            rejections += 1
            if rejections >= MAX_SAMPLING_REJECTIONS:
                raise SamplingExhausted(
                    f"placed {len(poses)}/{len(assets)} assets before "
                    f"{MAX_SAMPLING_REJECTIONS} rejections"
                )
    return WorldState(poses=poses, assets=assets, constants=constants)


def _footprint(state: WorldState, aid: str) -> tuple[float, float, float, float]:
    pose = state.pose(aid)
    half = state.edge(aid) / 2.0
    return (pose.x - half, pose.x + half, pose.y - half, pose.y + half)


def _overlap_rect(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> Optional[tuple[float, float, float, float]]:
    x_lo, x_hi = max(a[0], b[0]), min(a[1], b[1])
    y_lo, y_hi = max(a[2], b[2]), min(a[3], b[3])
    if x_lo >= x_hi or y_lo >= y_hi:
        return None
    return (x_lo, x_hi, y_lo, y_hi)


def _check_interpenetration(state: WorldState) -> None:
    ids = state.cube_ids()
    for i, a in enumerate(ids):
        pa, ea = state.pose(a), state.edge(a)
        for b in ids[i + 1:]:
            pb, eb = state.pose(b), state.edge(b)
            limit = (ea + eb) / 2.0 - SETTLE_EPS_M
            dx = abs(pa.x - pb.x)
            dy = abs(pa.y - pb.y)
            dz = abs(pa.z - pb.z)
            if dx < limit and dy < limit and dz < limit:
                raise Interpenetration(f"{a} and {b} interpenetrate")


def settle(state: WorldState) -> SettleResult:
    """Drop every cube to its rest height, bottom-up, until a fixed point.

    Supporters are cubes whose top face lies below and overlaps at least
    a quarter of the cube's footprint; the highest such top wins. Toppling
    (center of mass outside the convex hull of the contact region at the
    support level) freezes the cube at its current pose. Patches never
    move. Raises :class:`NonConvergence` after 50 passes.
    """
    _check_interpenetration(state)
    current = state
    toppled: set[str] = set()
    rest_z: dict[str, float] = {}
    for iteration in range(1, MAX_SETTLE_PASSES + 1):
        moved = False
        order = sorted(current.cube_ids(), key=lambda i: (current.pose(i).z, i))
        for aid in order:
            pose = current.pose(aid)
            edge = current.edge(aid)
            footprint = _footprint(current, aid)
            area = (footprint[1] - footprint[0]) * (footprint[3] - footprint[2])

            support_top = current.constants.table_z
            candidates: list[str] = []
            for other in current.cube_ids():
                if other == aid or other in toppled:
                    continue
                other_pose = current.pose(other)
                other_top = other_pose.z + current.edge(other) / 2.0
                if other_top > pose.z + SETTLE_EPS_M:
                    continue  # only rest on tops at or below the center
                rect = _overlap_rect(footprint, _footprint(current, other))
                if rect is None:
                    continue
                frac = ((rect[1] - rect[0]) * (rect[3] - rect[2])) / area
                if frac + 1e-12 < SUPPORT_OVERLAP_FRACTION:
                    continue
                if other_top > support_top + SETTLE_EPS_M:
                    support_top = other_top
                    candidates = [other]
                elif abs(other_top - support_top) <= SETTLE_EPS_M and other_top > current.constants.table_z:
                    candidates.append(other)

            target_z = support_top + edge / 2.0
            rest_z[aid] = target_z

            # Contact region: overlap with every (non-toppled) cube whose
            # top sits at the support level, or the cube's own footprint
            # when resting on the table.
            if candidates:
                corners: list[tuple[float, float]] = []
                for other in current.cube_ids():
                    if other == aid or other in toppled:
                        continue
                    other_top = current.pose(other).z + current.edge(other) / 2.0
                    if abs(other_top - support_top) > SETTLE_EPS_M:
                        continue
                    rect = _overlap_rect(footprint, _footprint(current, other))
                    if rect is None:
                        continue
                    corners.extend(
                        [(rect[0], rect[2]), (rect[0], rect[3]), (rect[1], rect[2]), (rect[1], rect[3])]
                    )
                hull = convex_hull_2d(corners)
                supported = point_in_convex_hull((pose.x, pose.y), hull)
            else:
                supported = True  # table contact covers the whole footprint

            if not supported:
                # a tipping cube ends up on the table; record that as its
                # rest height so stability sees the full drop
                rest_z[aid] = current.constants.table_z + edge / 2.0
                if aid not in toppled:
                    toppled.add(aid)
                continue

            if abs(pose.z - target_z) > SETTLE_EPS_M:
                current = current.with_pose(aid, Pose(position=(pose.x, pose.y, target_z), orientation=pose.orientation))
                moved = True
        if not moved:
            return SettleResult(
                settled=current,
                toppled=tuple(sorted(toppled)),
                iterations=iteration,
                rest_z=dict(rest_z),
            )
    raise NonConvergence(f"still moving after {MAX_SETTLE_PASSES} passes")


def check_stability(state: WorldState, baseline: Optional[WorldState] = None) -> StabilityResult:
    """Re-settle and measure how far the state moved.

    Displacement is measured against ``baseline`` when given (for example
    the scene before a manipulation), otherwise against ``state`` itself.
    Vertical displacement uses each cube's computed rest height so a cube
    that topples out of a stack registers the full drop even though its
    pose is frozen. Stable means drift <= 1 cm and vertical <= 2 cm.
    """
    reference = baseline if baseline is not None else state
    result = settle(state)
    max_drift = 0.0
    max_vertical = 0.0
    for aid in state.cube_ids():
        before = reference.pose(aid)
        after = result.settled.pose(aid)
        drift = math.hypot(after.x - before.x, after.y - before.y)
        vertical = abs(before.z - result.rest_z.get(aid, after.z))
        max_drift = max(max_drift, drift)
        max_vertical = max(max_vertical, vertical)
    stable = max_drift <= MAX_DRIFT_M and max_vertical <= MAX_VERTICAL_M
    return StabilityResult(stable=stable, max_drift_m=max_drift, max_vertical_m=max_vertical)


def check_bounds(state: WorldState) -> tuple[str, ...]:
    """Asset ids whose centers left the workspace (closed intervals)."""
    out: list[str] = []
    for aid in sorted(state.assets):
        pose = state.pose(aid)
        if not state.constants.in_workspace(pose.x, pose.y):
            out.append(aid)
    return tuple(out)


def state_rows(state: WorldState) -> list[dict]:
    """Flat per-asset records for transport and rendering."""
    rows = []
    for aid in sorted(state.assets):
        decl = state.assets[aid]
        pose = state.poses[aid]
        rows.append(
            {
                "id": aid,
                "kind": decl.kind.value,
                "color": decl.color,
                "label": decl.label,
                "edge_m": decl.edge_m,
                "x": pose.x,
                "y": pose.y,
                "z": pose.z,
                "qw": pose.orientation[0],
                "qx": pose.orientation[1],
                "qy": pose.orientation[2],
                "qz": pose.orientation[3],
            }
        )
    return rows
