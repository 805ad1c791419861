"""Goal-state synthesis and verification.

``synthesize_goal`` builds a world state that should satisfy a spec's goal:
rows and circles get deterministic slot layouts, support chains are stacked
bottom-up at exact rest heights, reading goals pick one of the 24 axis
rotations, and unconstrained cubes are seeded-sampled into free table space.
``verify_goal`` then runs the constructed state through settling, goal
evaluation, stability, and bounds, reporting the first failure.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .core import (
    AssetKind,
    DEFAULT_CONSTANTS,
    Pose,
    SceneConstants,
    TaskSpec,
    WorldState,
)
from .geometry import (
    CUBE_ROTATIONS,
    FACE_NORMALS,
    Face,
    IDENTITY_QUAT,
    Quat,
    canonical_upright,
    face_normal_world,
    glyph_up_world,
    vdot,
)
from .predicates import (
    AlignedRow,
    AllOf,
    AnyOf,
    Behind,
    Beside,
    CircleArrangement,
    EquationRow,
    FaceReads,
    InFrontOf,
    Leaf,
    LeftOf,
    Node,
    OrderedRow,
    RightOf,
    Stages,
    WordRow,
    equation_glyphs,
    evaluate,
)
from .scene import (
    Interpenetration,
    NonConvergence,
    check_bounds,
    check_stability,
    settle,
)

MAX_SYNTHESIS_ATTEMPTS = 200
# Per-attempt rejection budget for free-space sampling.
SAMPLE_REJECTIONS_PER_ATTEMPT = 200

ROW_SPACING_FACTOR = 1.5

FAILURE_KINDS = ("SynthesisFailed", "GoalUnsatisfied", "Unstable", "OutOfBounds")


class SynthesisFailed(RuntimeError):
    """No constraint-consistent placement was found."""


class _RetryAttempt(Exception):
    """Internal: this attempt's random draws did not work out."""


@dataclass(frozen=True)
class GoalCheck:
    ok: bool
    failure_kind: Optional[str]
    details: str
    state: Optional[WorldState]


@lru_cache(maxsize=None)
def reading_rotation(face: Face) -> Quat:
    """The cube rotation that presents the glyph upright on a world slot."""
    slot_dir = FACE_NORMALS[face]
    upright = canonical_upright(slot_dir)
    for q in CUBE_ROTATIONS:
        if vdot(face_normal_world(q, Face.TOP), slot_dir) < 0.999:
            continue
        if vdot(glyph_up_world(q), upright) >= 0.999:
            return q
    raise SynthesisFailed(f"no axis rotation reads on slot {face.value}")


def _selected_leaves(goal: Node) -> list[Leaf]:
    """Leaves to realize; disjunctions contribute their first branch only."""
    out: list[Leaf] = []

    def walk(node: Node) -> None:
        if isinstance(node, AllOf):
            for child in node.children:
                walk(child)
        elif isinstance(node, Stages):
            for stage in node.stages:
                walk(stage)
        elif isinstance(node, AnyOf):
            walk(node.children[0])
        else:
            out.append(node)

    walk(goal)
    return out


def _row_sequence(leaf: Leaf, state_assets: dict) -> Optional[list[str]]:
    """Member ids in required left-to-right order, or None for non-rows."""
    if isinstance(leaf, OrderedRow):
        ids = list(leaf.assets)
        if leaf.pattern == "numerical":
            return sorted(ids, key=lambda i: (int(state_assets[i].label or "0"), i))
        return sorted(ids, key=lambda i: (state_assets[i].label or "", i))
    if isinstance(leaf, (WordRow, EquationRow)):
        if isinstance(leaf, WordRow):
            glyphs = tuple(leaf.text)
            pool_labels = {a.label for a in state_assets.values() if a.label and a.label.isalpha()}
        else:
            glyphs = equation_glyphs(leaf.text)
            pool_labels = {a.label for a in state_assets.values() if a.label and a.label.isdigit()}
        queues: dict[str, list[str]] = {}
        for aid in sorted(state_assets):
            label = state_assets[aid].label
            if label in pool_labels:
                queues.setdefault(label, []).append(aid)
        seq: list[str] = []
        for glyph in glyphs:
            pool = queues.get(glyph, [])
            if not pool:
                raise SynthesisFailed(f"no free cube labeled {glyph!r} for the row")
            seq.append(pool.pop(0))
        return seq
    if isinstance(leaf, AlignedRow):
        return list(leaf.assets)
    return None


def synthesize_goal(
    spec: TaskSpec, seed: int, constants: SceneConstants = DEFAULT_CONSTANTS
) -> WorldState:
    """Construct a state intended to satisfy the goal, at rest heights.

    Deterministic in ``seed``; raises :class:`SynthesisFailed` when the
    constraints conflict or free-space sampling cannot fit the remainder.
    """
    assets = spec.asset_map()
    leaves = _selected_leaves(spec.goal)
    last_reason = "exhausted placement attempts"
    for attempt in range(MAX_SYNTHESIS_ATTEMPTS):
        rng = random.Random(seed * 1000003 + attempt)
        try:
            return _attempt(spec, rng, constants, assets, leaves)
        except _RetryAttempt as exc:
            last_reason = str(exc)
            continue
    raise SynthesisFailed(last_reason)


def _attempt(
    spec: TaskSpec,
    rng: random.Random,
    constants: SceneConstants,
    assets: dict,
    leaves: list[Leaf],
) -> WorldState:
    cx = (constants.workspace_x[0] + constants.workspace_x[1]) / 2.0
    edge_of = {aid: assets[aid].edge_m for aid in assets}
    rest = {aid: constants.table_z + edge_of[aid] / 2.0 for aid in assets}

    xy: dict[str, tuple[float, float]] = {}
    z: dict[str, float] = {}
    orientations: dict[str, Quat] = {}

    def put_xy(aid: str, pos: tuple[float, float], source: str) -> None:
        if aid in xy:
            if math.hypot(xy[aid][0] - pos[0], xy[aid][1] - pos[1]) > 1e-9:
                raise SynthesisFailed(f"{source} conflicts with earlier placement of {aid}")
            return
        xy[aid] = pos

    # Patches first: pinned poses win, the rest spread along y.
    fixed = dict(spec.init.fixed_poses or {})
    patch_ids = [aid for aid in sorted(assets) if assets[aid].kind is AssetKind.GOAL_PATCH]
    unpinned = [pid for pid in patch_ids if pid not in fixed]
    span = (len(unpinned) - 1) * 0.12
    for i, pid in enumerate(unpinned):
        put_xy(pid, (cx, span / 2.0 - i * 0.12), "patch spread")
    for pid in patch_ids:
        if pid in fixed:
            put_xy(pid, (fixed[pid].x, fixed[pid].y), "pinned patch")

    # Reading/alignment rows: slots descend in y through the workspace center.
    for leaf in leaves:
        seq = _row_sequence(leaf, assets)
        if seq is None:
            continue
        spacing = ROW_SPACING_FACTOR * max(edge_of[i] for i in seq)
        y0 = (len(seq) - 1) * spacing / 2.0
        for i, aid in enumerate(seq):
            put_xy(aid, (cx, y0 - i * spacing), "row slot")
            z.setdefault(aid, rest[aid])

    for leaf in leaves:
        if isinstance(leaf, CircleArrangement):
            n = len(leaf.assets)
            for i, aid in enumerate(leaf.assets):
                angle = 2.0 * math.pi * i / n
                put_xy(
                    aid,
                    (cx + leaf.radius_m * math.cos(angle), leaf.radius_m * math.sin(angle)),
                    "circle slot",
                )
                z.setdefault(aid, rest[aid])

    # Pairwise offsets: place the anchor at the center if nothing fixed it yet.
    offsets = {
        LeftOf: (0.0, 1.0),
        RightOf: (0.0, -1.0),
        InFrontOf: (1.0, 0.0),
        Behind: (-1.0, 0.0),
        Beside: (0.0, 1.0),
    }
    for leaf in leaves:
        direction = offsets.get(type(leaf))
        if direction is None:
            continue
        gap = ROW_SPACING_FACTOR * (edge_of[leaf.a] + edge_of[leaf.b]) / 2.0
        if leaf.b not in xy and leaf.a not in xy:
            put_xy(leaf.b, (cx, 0.0), "relation anchor")
        if leaf.b in xy and leaf.a not in xy:
            bx, by = xy[leaf.b]
            put_xy(leaf.a, (bx + direction[0] * gap, by + direction[1] * gap), "relation")
        elif leaf.a in xy and leaf.b not in xy:
            ax, ay = xy[leaf.a]
            put_xy(leaf.b, (ax - direction[0] * gap, ay - direction[1] * gap), "relation")

    # Reading goals pick an orientation; position stays free.
    for leaf in leaves:
        if isinstance(leaf, FaceReads):
            orientations[leaf.cube] = reading_rotation(leaf.face)

    # Support chains: collect edges, then resolve heights bottom-up.
    chain_edges: list[tuple[str, str]] = []
    for leaf in leaves:
        support = getattr(leaf, "support_edges", None)
        if support is None:
            continue
        chain_edges.extend(support())
    # Cubes on the table pick their own spot; only patch- or cube-supported
    # cubes take their xy from the chain.
    table_like = {"table", "floor", "ground"}
    stacked = {dst for src, dst in chain_edges if src not in table_like}

    # Sample every cube that neither a layout nor a chain will position.
    cube_ids = [aid for aid in sorted(assets) if assets[aid].is_cube]
    rejections = 0
    for aid in cube_ids:
        if aid in xy or aid in stacked:
            continue
        while True:
            x = rng.uniform(*spec.init.region.x)
            y = rng.uniform(*spec.init.region.y)
            clash = any(
                math.hypot(x - ox, y - oy) < spec.init.min_separation_m
                for other, (ox, oy) in xy.items()
                if other != aid
            )
            if not clash:
                put_xy(aid, (x, y), "free sample")
                break
            rejections += 1
            if rejections >= SAMPLE_REJECTIONS_PER_ATTEMPT:
                raise _RetryAttempt(f"free space exhausted while placing {aid}")

    # Propagate chain xy and z to a fixpoint.
    grounded_srcs = table_like | set(patch_ids)
    for _ in range(len(chain_edges) + 1):
        progressed = False
        for src, dst in chain_edges:
            if src in grounded_srcs:
                if src in xy and dst not in xy:
                    put_xy(dst, xy[src], "stack base")
                    progressed = True
                if dst not in z:
                    z[dst] = rest[dst]
                    progressed = True
            else:
                if src in xy and dst not in xy:
                    put_xy(dst, xy[src], "stack inherit")
                    progressed = True
                if src in z and dst not in z:
                    z[dst] = z[src] + (edge_of[src] + edge_of[dst]) / 2.0
                    progressed = True
        if not progressed:
            break

    poses: dict[str, Pose] = {}
    for pid in patch_ids:
        if pid in fixed:
            poses[pid] = fixed[pid]
        else:
            px, py = xy[pid]
            poses[pid] = Pose(position=(px, py, constants.table_z))
    for aid in cube_ids:
        if aid not in xy:
            raise SynthesisFailed(f"no placement derived for {aid}")
        x, y = xy[aid]
        poses[aid] = Pose(
            position=(x, y, z.get(aid, rest[aid])),
            orientation=orientations.get(aid, IDENTITY_QUAT),
        )

    state = WorldState(poses=poses, assets=assets, constants=constants)
    # Soundness: never hand back a state that does not already satisfy the
    # goal; contradictory constraints surface here as SynthesisFailed.
    outcome = evaluate(spec.goal, state)
    if not outcome.passed:
        failing = next(o for o in outcome.leaves if not o.passed)
        raise _RetryAttempt(f"construction violates {failing.label}")
    try:
        settle(state)
    except (Interpenetration, NonConvergence) as exc:
        raise _RetryAttempt(f"construction rejected by settling: {exc}")
    return state


def verify_goal(
    spec: TaskSpec, seed: int, constants: SceneConstants = DEFAULT_CONSTANTS
) -> GoalCheck:
    """Synthesize, settle, evaluate, and stability/bounds check the goal."""
    try:
        state = synthesize_goal(spec, seed, constants)
    except SynthesisFailed as exc:
        return GoalCheck(False, "SynthesisFailed", str(exc), None)

    try:
        result = settle(state)
    except (Interpenetration, NonConvergence) as exc:
        return GoalCheck(False, "SynthesisFailed", f"settling rejected construction: {exc}", state)
    settled = result.settled

    outcome = evaluate(spec.goal, settled)
    if not outcome.passed:
        failing = [o for o in outcome.leaves if not o.passed]
        details = "; ".join(f"{o.label}: {o.detail}" for o in failing[:5])
        return GoalCheck(False, "GoalUnsatisfied", details, settled)

    stability = check_stability(settled)
    if not stability.stable:
        details = (
            f"drift={stability.max_drift_m:.4f} vertical={stability.max_vertical_m:.4f}"
        )
        return GoalCheck(False, "Unstable", details, settled)

    out = check_bounds(settled)
    if out:
        return GoalCheck(False, "OutOfBounds", "outside workspace: " + ", ".join(out), settled)

    return GoalCheck(True, None, "goal state settled, satisfied, stable, in bounds", settled)
