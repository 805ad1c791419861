"""Shared domain model: assets, poses, scene constants, task specs.

A task is carried by an immutable :class:`TaskSpec`. Specs serialize to a
canonical byte form (sorted keys, 9-significant-digit numbers) whose SHA-256
digest is the task's identity everywhere else in the system, so every float
stored on a spec is quantized to 9 significant digits at construction and
serialization round-trips to exact equality.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

from .geometry import IDENTITY_QUAT, Quat, Vec3, quat_norm

JsonObj = dict[str, Any]


class InvalidSpec(ValueError):
    """A spec-level invariant does not hold."""


class UnknownAsset(KeyError):
    """An asset id was referenced that the spec or state does not declare."""


def q9(x: float) -> float:
    """Quantize to 9 significant digits, the canonical wire precision."""
    return float(f"{float(x):.9g}")


def q9_vec(v: tuple[float, ...]) -> tuple[float, ...]:
    return tuple(q9(c) for c in v)


class AssetKind(str, Enum):
    COLORED_CUBE = "ColoredCube"
    SEMANTIC_CUBE = "SemanticCube"
    GOAL_PATCH = "GoalPatch"


CUBE_KINDS = (AssetKind.COLORED_CUBE, AssetKind.SEMANTIC_CUBE)

DEFAULT_CUBE_EDGE_M = 0.04
DEFAULT_PATCH_HALF_EXTENT_M = 0.05

LETTER_LABELS = tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
DIGIT_LABELS = tuple("0123456789")

_COLOR_RE = re.compile(r"^[a-z]+$")
_LABEL_RE = re.compile(r"^[A-Z0-9]$")
_ID_RE = re.compile(r"^[a-z0-9][a-z0-9\-]*$")


@dataclass(frozen=True)
class AssetDecl:
    """One physical asset: a colored cube, a labeled cube, or a flat patch.

    ``edge_m`` is the cube edge length, or the half extent of a square
    patch. Labels are single glyphs A-Z or 0-9 and only SemanticCubes
    carry them.
    """

    id: str
    kind: AssetKind
    color: Optional[str] = None
    label: Optional[str] = None
    edge_m: float = DEFAULT_CUBE_EDGE_M

    def __post_init__(self) -> None:
        if not _ID_RE.match(self.id):
            raise InvalidSpec(f"bad asset id {self.id!r}")
        if not isinstance(self.kind, AssetKind):
            raise InvalidSpec(f"bad asset kind {self.kind!r}")
        if self.color is not None and not _COLOR_RE.match(self.color):
            raise InvalidSpec(f"bad color {self.color!r} on {self.id}")
        if self.kind is AssetKind.SEMANTIC_CUBE:
            if self.label is None or not _LABEL_RE.match(self.label):
                raise InvalidSpec(f"SemanticCube {self.id} needs a single A-Z/0-9 label")
        elif self.label is not None:
            raise InvalidSpec(f"{self.kind.value} {self.id} must not carry a label")
        if not (self.edge_m > 0.0) or not math.isfinite(self.edge_m):
            raise InvalidSpec(f"edge_m must be positive on {self.id}")
        object.__setattr__(self, "edge_m", q9(self.edge_m))

    @property
    def is_cube(self) -> bool:
        return self.kind in CUBE_KINDS

    def to_obj(self) -> JsonObj:
        return {
            "color": self.color,
            "edge_m": self.edge_m,
            "id": self.id,
            "kind": self.kind.value,
            "label": self.label,
        }

    @staticmethod
    def from_obj(obj: JsonObj) -> "AssetDecl":
        return AssetDecl(
            id=obj["id"],
            kind=AssetKind(obj["kind"]),
            color=obj.get("color"),
            label=obj.get("label"),
            edge_m=obj.get("edge_m", DEFAULT_CUBE_EDGE_M),
        )


QUAT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: Quat = IDENTITY_QUAT

    def __post_init__(self) -> None:
        if len(self.position) != 3 or not all(math.isfinite(c) for c in self.position):
            raise InvalidSpec(f"bad position {self.position!r}")
        if len(self.orientation) != 4:
            raise InvalidSpec(f"bad orientation {self.orientation!r}")
        if abs(quat_norm(self.orientation) - 1.0) > QUAT_NORM_TOL:
            raise InvalidSpec(f"orientation not unit: {self.orientation!r}")
        object.__setattr__(self, "position", q9_vec(tuple(self.position)))
        object.__setattr__(self, "orientation", q9_vec(tuple(self.orientation)))

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]

    @property
    def z(self) -> float:
        return self.position[2]

    def to_obj(self) -> JsonObj:
        return {"orientation": list(self.orientation), "position": list(self.position)}

    @staticmethod
    def from_obj(obj: JsonObj) -> "Pose":
        return Pose(position=tuple(obj["position"]), orientation=tuple(obj["orientation"]))


@dataclass(frozen=True)
class SceneConstants:
    """Fixed tabletop geometry shared by every task."""

    table_z: float = 0.95
    workspace_x: tuple[float, float] = (0.40, 0.70)
    workspace_y: tuple[float, float] = (-0.25, 0.25)
    camera_pos: Vec3 = (1.20, 0.0, 1.60)
    camera_look: Vec3 = (0.55, 0.0, 0.95)

    def __post_init__(self) -> None:
        if self.workspace_x[0] >= self.workspace_x[1]:
            raise InvalidSpec("workspace_x must be a nondegenerate interval")
        if self.workspace_y[0] >= self.workspace_y[1]:
            raise InvalidSpec("workspace_y must be a nondegenerate interval")
        object.__setattr__(self, "table_z", q9(self.table_z))
        object.__setattr__(self, "workspace_x", q9_vec(tuple(self.workspace_x)))
        object.__setattr__(self, "workspace_y", q9_vec(tuple(self.workspace_y)))
        object.__setattr__(self, "camera_pos", q9_vec(tuple(self.camera_pos)))
        object.__setattr__(self, "camera_look", q9_vec(tuple(self.camera_look)))

    def in_workspace(self, x: float, y: float) -> bool:
        """Closed-interval containment of a center point."""
        return (
            self.workspace_x[0] <= x <= self.workspace_x[1]
            and self.workspace_y[0] <= y <= self.workspace_y[1]
        )

    def to_obj(self) -> JsonObj:
        return {
            "camera_look": list(self.camera_look),
            "camera_pos": list(self.camera_pos),
            "table_z": self.table_z,
            "workspace_x": list(self.workspace_x),
            "workspace_y": list(self.workspace_y),
        }


DEFAULT_CONSTANTS = SceneConstants()


@dataclass(frozen=True)
class Region:
    """Axis-aligned sampling region for initial placement, closed intervals."""

    x: tuple[float, float]
    y: tuple[float, float]

    def __post_init__(self) -> None:
        if self.x[0] > self.x[1] or self.y[0] > self.y[1]:
            raise InvalidSpec(f"degenerate region {self!r}")
        object.__setattr__(self, "x", q9_vec(tuple(self.x)))
        object.__setattr__(self, "y", q9_vec(tuple(self.y)))

    def to_obj(self) -> JsonObj:
        return {"x": list(self.x), "y": list(self.y)}

    @staticmethod
    def from_obj(obj: JsonObj) -> "Region":
        return Region(x=tuple(obj["x"]), y=tuple(obj["y"]))


def default_region(constants: SceneConstants = DEFAULT_CONSTANTS, margin: float = DEFAULT_CUBE_EDGE_M / 2) -> Region:
    return Region(
        x=(constants.workspace_x[0] + margin, constants.workspace_x[1] - margin),
        y=(constants.workspace_y[0] + margin, constants.workspace_y[1] - margin),
    )


@dataclass(frozen=True)
class InitDistribution:
    """Seeded distribution over initial placements.

    ``fixed_poses`` pins specific assets; everything else is rejection
    sampled inside ``region`` at pairwise ``min_separation_m``.
    """

    region: Region
    min_separation_m: float = 0.06
    fixed_poses: Optional[Mapping[str, Pose]] = None
    seedable: bool = True

    def __post_init__(self) -> None:
        if not self.seedable:
            raise InvalidSpec("init distributions must be seedable")
        if self.min_separation_m < 0 or not math.isfinite(self.min_separation_m):
            raise InvalidSpec("min_separation_m must be >= 0")
        ws = DEFAULT_CONSTANTS
        if not (
            ws.workspace_x[0] <= self.region.x[0]
            and self.region.x[1] <= ws.workspace_x[1]
            and ws.workspace_y[0] <= self.region.y[0]
            and self.region.y[1] <= ws.workspace_y[1]
        ):
            raise InvalidSpec("init region must lie inside the workspace")
        object.__setattr__(self, "min_separation_m", q9(self.min_separation_m))
        if self.fixed_poses is not None:
            object.__setattr__(self, "fixed_poses", dict(self.fixed_poses))

    def to_obj(self) -> JsonObj:
        fixed = None
        if self.fixed_poses is not None:
            fixed = {aid: pose.to_obj() for aid, pose in sorted(self.fixed_poses.items())}
        return {
            "fixed_poses": fixed,
            "min_separation_m": self.min_separation_m,
            "region": self.region.to_obj(),
            "seedable": self.seedable,
        }

    @staticmethod
    def from_obj(obj: JsonObj) -> "InitDistribution":
        fixed = obj.get("fixed_poses")
        poses = None
        if fixed is not None:
            poses = {aid: Pose.from_obj(p) for aid, p in fixed.items()}
        return InitDistribution(
            region=Region.from_obj(obj["region"]),
            min_separation_m=obj.get("min_separation_m", 0.06),
            fixed_poses=poses,
            seedable=obj.get("seedable", True),
        )


@dataclass(frozen=True)
class WorldState:
    """Concrete scene: a pose for every declared asset.

    Carries the asset declarations so geometric rules (edge lengths,
    patch extents) evaluate without reaching back to the spec.
    """

    poses: Mapping[str, Pose]
    assets: Mapping[str, AssetDecl]
    constants: SceneConstants = DEFAULT_CONSTANTS

    def __post_init__(self) -> None:
        object.__setattr__(self, "poses", dict(self.poses))
        object.__setattr__(self, "assets", dict(self.assets))
        missing = set(self.assets) - set(self.poses)
        if missing:
            raise InvalidSpec(f"assets without poses: {sorted(missing)}")
        extra = set(self.poses) - set(self.assets)
        if extra:
            raise InvalidSpec(f"poses without assets: {sorted(extra)}")
        for aid, decl in self.assets.items():
            if decl.kind is AssetKind.GOAL_PATCH:
                pose = self.poses[aid]
                if abs(pose.z - self.constants.table_z) > 1e-6:
                    raise InvalidSpec(f"patch {aid} must lie on the table plane")
                if pose.orientation != IDENTITY_QUAT:
                    raise InvalidSpec(f"patch {aid} must keep identity orientation")

    def pose(self, asset_id: str) -> Pose:
        try:
            return self.poses[asset_id]
        except KeyError as exc:
            raise UnknownAsset(asset_id) from exc

    def decl(self, asset_id: str) -> AssetDecl:
        try:
            return self.assets[asset_id]
        except KeyError as exc:
            raise UnknownAsset(asset_id) from exc

    def edge(self, asset_id: str) -> float:
        return self.decl(asset_id).edge_m

    def cube_ids(self) -> list[str]:
        return sorted(aid for aid, d in self.assets.items() if d.is_cube)

    def with_pose(self, asset_id: str, pose: Pose) -> "WorldState":
        if asset_id not in self.assets:
            raise UnknownAsset(asset_id)
        poses = dict(self.poses)
        poses[asset_id] = pose
        return WorldState(poses=poses, assets=self.assets, constants=self.constants)


@dataclass(frozen=True)
class TaskSpec:
    """Complete executable task: assets, init distribution, goal, language."""

    name: str
    instruction: str
    assets: tuple[AssetDecl, ...]
    init: InitDistribution
    goal: Any  # predicate tree node; kept loose to avoid an import cycle
    paraphrases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "paraphrases", tuple(self.paraphrases))
        validate_spec(self)

    def asset_map(self) -> dict[str, AssetDecl]:
        return {a.id: a for a in self.assets}

    def to_obj(self) -> JsonObj:
        return {
            "assets": [a.to_obj() for a in sorted(self.assets, key=lambda a: a.id)],
            "goal": self.goal.to_obj(),
            "init": self.init.to_obj(),
            "instruction": self.instruction,
            "name": self.name,
            "paraphrases": list(self.paraphrases),
        }


def validate_spec(spec: TaskSpec) -> None:
    """Raise :class:`InvalidSpec` when any structural invariant fails."""
    if not spec.name or not isinstance(spec.name, str):
        raise InvalidSpec("spec name must be a non-empty string")
    if not spec.instruction or not spec.instruction.strip():
        raise InvalidSpec("instruction must be non-empty")
    ids = [a.id for a in spec.assets]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise InvalidSpec(f"duplicate asset ids: {dupes}")
    for a in spec.assets:
        if not isinstance(a, AssetDecl):
            raise InvalidSpec(f"asset entry {a!r} is not an AssetDecl")
    declared = set(ids)
    referenced = set(spec.goal.referenced_ids())
    unknown = referenced - declared
    if unknown:
        raise InvalidSpec(f"goal references undeclared assets: {sorted(unknown)}")
    if spec.init.fixed_poses:
        unknown = set(spec.init.fixed_poses) - declared
        if unknown:
            raise InvalidSpec(f"init pins undeclared assets: {sorted(unknown)}")
    letters = {a.label for a in spec.assets if a.label and a.label.isalpha()}
    digits = {a.label for a in spec.assets if a.label and a.label.isdigit()}
    if len(letters) > len(LETTER_LABELS):
        raise InvalidSpec("more distinct letter labels than the glyph pool")
    if len(digits) > len(DIGIT_LABELS):
        raise InvalidSpec("more distinct digit labels than the glyph pool")
    spec.goal.validate()


# ---------------------------------------------------------------------------
# Canonical serialization and content addressing.
# ---------------------------------------------------------------------------


def canonical_serialize(spec: TaskSpec) -> bytes:
    """Canonical UTF-8 JSON: sorted keys, compact separators.

    All floats on a spec are already quantized to 9 significant digits, so
    the default shortest-repr float rendering is deterministic and the
    output is byte-stable across runs and platforms.
    """
    text = json.dumps(spec.to_obj(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def content_hash(spec: TaskSpec) -> str:
    return hashlib.sha256(canonical_serialize(spec)).hexdigest()


def spec_from_obj(obj: JsonObj) -> TaskSpec:
    from . import predicates

    try:
        return TaskSpec(
            name=obj["name"],
            instruction=obj["instruction"],
            assets=tuple(AssetDecl.from_obj(a) for a in obj["assets"]),
            init=InitDistribution.from_obj(obj["init"]),
            goal=predicates.node_from_obj(obj["goal"]),
            paraphrases=tuple(obj.get("paraphrases", ())),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidSpec(f"malformed spec object: {exc!r}") from exc


def deserialize_spec(data: bytes) -> TaskSpec:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"not canonical spec JSON: {exc}") from exc
    return spec_from_obj(obj)
