"""Success predicates over world states.

A goal is a tree: composite nodes (:class:`AllOf`, :class:`AnyOf`,
:class:`Stages`) over geometric and semantic leaves. Evaluation is pure and
tolerance-explicit; every leaf also knows which support-graph edges it
implies so stacking goals can be checked for physical consistency before
anything is placed.

Conventions: +x points toward the camera ("front"), +y is "left" as seen
from the camera, rows read left to right from +y toward -y.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, fields
from typing import Any, Iterator, Mapping, Optional, Union

import numpy as np

from .core import InvalidSpec, JsonObj, WorldState, q9
from .geometry import (
    FACE_NORMALS,
    Face,
    canonical_upright,
    face_normal_world,
    glyph_up_world,
    vdot,
)

# Alignment thresholds for reading a glyph: face normal within ~14 degrees
# of the expected direction, glyph upright within ~20 degrees in plane.
READ_NORMAL_COS_MIN = 0.97
READ_GLYPH_COS_MIN = 0.94

# Default tolerances, in meters.
DEFAULT_STACK_TOL_M = 0.005
DEFAULT_SPATIAL_TOL_M = 0.01

# Names that ground a support chain without being assets themselves.
GROUNDED_NODES = frozenset({"table", "floor", "ground"})

ORDERING_PATTERNS = ("alphabetical", "numerical")

_WORD_RE = re.compile(r"^[A-Z]{2,}$")
_EQUATION_RE = re.compile(r"^([0-9])([+\-x])([0-9])=([0-9]{1,2})$")


class PredicateError(InvalidSpec):
    """A predicate tree is structurally invalid."""


def parse_equation(text: str) -> tuple[int, str, int, int]:
    """Parse 'a(+|-|x)b=c' into operands; raises on malformed text."""
    m = _EQUATION_RE.match(text)
    if not m:
        raise PredicateError(f"not a single-digit equation: {text!r}")
    a, op, b, c = int(m.group(1)), m.group(2), int(m.group(3)), int(m.group(4))
    return a, op, b, c


def equation_is_correct(text: str) -> bool:
    a, op, b, c = parse_equation(text)
    result = {"+": a + b, "-": a - b, "x": a * b}[op]
    return result == c


def equation_glyphs(text: str) -> tuple[str, ...]:
    """Digit glyphs of the equation in reading order; operators are not cubes."""
    a, _, b, c = parse_equation(text)
    return (str(a), str(b), *str(c))


def normalize_equation(text: str) -> str:
    """Strip spaces and fold multiplication spellings to 'x'."""
    folded = text.replace(" ", "").replace("×", "x").replace("*", "x")
    folded = folded.replace("−", "-")
    return folded


# ---------------------------------------------------------------------------
# Leaf nodes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class On:
    """Cube ``a`` rests centered on top of cube ``b``."""

    a: str
    b: str
    tol_m: float = DEFAULT_STACK_TOL_M

    kind = "on"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if self.a == self.b:
            raise PredicateError(f"On({self.a!r}) cannot support itself")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return (self.a, self.b)

    def support_edges(self) -> tuple[tuple[str, str], ...]:
        return ((self.b, self.a),)


@dataclass(frozen=True)
class OnTable:
    a: str
    tol_m: float = DEFAULT_STACK_TOL_M

    kind = "on_table"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return (self.a,)

    def support_edges(self) -> tuple[tuple[str, str], ...]:
        return (("table", self.a),)


@dataclass(frozen=True)
class OnPatch:
    """Cube ``a`` rests on the table with its center over patch ``patch``."""

    a: str
    patch: str
    tol_m: float = DEFAULT_STACK_TOL_M

    kind = "on_patch"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if self.a == self.patch:
            raise PredicateError(f"OnPatch({self.a!r}) cannot target itself")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return (self.a, self.patch)

    def support_edges(self) -> tuple[tuple[str, str], ...]:
        return ((self.patch, self.a),)

    def grounded_ids(self) -> tuple[str, ...]:
        return (self.patch,)


def _directional(name: str):
    """Build a strict one-axis relation leaf class."""

    @dataclass(frozen=True)
    class Directional:
        a: str
        b: str
        tol_m: float = DEFAULT_SPATIAL_TOL_M

        kind = name

        def __post_init__(self) -> None:
            object.__setattr__(self, "tol_m", q9(self.tol_m))

        def validate(self) -> None:
            if self.a == self.b:
                raise PredicateError(f"{name}({self.a!r}) compared with itself")
            _require_positive(self.tol_m, self)

        def referenced_ids(self) -> tuple[str, ...]:
            return (self.a, self.b)

    return Directional


class LeftOf(_directional("left_of")):
    """``a`` sits at strictly larger y than ``b`` (left from the camera)."""


class RightOf(_directional("right_of")):
    """``a`` sits at strictly smaller y than ``b``."""


class InFrontOf(_directional("in_front_of")):
    """``a`` sits at strictly larger x than ``b`` (toward the camera)."""


class Behind(_directional("behind")):
    """``a`` sits at strictly smaller x than ``b``."""


@dataclass(frozen=True)
class Beside:
    """``a`` and ``b`` rest at the same height within one to two edge lengths."""

    a: str
    b: str
    tol_m: float = DEFAULT_STACK_TOL_M

    kind = "beside"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if self.a == self.b:
            raise PredicateError("Beside compared with itself")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class AlignedRow:
    """The listed cubes form a straight row along ``axis``."""

    assets: tuple[str, ...]
    axis: str = "y"
    tol_m: float = DEFAULT_SPATIAL_TOL_M

    kind = "aligned_row"

    def __post_init__(self) -> None:
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        _require_distinct(self.assets, 2, self)
        if self.axis not in ("x", "y"):
            raise PredicateError(f"row axis must be x or y, got {self.axis!r}")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return self.assets


@dataclass(frozen=True)
class OrderedRow:
    """The listed labeled cubes read in pattern order, left to right."""

    assets: tuple[str, ...]
    pattern: str = "alphabetical"
    tol_m: float = DEFAULT_SPATIAL_TOL_M

    kind = "ordered_row"

    def __post_init__(self) -> None:
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        _require_distinct(self.assets, 2, self)
        if self.pattern not in ORDERING_PATTERNS:
            raise PredicateError(f"unknown ordering pattern {self.pattern!r}")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return self.assets


@dataclass(frozen=True)
class WordRow:
    """Every letter cube in the scene spells ``text`` left to right, faces up."""

    text: str
    tol_m: float = DEFAULT_SPATIAL_TOL_M

    kind = "word_row"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if not _WORD_RE.match(self.text):
            raise PredicateError(f"word must be two or more letters A-Z: {self.text!r}")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class EquationRow:
    """Digit cubes spell the (correct) equation's digits left to right."""

    text: str
    tol_m: float = DEFAULT_SPATIAL_TOL_M

    kind = "equation_row"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if not equation_is_correct(self.text):
            raise PredicateError(f"equation is malformed or false: {self.text!r}")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class CircleArrangement:
    """The listed cubes lie on a common circle at roughly even spacing."""

    assets: tuple[str, ...]
    radius_m: float = 0.08
    tol_m: float = DEFAULT_SPATIAL_TOL_M

    kind = "circle"

    def __post_init__(self) -> None:
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "radius_m", q9(self.radius_m))
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        _require_distinct(self.assets, 3, self)
        _require_positive(self.radius_m, self)
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        return self.assets


@dataclass(frozen=True)
class FaceReads:
    """Cube ``cube`` shows ``glyph`` on the world-facing ``face`` slot, upright."""

    cube: str
    face: Face
    glyph: str
    normal_cos_min: float = READ_NORMAL_COS_MIN
    glyph_cos_min: float = READ_GLYPH_COS_MIN

    kind = "face_reads"

    def __post_init__(self) -> None:
        if isinstance(self.face, str) and not isinstance(self.face, Face):
            object.__setattr__(self, "face", Face(self.face))
        object.__setattr__(self, "normal_cos_min", q9(self.normal_cos_min))
        object.__setattr__(self, "glyph_cos_min", q9(self.glyph_cos_min))

    def validate(self) -> None:
        if not re.match(r"^[A-Z0-9]$", self.glyph):
            raise PredicateError(f"glyph must be one A-Z/0-9 character: {self.glyph!r}")
        if not isinstance(self.face, Face):
            raise PredicateError(f"bad face {self.face!r}")
        for value in (self.normal_cos_min, self.glyph_cos_min):
            if not (0.0 < value <= 1.0):
                raise PredicateError(f"cosine threshold out of range: {value}")

    def referenced_ids(self) -> tuple[str, ...]:
        return (self.cube,)


@dataclass(frozen=True)
class StackSpec:
    """One tower: cube ids bottom to top, optionally rooted on a patch."""

    cubes: tuple[str, ...]
    base: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "cubes", tuple(self.cubes))

    def to_obj(self) -> JsonObj:
        return {"base": self.base, "cubes": list(self.cubes)}

    @staticmethod
    def from_obj(obj: JsonObj) -> "StackSpec":
        return StackSpec(cubes=tuple(obj["cubes"]), base=obj.get("base"))


@dataclass(frozen=True)
class TwoStacks:
    """Two disjoint towers, each optionally anchored to a patch."""

    stacks: tuple[StackSpec, StackSpec]
    tol_m: float = DEFAULT_STACK_TOL_M

    kind = "two_stacks"

    def __post_init__(self) -> None:
        object.__setattr__(self, "stacks", tuple(self.stacks))
        object.__setattr__(self, "tol_m", q9(self.tol_m))

    def validate(self) -> None:
        if len(self.stacks) != 2:
            raise PredicateError("TwoStacks needs exactly two stacks")
        seen: set[str] = set()
        for stack in self.stacks:
            if not stack.cubes:
                raise PredicateError("each stack needs at least one cube")
            for cid in stack.cubes:
                if cid in seen:
                    raise PredicateError(f"cube {cid!r} appears in both stacks")
                seen.add(cid)
            if stack.base is not None and stack.base in seen:
                raise PredicateError(f"patch {stack.base!r} also listed as a cube")
        _require_positive(self.tol_m, self)

    def referenced_ids(self) -> tuple[str, ...]:
        ids: list[str] = []
        for stack in self.stacks:
            ids.extend(stack.cubes)
            if stack.base is not None:
                ids.append(stack.base)
        return tuple(ids)

    def support_edges(self) -> tuple[tuple[str, str], ...]:
        edges: list[tuple[str, str]] = []
        for stack in self.stacks:
            root = stack.base if stack.base is not None else "table"
            prev = root
            for cid in stack.cubes:
                edges.append((prev, cid))
                prev = cid
        return tuple(edges)

    def grounded_ids(self) -> tuple[str, ...]:
        return tuple(s.base for s in self.stacks if s.base is not None)


# ---------------------------------------------------------------------------
# Composite nodes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AllOf:
    children: tuple["Node", ...]

    kind = "all"

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))

    def validate(self) -> None:
        for child in self.children:
            child.validate()

    def referenced_ids(self) -> tuple[str, ...]:
        return tuple(i for c in self.children for i in c.referenced_ids())


@dataclass(frozen=True)
class AnyOf:
    children: tuple["Node", ...]

    kind = "any"

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))

    def validate(self) -> None:
        if not self.children:
            raise PredicateError("AnyOf needs at least one branch")
        for child in self.children:
            child.validate()

    def referenced_ids(self) -> tuple[str, ...]:
        return tuple(i for c in self.children for i in c.referenced_ids())


@dataclass(frozen=True)
class Stages:
    """Ordered subgoals. A single-state check treats them as a conjunction."""

    stages: tuple["Node", ...]

    kind = "staged"

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))

    def validate(self) -> None:
        if not self.stages:
            raise PredicateError("Stages needs at least one stage")
        for stage in self.stages:
            stage.validate()

    def referenced_ids(self) -> tuple[str, ...]:
        return tuple(i for s in self.stages for i in s.referenced_ids())


Leaf = Union[
    On, OnTable, OnPatch, LeftOf, RightOf, InFrontOf, Behind, Beside,
    AlignedRow, OrderedRow, WordRow, EquationRow, CircleArrangement,
    FaceReads, TwoStacks,
]
Node = Union[Leaf, AllOf, AnyOf, Stages]

_LEAF_TYPES = (
    On, OnTable, OnPatch, LeftOf, RightOf, InFrontOf, Behind, Beside,
    AlignedRow, OrderedRow, WordRow, EquationRow, CircleArrangement,
    FaceReads, TwoStacks,
)
_COMPOSITE_TYPES = (AllOf, AnyOf, Stages)
_KIND_TO_TYPE = {t.kind: t for t in _LEAF_TYPES + _COMPOSITE_TYPES}


def _require_positive(value: float, leaf: Any) -> None:
    if not (value > 0.0) or not math.isfinite(value):
        raise PredicateError(f"tolerance must be positive on {describe(leaf)}")


def _require_distinct(ids: tuple[str, ...], minimum: int, leaf: Any) -> None:
    if len(ids) < minimum or len(set(ids)) != len(ids):
        raise PredicateError(
            f"{type(leaf).__name__} needs >= {minimum} distinct assets, got {list(ids)}"
        )


def node_to_obj(node: Node) -> JsonObj:
    obj: JsonObj = {"kind": node.kind}
    if isinstance(node, (AllOf, AnyOf)):
        obj["children"] = [node_to_obj(c) for c in node.children]
        return obj
    if isinstance(node, Stages):
        obj["stages"] = [node_to_obj(s) for s in node.stages]
        return obj
    for f in fields(node):
        value = getattr(node, f.name)
        if isinstance(value, Face):
            value = value.value
        elif isinstance(value, tuple) and value and isinstance(value[0], StackSpec):
            value = [s.to_obj() for s in value]
        elif isinstance(value, tuple):
            value = list(value)
        obj[f.name] = value
    return obj


def node_from_obj(obj: JsonObj) -> Node:
    try:
        kind = obj["kind"]
        cls = _KIND_TO_TYPE[kind]
    except KeyError as exc:
        raise PredicateError(f"unknown predicate kind in {obj!r}") from exc
    if cls in (AllOf, AnyOf):
        return cls(children=tuple(node_from_obj(c) for c in obj["children"]))
    if cls is Stages:
        return Stages(stages=tuple(node_from_obj(s) for s in obj["stages"]))
    kwargs: dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in obj:
            continue
        value = obj[f.name]
        if f.name == "face":
            value = Face(value)
        elif f.name == "stacks":
            value = tuple(StackSpec.from_obj(s) for s in value)
        elif f.name in ("assets",):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


# Composite serialization hooks used by TaskSpec.
for _cls in _LEAF_TYPES + _COMPOSITE_TYPES:
    _cls.to_obj = lambda self: node_to_obj(self)  # type: ignore[assignment]


def describe(node: Node) -> str:
    """Stable one-line label for a node, used in reports and diagnostics."""
    return json.dumps(node_to_obj(node), sort_keys=True, separators=(",", ":"))


def iter_leaves(node: Node, path: str = "") -> Iterator[tuple[str, Leaf]]:
    if isinstance(node, (AllOf, AnyOf)):
        for i, child in enumerate(node.children):
            yield from iter_leaves(child, f"{path}{i}.")
        return
    if isinstance(node, Stages):
        for i, stage in enumerate(node.stages):
            yield from iter_leaves(stage, f"{path}{i}.")
        return
    yield path.rstrip("."), node


def rebind_ids(node: Node, mapping: Mapping[str, str]) -> Node:
    """Substitute asset ids throughout a tree, leaving structure intact."""

    def sub(aid: str) -> str:
        return mapping.get(aid, aid)

    if isinstance(node, AllOf):
        return AllOf(tuple(rebind_ids(c, mapping) for c in node.children))
    if isinstance(node, AnyOf):
        return AnyOf(tuple(rebind_ids(c, mapping) for c in node.children))
    if isinstance(node, Stages):
        return Stages(tuple(rebind_ids(s, mapping) for s in node.stages))
    if isinstance(node, (On, LeftOf, RightOf, InFrontOf, Behind, Beside)):
        return type(node)(a=sub(node.a), b=sub(node.b), tol_m=node.tol_m)
    if isinstance(node, OnTable):
        return OnTable(a=sub(node.a), tol_m=node.tol_m)
    if isinstance(node, OnPatch):
        return OnPatch(a=sub(node.a), patch=sub(node.patch), tol_m=node.tol_m)
    if isinstance(node, (AlignedRow,)):
        return AlignedRow(tuple(sub(i) for i in node.assets), node.axis, node.tol_m)
    if isinstance(node, OrderedRow):
        return OrderedRow(tuple(sub(i) for i in node.assets), node.pattern, node.tol_m)
    if isinstance(node, CircleArrangement):
        return CircleArrangement(tuple(sub(i) for i in node.assets), node.radius_m, node.tol_m)
    if isinstance(node, FaceReads):
        return FaceReads(sub(node.cube), node.face, node.glyph,
                         node.normal_cos_min, node.glyph_cos_min)
    if isinstance(node, TwoStacks):
        stacks = tuple(
            StackSpec(tuple(sub(c) for c in s.cubes), sub(s.base) if s.base else None)
            for s in node.stacks
        )
        return TwoStacks(stacks, node.tol_m)
    return node  # WordRow, EquationRow carry no ids


def structure_signature(node: Node) -> Any:
    """Tree shape with asset ids erased; equal signatures mean isomorphic trees."""
    if isinstance(node, (AllOf, AnyOf)):
        return (node.kind, tuple(structure_signature(c) for c in node.children))
    if isinstance(node, Stages):
        return (node.kind, tuple(structure_signature(s) for s in node.stages))
    obj = node_to_obj(node)
    for key in ("a", "b", "patch", "cube"):
        obj.pop(key, None)
    if "assets" in obj:
        obj["assets"] = len(obj["assets"])
    if "stacks" in obj:
        obj["stacks"] = [len(s["cubes"]) for s in obj["stacks"]]
    return (node.kind, json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# Evaluation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeafOutcome:
    path: str
    label: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class EvalResult:
    passed: bool
    leaves: tuple[LeafOutcome, ...]
    notes: tuple[str, ...] = ()


def _horizontal_distance(state: WorldState, a: str, b: str) -> float:
    pa, pb = state.pose(a), state.pose(b)
    return math.hypot(pa.x - pb.x, pa.y - pb.y)


def _rest_height(state: WorldState, aid: str) -> float:
    return state.constants.table_z + state.edge(aid) / 2.0


def reads_up(state: WorldState, aid: str) -> bool:
    """True when the cube's glyph reads correctly on the TOP slot."""
    decl = state.decl(aid)
    if decl.label is None:
        return False
    return _face_reads_ok(state, aid, Face.TOP, READ_NORMAL_COS_MIN, READ_GLYPH_COS_MIN)


def _face_reads_ok(
    state: WorldState, aid: str, face: Face, normal_min: float, glyph_min: float
) -> bool:
    q = state.pose(aid).orientation
    slot_dir = FACE_NORMALS[face]
    labeled_normal = face_normal_world(q, Face.TOP)
    normal_cos = vdot(labeled_normal, slot_dir)
    glyph_cos = vdot(glyph_up_world(q), canonical_upright(slot_dir))
    return normal_cos >= normal_min and glyph_cos >= glyph_min


def reading_order(state: WorldState, ids: list[str]) -> list[str]:
    """Left-to-right reading order: descending y, ties by x then id."""
    return sorted(ids, key=lambda i: (-state.pose(i).y, state.pose(i).x, i))


def _row_aligned(state: WorldState, ids: list[str], axis: str, tol: float) -> bool:
    if len(ids) < 2:
        return True
    coord = (lambda p: p.x) if axis == "y" else (lambda p: p.y)
    values = [coord(state.pose(i)) for i in ids]
    mean = sum(values) / len(values)
    return max(abs(v - mean) for v in values) <= tol


def _check_on(leaf: On, state: WorldState) -> tuple[bool, str]:
    pa, pb = state.pose(leaf.a), state.pose(leaf.b)
    ea, eb = state.edge(leaf.a), state.edge(leaf.b)
    dz = pa.z - pb.z
    gap = abs(dz - (ea + eb) / 2.0)
    horiz = _horizontal_distance(state, leaf.a, leaf.b)
    ok = gap <= leaf.tol_m and horiz <= 0.5 * eb
    return ok, f"gap={gap:.4f} horiz={horiz:.4f}"


def _check_on_table(leaf: OnTable, state: WorldState) -> tuple[bool, str]:
    dz = abs(state.pose(leaf.a).z - _rest_height(state, leaf.a))
    return dz <= leaf.tol_m, f"dz={dz:.4f}"


def _check_on_patch(leaf: OnPatch, state: WorldState) -> tuple[bool, str]:
    pa, pp = state.pose(leaf.a), state.pose(leaf.patch)
    half = state.edge(leaf.patch)
    dz = abs(pa.z - _rest_height(state, leaf.a))
    inside = abs(pa.x - pp.x) <= half and abs(pa.y - pp.y) <= half
    return dz <= leaf.tol_m and inside, f"dz={dz:.4f} dx={pa.x - pp.x:.4f} dy={pa.y - pp.y:.4f}"


def _check_beside(leaf: Beside, state: WorldState) -> tuple[bool, str]:
    pa, pb = state.pose(leaf.a), state.pose(leaf.b)
    edge = (state.edge(leaf.a) + state.edge(leaf.b)) / 2.0
    horiz = _horizontal_distance(state, leaf.a, leaf.b)
    level = abs(pa.z - pb.z) <= leaf.tol_m
    ok = level and edge <= horiz <= 2.0 * edge
    return ok, f"horiz={horiz:.4f} dz={abs(pa.z - pb.z):.4f}"


def _check_ordered_row(leaf: OrderedRow, state: WorldState) -> tuple[bool, str]:
    ids = list(leaf.assets)
    order = reading_order(state, ids)
    labels = [state.decl(i).label for i in order]
    if any(lbl is None for lbl in labels):
        return False, "unlabeled cube in ordered row"
    if leaf.pattern == "alphabetical":
        ordered = all(labels[i] < labels[i + 1] for i in range(len(labels) - 1))
    else:
        if not all(lbl.isdigit() for lbl in labels):
            return False, "non-digit label under numerical pattern"
        ordered = all(int(labels[i]) < int(labels[i + 1]) for i in range(len(labels) - 1))
    aligned = _row_aligned(state, ids, "y", leaf.tol_m)
    readable = all(reads_up(state, i) for i in ids)
    return ordered and aligned and readable, f"order={''.join(labels)}"


def _check_word_row(leaf: WordRow, state: WorldState) -> tuple[bool, str]:
    ids = [i for i in state.cube_ids()
           if state.decl(i).label is not None and state.decl(i).label.isalpha()]
    if len(ids) != len(leaf.text):
        return False, f"{len(ids)} letter cubes for word of {len(leaf.text)}"
    order = reading_order(state, ids)
    spelled = "".join(state.decl(i).label or "?" for i in order)
    aligned = _row_aligned(state, order, "y", leaf.tol_m)
    readable = all(reads_up(state, i) for i in order)
    return spelled == leaf.text and aligned and readable, f"spelled={spelled}"


def _check_equation_row(leaf: EquationRow, state: WorldState) -> tuple[bool, str]:
    wanted = equation_glyphs(leaf.text)
    ids = [i for i in state.cube_ids()
           if state.decl(i).label is not None and state.decl(i).label.isdigit()]
    if len(ids) != len(wanted):
        return False, f"{len(ids)} digit cubes for {len(wanted)} glyphs"
    order = reading_order(state, ids)
    spelled = tuple(state.decl(i).label or "?" for i in order)
    aligned = _row_aligned(state, order, "y", leaf.tol_m)
    readable = all(reads_up(state, i) for i in order)
    return spelled == wanted and aligned and readable, f"spelled={''.join(spelled)}"


def fit_circle(points: list[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares circle through 2D points: returns (cx, cy, r)."""
    arr = np.asarray(points, dtype=float)
    a = np.column_stack([2.0 * arr[:, 0], 2.0 * arr[:, 1], np.ones(len(arr))])
    b = (arr ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy, c = sol
    r = math.sqrt(max(c + cx * cx + cy * cy, 0.0))
    return float(cx), float(cy), float(r)


def _check_circle(leaf: CircleArrangement, state: WorldState) -> tuple[bool, str]:
    points = [(state.pose(i).x, state.pose(i).y) for i in leaf.assets]
    cx, cy, r = fit_circle(points)
    if r <= 0.0:
        return False, "degenerate circle fit"
    residual = max(abs(math.hypot(x - cx, y - cy) - r) for x, y in points)
    angles = sorted(math.atan2(y - cy, x - cx) for x, y in points)
    gaps = [angles[i + 1] - angles[i] for i in range(len(angles) - 1)]
    gaps.append(2.0 * math.pi - (angles[-1] - angles[0]))
    uniform = 2.0 * math.pi / len(points)
    even = max(gaps) <= 2.0 * uniform + 1e-9
    return residual <= leaf.tol_m and even, f"residual={residual:.4f} r={r:.4f}"


def _check_face_reads(leaf: FaceReads, state: WorldState) -> tuple[bool, str]:
    decl = state.decl(leaf.cube)
    if decl.label != leaf.glyph:
        return False, f"label={decl.label!r} wanted {leaf.glyph!r}"
    ok = _face_reads_ok(state, leaf.cube, leaf.face, leaf.normal_cos_min, leaf.glyph_cos_min)
    return ok, f"face={leaf.face.value}"


def _check_two_stacks(leaf: TwoStacks, state: WorldState) -> tuple[bool, str]:
    for stack in leaf.stacks:
        bottom = stack.cubes[0]
        if stack.base is not None:
            ok, _ = _check_on_patch(OnPatch(bottom, stack.base, leaf.tol_m), state)
        else:
            ok, _ = _check_on_table(OnTable(bottom, leaf.tol_m), state)
        if not ok:
            return False, f"base of {bottom} misplaced"
        for below, above in zip(stack.cubes, stack.cubes[1:]):
            ok, _ = _check_on(On(above, below, leaf.tol_m), state)
            if not ok:
                return False, f"{above} not on {below}"
    return True, "both stacks in place"


def _check_leaf(leaf: Leaf, state: WorldState) -> tuple[bool, str]:
    if isinstance(leaf, On):
        return _check_on(leaf, state)
    if isinstance(leaf, OnTable):
        return _check_on_table(leaf, state)
    if isinstance(leaf, OnPatch):
        return _check_on_patch(leaf, state)
    if isinstance(leaf, LeftOf):
        d = state.pose(leaf.a).y - state.pose(leaf.b).y
        return d > leaf.tol_m, f"dy={d:.4f}"
    if isinstance(leaf, RightOf):
        d = state.pose(leaf.b).y - state.pose(leaf.a).y
        return d > leaf.tol_m, f"dy={d:.4f}"
    if isinstance(leaf, InFrontOf):
        d = state.pose(leaf.a).x - state.pose(leaf.b).x
        return d > leaf.tol_m, f"dx={d:.4f}"
    if isinstance(leaf, Behind):
        d = state.pose(leaf.b).x - state.pose(leaf.a).x
        return d > leaf.tol_m, f"dx={d:.4f}"
    if isinstance(leaf, Beside):
        return _check_beside(leaf, state)
    if isinstance(leaf, AlignedRow):
        ok = _row_aligned(state, list(leaf.assets), leaf.axis, leaf.tol_m)
        return ok, f"axis={leaf.axis}"
    if isinstance(leaf, OrderedRow):
        return _check_ordered_row(leaf, state)
    if isinstance(leaf, WordRow):
        return _check_word_row(leaf, state)
    if isinstance(leaf, EquationRow):
        return _check_equation_row(leaf, state)
    if isinstance(leaf, CircleArrangement):
        return _check_circle(leaf, state)
    if isinstance(leaf, FaceReads):
        return _check_face_reads(leaf, state)
    if isinstance(leaf, TwoStacks):
        return _check_two_stacks(leaf, state)
    raise PredicateError(f"unhandled leaf {leaf!r}")


def evaluate(goal: Node, state: WorldState) -> EvalResult:
    """Evaluate a goal tree against one state.

    Staged goals are evaluated as a conjunction over the single state; a
    note flags that stage ordering was not observable.
    """
    outcomes: list[LeafOutcome] = []
    notes: list[str] = []

    def walk(node: Node, path: str) -> bool:
        if isinstance(node, AllOf):
            results = [walk(c, f"{path}{i}.") for i, c in enumerate(node.children)]
            return all(results)
        if isinstance(node, AnyOf):
            results = [walk(c, f"{path}{i}.") for i, c in enumerate(node.children)]
            return any(results)
        if isinstance(node, Stages):
            if "staged goal evaluated as a conjunction over a single state" not in notes:
                notes.append("staged goal evaluated as a conjunction over a single state")
            results = [walk(s, f"{path}{i}.") for i, s in enumerate(node.stages)]
            return all(results)
        passed, detail = _check_leaf(node, state)
        outcomes.append(LeafOutcome(path.rstrip("."), describe(node), passed, detail))
        return passed

    passed = walk(goal, "")
    return EvalResult(passed=passed, leaves=tuple(outcomes), notes=tuple(notes))


# ---------------------------------------------------------------------------
# Support graph and constraint analysis.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportEdge:
    src: str
    dst: str
    label: str


@dataclass(frozen=True)
class SupportGraph:
    nodes: frozenset[str]
    grounded: frozenset[str]
    edges: tuple[SupportEdge, ...]

    def movable(self) -> frozenset[str]:
        return self.nodes - self.grounded


def extract_support_graph(goal: Node) -> SupportGraph:
    """Support relations implied by On/OnTable/OnPatch/TwoStacks leaves.

    Assets that appear only in row, circle, or reading leaves carry no
    support obligations and do not enter the graph.
    """
    nodes: set[str] = set()
    grounded: set[str] = set(GROUNDED_NODES)
    edges: list[SupportEdge] = []
    for _, leaf in iter_leaves(goal):
        support = getattr(leaf, "support_edges", None)
        if support is None:
            continue
        label = describe(leaf)
        for src, dst in support():
            nodes.update((src, dst))
            edges.append(SupportEdge(src, dst, label))
        for gid in getattr(leaf, "grounded_ids", lambda: ())():
            grounded.add(gid)
    nodes.update(GROUNDED_NODES)
    return SupportGraph(nodes=frozenset(nodes), grounded=frozenset(grounded), edges=tuple(edges))


@dataclass(frozen=True)
class CspReport:
    feasible: bool
    cycles: tuple[tuple[str, ...], ...]
    unsupported: tuple[str, ...]
    redundant: tuple[str, ...]


def _strongly_connected(nodes: set[str], adj: dict[str, list[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative to dodge recursion limits."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    result: list[list[str]] = []
    counter = 0
    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(adj.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(adj.get(nxt, ()))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    top = stack.pop()
                    on_stack.discard(top)
                    component.append(top)
                    if top == node:
                        break
                result.append(component)
    return result


def _reachable(starts: set[str], adj: dict[str, list[str]]) -> set[str]:
    seen = set(starts)
    frontier = list(starts)
    while frontier:
        node = frontier.pop()
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def analyze_csp(graph: SupportGraph) -> CspReport:
    """Cycle, completeness, and redundancy analysis of a support graph."""
    adj: dict[str, list[str]] = {}
    for edge in graph.edges:
        adj.setdefault(edge.src, []).append(edge.dst)

    movable = graph.movable()
    cycles: list[tuple[str, ...]] = []
    self_loops = {e.src for e in graph.edges if e.src == e.dst}
    for component in _strongly_connected(set(graph.nodes), adj):
        if len(component) > 1 or component[0] in self_loops:
            cycles.append(tuple(sorted(component)))
    cycles.sort()

    supported = _reachable(set(graph.grounded), adj)
    unsupported = tuple(sorted(movable - supported))

    redundant: list[str] = []
    seen_pairs: dict[tuple[str, str, str], int] = {}
    for edge in graph.edges:
        key = (edge.src, edge.dst, edge.label)
        seen_pairs[key] = seen_pairs.get(key, 0) + 1
    for key, count in sorted(seen_pairs.items()):
        if count > 1:
            redundant.append(key[2])
    unique_pairs = {(e.src, e.dst) for e in graph.edges}
    for src, dst in sorted(unique_pairs):
        pruned: dict[str, list[str]] = {}
        for edge in graph.edges:
            if (edge.src, edge.dst) == (src, dst):
                continue
            pruned.setdefault(edge.src, []).append(edge.dst)
        if dst in _reachable({src}, pruned):
            for edge in graph.edges:
                if (edge.src, edge.dst) == (src, dst) and edge.label not in redundant:
                    redundant.append(edge.label)

    feasible = not cycles and not unsupported
    return CspReport(
        feasible=feasible,
        cycles=tuple(cycles),
        unsupported=unsupported,
        redundant=tuple(dict.fromkeys(redundant)),
    )
