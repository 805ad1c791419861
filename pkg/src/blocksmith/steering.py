"""Mid-session task edits: intent categories, version references, rewrites.

Edits are classified into five categories with fixed preservation
contracts, applied against a resolved reference version (latest unless the
text reaches back), and produce a new schema/spec/version snapshot. The
edit grammar covers additive tower growth, color surgery, structural
flips, kind swaps, layout pivots, and fresh restarts; a bare revert is an
extension with an empty edit and reproduces the referenced spec verbatim.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import AssetKind, TaskSpec, content_hash
from .frontend import (
    COLOR_WORDS,
    AssetRequest,
    TaskSchema,
    UnparsableInstruction,
    elaborate,
    mint_assets,
    parse_instruction,
    _normalize,
)
from .predicates import (
    AlignedRow,
    AllOf,
    AnyOf,
    Beside,
    Behind,
    CircleArrangement,
    EquationRow,
    FaceReads,
    InFrontOf,
    LeftOf,
    Node,
    On,
    OnPatch,
    OnTable,
    OrderedRow,
    RightOf,
    Stages,
    TwoStacks,
    WordRow,
    iter_leaves,
    rebind_ids,
)

CATEGORIES = ("Tweak", "Extend", "Modify", "Pivot", "Fresh")

# What each category promises to carry over from the reference version.
PRESERVATION: dict[str, dict[str, bool]] = {
    "Tweak": {"assets": False, "positions": True, "goals": True},
    "Extend": {"assets": True, "positions": True, "goals": True},
    "Modify": {"assets": False, "positions": False, "goals": True},
    "Pivot": {"assets": True, "positions": False, "goals": False},
    "Fresh": {"assets": False, "positions": False, "goals": False},
}

_COLOR_ALT = "|".join(COLOR_WORDS)

_REFERENCE_RE = re.compile(
    r"^(?:ok,? |okay,? |actually,? )?(?:go back to|revert to|return to) (.+)$"
)
_VERSION_RE = re.compile(r"\bversion (\d+)\b")

_EDIT_SPLITS = (" and instead ", " and then ", " and ", ", then ", "; ")

_LETTER_FOR_COLOR = {c: c[0].upper() for c in COLOR_WORDS}


@dataclass(frozen=True)
class TaskSnapshot:
    version_id: int
    description: str
    assets_used: tuple[str, ...]
    goal_summary: str
    code_hash: str

    def to_obj(self) -> dict:
        return {
            "assets_used": list(self.assets_used),
            "code_hash": self.code_hash,
            "description": self.description,
            "goal_summary": self.goal_summary,
            "version_id": self.version_id,
        }


@dataclass(frozen=True)
class SteeringResult:
    category: str
    # None for Fresh: a restart does not build on any version
    reference_version: Optional[int]
    schema: TaskSchema
    spec: TaskSpec
    snapshot: TaskSnapshot

    @property
    def preserved(self) -> Mapping[str, bool]:
        return PRESERVATION[self.category]


# ---------------------------------------------------------------------------
# Summaries used by snapshots and reference scoring.
# ---------------------------------------------------------------------------


def _nick(decl) -> str:
    if decl.kind is AssetKind.GOAL_PATCH:
        return f"{decl.color or 'goal'} patch"
    if decl.kind is AssetKind.SEMANTIC_CUBE:
        label = decl.label or "?"
        noun = "letter" if label.isalpha() else "number"
        return f"{noun} {label} cube"
    return f"{decl.color} cube"


def summarize_goal(spec: TaskSpec) -> str:
    nicks = {a.id: _nick(a).removesuffix(" cube") for a in spec.assets}

    def name(aid: str) -> str:
        return nicks.get(aid, aid)

    clauses: list[str] = []
    for _, leaf in iter_leaves(spec.goal):
        if isinstance(leaf, On):
            clauses.append(f"{name(leaf.a)} on {name(leaf.b)}")
        elif isinstance(leaf, OnTable):
            clauses.append(f"{name(leaf.a)} on table")
        elif isinstance(leaf, OnPatch):
            clauses.append(f"{name(leaf.a)} on {name(leaf.patch)}")
        elif isinstance(leaf, OrderedRow):
            glyphs = ", ".join(name(i) for i in leaf.assets)
            clauses.append(f"{leaf.pattern} row of {glyphs}")
        elif isinstance(leaf, WordRow):
            clauses.append(f"spells {leaf.text}")
        elif isinstance(leaf, EquationRow):
            clauses.append(f"equation {leaf.text}")
        elif isinstance(leaf, CircleArrangement):
            clauses.append(f"circle of {len(leaf.assets)}")
        elif isinstance(leaf, AlignedRow):
            clauses.append("row of " + ", ".join(name(i) for i in leaf.assets))
        elif isinstance(leaf, FaceReads):
            clauses.append(f"{leaf.glyph} reads on {leaf.face.value}")
        elif isinstance(leaf, TwoStacks):
            clauses.append("two stacks on patches")
        elif isinstance(leaf, (LeftOf, RightOf, InFrontOf, Behind, Beside)):
            clauses.append(f"{name(leaf.a)} {leaf.kind.replace('_', ' ')} {name(leaf.b)}")
    # Keep first mention order, drop duplicates.
    return "; ".join(dict.fromkeys(clauses))


def make_snapshot(version_id: int, description: str, spec: TaskSpec) -> TaskSnapshot:
    return TaskSnapshot(
        version_id=version_id,
        description=description,
        assets_used=tuple(_nick(a) for a in spec.assets),
        goal_summary=summarize_goal(spec),
        code_hash=content_hash(spec),
    )


# ---------------------------------------------------------------------------
# Reference resolution.
# ---------------------------------------------------------------------------


def split_reference(text: str) -> tuple[Optional[str], str]:
    """(reference clause, edit text); reference None when the edit is plain."""
    normalized = _normalize(text)
    m = _REFERENCE_RE.match(normalized)
    if m is None:
        return None, normalized
    rest = m.group(1)
    for splitter in _EDIT_SPLITS:
        if splitter in rest:
            clause, edit = rest.split(splitter, 1)
            return clause.strip(), edit.strip()
    return rest.strip(), ""


def resolve_reference(clause: str, snapshots: list[TaskSnapshot]) -> int:
    """Pick the version a reference clause points at.

    An explicit version number wins. Otherwise snapshots are scored by
    keyword overlap with the clause minus a penalty for each snapshot
    color the clause never mentioned; ties go to the newest version.
    """
    if not snapshots:
        raise UnparsableInstruction("no versions to refer back to")
    m = _VERSION_RE.search(clause)
    if m is not None:
        version = int(m.group(1))
        if not 0 <= version < len(snapshots):
            raise UnparsableInstruction(f"version {version} does not exist")
        return version

    words = set(re.findall(r"[a-z0-9]+", clause))
    best_version = len(snapshots) - 1
    best_score = float("-inf")
    for snap in snapshots:
        colors = {
            token.split(" ")[0]
            for token in snap.assets_used
            if token.split(" ")[0] in COLOR_WORDS
        }
        labels = {
            token.split(" ")[1].lower()
            for token in snap.assets_used
            if token.startswith(("letter ", "number "))
        }
        terms = colors | labels
        overlap = len(words & terms)
        penalty = len(colors - words)
        score = overlap - penalty
        if score >= best_score:
            best_score = score
            best_version = snap.version_id
    return best_version


# ---------------------------------------------------------------------------
# Schema surgery helpers.
# ---------------------------------------------------------------------------


def _unit_requests(schema: TaskSchema) -> tuple[AssetRequest, ...]:
    """Expand counted requests to single units; mint order is unchanged."""
    out: list[AssetRequest] = []
    for req in schema.asset_requests:
        for _ in range(req.count):
            out.append(AssetRequest(kind=req.kind, color=req.color, label=req.label, count=1))
    return tuple(out)


def _positional_rebind(
    old_requests: tuple[AssetRequest, ...],
    new_requests: tuple[AssetRequest, ...],
    goal: Node,
) -> Node:
    """Rebind goal ids after a positional request rewrite of equal length."""
    old_ids = [d.id for d in mint_assets(old_requests)]
    new_ids = [d.id for d in mint_assets(new_requests)]
    mapping = {o: n for o, n in zip(old_ids, new_ids) if o != n}
    return rebind_ids(goal, mapping) if mapping else goal


def _stack_chain(schema: TaskSchema) -> list[str]:
    """Cube ids of the (single) tower, bottom to top."""
    above: dict[str, str] = {}
    supported: set[str] = set()
    bases: list[str] = []
    for _, leaf in iter_leaves(schema.goal_blueprint):
        if isinstance(leaf, On):
            above[leaf.b] = leaf.a
            supported.add(leaf.a)
        elif isinstance(leaf, (OnTable, OnPatch)):
            bases.append(leaf.a)
    roots = [b for b in bases if b not in supported]
    if not roots:
        roots = [b for b in above if b not in supported]
    if not roots:
        raise UnparsableInstruction("the current goal has no tower to edit")
    chain = [roots[0]]
    while chain[-1] in above:
        chain.append(above[chain[-1]])
    return chain


def _id_color(schema: TaskSchema, aid: str) -> Optional[str]:
    for decl in mint_assets(schema.asset_requests):
        if decl.id == aid:
            return decl.color
    return None


def _request_index_for_id(requests: tuple[AssetRequest, ...], aid: str) -> int:
    for i, decl in enumerate(mint_assets(requests)):
        if decl.id == aid:
            return i
    raise UnparsableInstruction(f"no asset {aid!r} in the current task")


def _with_new_top(schema: TaskSchema, request: AssetRequest, anchor: str) -> TaskSchema:
    requests = _unit_requests(schema) + (request,)
    new_id = mint_assets(requests)[-1].id
    blueprint = schema.goal_blueprint
    if isinstance(blueprint, AllOf):
        children = blueprint.children + (On(new_id, anchor),)
        goal: Node = AllOf(children)
    else:
        goal = AllOf((blueprint, On(new_id, anchor)))
    return TaskSchema(
        task_name=schema.task_name,
        asset_requests=requests,
        goal_blueprint=goal,
        init_hint=schema.init_hint,
        ordering_pattern=schema.ordering_pattern,
    )


def _rewrite_requests(
    schema: TaskSchema, new_requests: tuple[AssetRequest, ...]
) -> TaskSchema:
    goal = _positional_rebind(_unit_requests(schema), new_requests, schema.goal_blueprint)
    return TaskSchema(
        task_name=schema.task_name,
        asset_requests=new_requests,
        goal_blueprint=goal,
        init_hint=schema.init_hint,
        ordering_pattern=schema.ordering_pattern,
    )


# ---------------------------------------------------------------------------
# Edit handlers. Each returns (category, new schema).
# ---------------------------------------------------------------------------


def _edit_add_color(schema: TaskSchema, color: str, anchor_color: Optional[str]) -> tuple[str, TaskSchema]:
    chain = _stack_chain(schema)
    anchor = chain[-1]
    if anchor_color is not None:
        matches = [aid for aid in chain if _id_color(schema, aid) == anchor_color]
        if not matches:
            raise UnparsableInstruction(f"no {anchor_color} cube in the tower")
        anchor = matches[-1]
    request = AssetRequest(kind=AssetKind.COLORED_CUBE, color=color)
    return "Extend", _with_new_top(schema, request, anchor)


def _edit_add_letter(schema: TaskSchema, glyph: str) -> tuple[str, TaskSchema]:
    chain = _stack_chain(schema)
    request = AssetRequest(kind=AssetKind.SEMANTIC_CUBE, label=glyph)
    return "Extend", _with_new_top(schema, request, chain[-1])


def _edit_replace_color(schema: TaskSchema, old: str, new: str) -> tuple[str, TaskSchema]:
    units = _unit_requests(schema)
    index = None
    for i, req in enumerate(units):
        if req.kind is AssetKind.COLORED_CUBE and req.color == old:
            index = i
            break
    if index is None:
        raise UnparsableInstruction(f"no {old} cube to replace")
    new_units = list(units)
    new_units[index] = AssetRequest(kind=AssetKind.COLORED_CUBE, color=new)
    return "Tweak", _rewrite_requests(schema, tuple(new_units))


def _edit_change_base(schema: TaskSchema, color: str) -> tuple[str, TaskSchema]:
    base = _stack_chain(schema)[0]
    units = _unit_requests(schema)
    index = _request_index_for_id(units, base)
    if units[index].kind is not AssetKind.COLORED_CUBE:
        raise UnparsableInstruction("the base cube has no color to change")
    new_units = list(units)
    new_units[index] = AssetRequest(kind=AssetKind.COLORED_CUBE, color=color)
    return "Tweak", _rewrite_requests(schema, tuple(new_units))


def _edit_flip_colors(schema: TaskSchema) -> tuple[str, TaskSchema]:
    chain = _stack_chain(schema)
    colored = [aid for aid in chain if _id_color(schema, aid) is not None]
    if len(colored) < 2:
        raise UnparsableInstruction("nothing to flip: the tower has one color")
    mapping = {aid: colored[len(colored) - 1 - i] for i, aid in enumerate(colored)}
    goal = rebind_ids(schema.goal_blueprint, mapping)
    return "Modify", TaskSchema(
        task_name=schema.task_name,
        asset_requests=schema.asset_requests,
        goal_blueprint=goal,
        init_hint=schema.init_hint,
        ordering_pattern=schema.ordering_pattern,
    )


def _edit_colors_to_letters(schema: TaskSchema) -> tuple[str, TaskSchema]:
    units = _unit_requests(schema)
    new_units = []
    changed = False
    for req in units:
        if req.kind is AssetKind.COLORED_CUBE and req.color:
            changed = True
            new_units.append(
                AssetRequest(kind=AssetKind.SEMANTIC_CUBE, label=_LETTER_FOR_COLOR[req.color])
            )
        else:
            new_units.append(req)
    if not changed:
        raise UnparsableInstruction("no colored cubes to swap for letter cubes")
    return "Modify", _rewrite_requests(schema, tuple(new_units))


def _edit_swap_colors(schema: TaskSchema, c1: str, c2: str) -> tuple[str, TaskSchema]:
    ids = {d.color: d.id for d in mint_assets(schema.asset_requests) if d.color}
    if c1 not in ids or c2 not in ids:
        raise UnparsableInstruction(f"need both a {c1} and a {c2} cube to swap")
    mapping = {ids[c1]: ids[c2], ids[c2]: ids[c1]}
    goal = rebind_ids(schema.goal_blueprint, mapping)
    return "Tweak", TaskSchema(
        task_name=schema.task_name,
        asset_requests=schema.asset_requests,
        goal_blueprint=goal,
        init_hint=schema.init_hint,
        ordering_pattern=schema.ordering_pattern,
    )


def _edit_remove(schema: TaskSchema, color: Optional[str], glyph: Optional[str]) -> tuple[str, TaskSchema]:
    units = _unit_requests(schema)
    index = None
    for i in range(len(units) - 1, -1, -1):
        req = units[i]
        if color is not None and req.kind is AssetKind.COLORED_CUBE and req.color == color:
            index = i
            break
        if glyph is not None and req.kind is AssetKind.SEMANTIC_CUBE and req.label == glyph:
            index = i
            break
    if index is None:
        raise UnparsableInstruction("no matching cube to remove")
    removed_id = mint_assets(units)[index].id

    # Splice the tower around the removed cube, then drop its leaves. A cube
    # that stood on the removed one inherits its support (cube, patch, or
    # the table) so the chain stays grounded.
    on_below: dict[str, str] = {}
    patch_of: dict[str, str] = {}
    for _, leaf in iter_leaves(schema.goal_blueprint):
        if isinstance(leaf, On):
            on_below[leaf.a] = leaf.b
        elif isinstance(leaf, OnPatch):
            patch_of[leaf.a] = leaf.patch

    def prune(node: Node) -> Optional[Node]:
        if isinstance(node, (AllOf, AnyOf)):
            kept = tuple(c for c in (prune(x) for x in node.children) if c is not None)
            return type(node)(kept) if kept else None
        if isinstance(node, Stages):
            kept = tuple(s for s in (prune(x) for x in node.stages) if s is not None)
            return Stages(kept) if kept else None
        if removed_id in node.referenced_ids():
            if isinstance(node, On) and node.b == removed_id:
                if removed_id in on_below:
                    return On(node.a, on_below[removed_id], node.tol_m)
                if removed_id in patch_of:
                    return OnPatch(node.a, patch_of[removed_id])
                return OnTable(node.a)
            return None
        return node

    goal = prune(schema.goal_blueprint)
    if goal is None:
        raise UnparsableInstruction("removing that cube would empty the goal")
    remaining = tuple(req for i, req in enumerate(units) if i != index)
    # Drop the unit, then remap surviving ids onto the shrunken request list.
    old_ids = [d.id for d in mint_assets(units)]
    new_ids = [d.id for d in mint_assets(remaining)]
    survivors = [i for i in range(len(units)) if i != index]
    mapping = {old_ids[i]: new_ids[j] for j, i in enumerate(survivors) if old_ids[i] != new_ids[j]}
    return "Modify", TaskSchema(
        task_name=schema.task_name,
        asset_requests=remaining,
        goal_blueprint=rebind_ids(goal, mapping) if mapping else goal,
        init_hint=schema.init_hint,
        ordering_pattern=schema.ordering_pattern,
    )


def _edit_pivot_circle(schema: TaskSchema) -> tuple[str, TaskSchema]:
    decls = [d for d in mint_assets(schema.asset_requests) if d.is_cube]
    if len(decls) < 3:
        raise UnparsableInstruction("a circle needs at least three cubes")
    ids = tuple(d.id for d in decls)
    leaves: list[Node] = [CircleArrangement(ids)]
    leaves.extend(OnTable(i) for i in ids)
    return "Pivot", TaskSchema(
        task_name=schema.task_name,
        asset_requests=schema.asset_requests,
        goal_blueprint=AllOf(tuple(leaves)),
        init_hint=schema.init_hint,
        ordering_pattern="none",
    )


def _edit_pivot_row(schema: TaskSchema) -> tuple[str, TaskSchema]:
    decls = [d for d in mint_assets(schema.asset_requests) if d.is_cube]
    if len(decls) < 2:
        raise UnparsableInstruction("a row needs at least two cubes")
    ids = tuple(d.id for d in decls)
    leaves: list[Node] = [AlignedRow(ids)]
    leaves.extend(OnTable(i) for i in ids)
    return "Pivot", TaskSchema(
        task_name=schema.task_name,
        asset_requests=schema.asset_requests,
        goal_blueprint=AllOf(tuple(leaves)),
        init_hint=schema.init_hint,
        ordering_pattern="none",
    )


_EDIT_TEMPLATES: list[tuple[re.Pattern, object]] = [
    (
        re.compile(
            rf"^add (?:a |an )?({_COLOR_ALT}) (?:cube|block)(?: on top"
            rf"(?: of (?:that|it|the tower|(?:the |a )?({_COLOR_ALT})(?: cube| block)?))?)?$"
        ),
        lambda schema, m: _edit_add_color(schema, m.group(1), m.group(2)),
    ),
    (
        re.compile(
            r"^add (?:a )?letter ([a-z0-9]) (?:semantic )?(?:cube|block) on top(?: of (?:the tower|that|it))?$"
        ),
        lambda schema, m: _edit_add_letter(schema, m.group(1).upper()),
    ),
    (
        re.compile(
            rf"^replace the ({_COLOR_ALT}) (?:cube|block) with (?:a |an )?({_COLOR_ALT}) (?:cube|block)$"
        ),
        lambda schema, m: _edit_replace_color(schema, m.group(1), m.group(2)),
    ),
    (
        re.compile(rf"^change the (?:base|bottom) (?:cube|block)(?: color)? to ({_COLOR_ALT})$"),
        lambda schema, m: _edit_change_base(schema, m.group(1)),
    ),
    (
        re.compile(
            r"^flip the color order of the tower(?: but keep the letter [a-z0-9] on top)?$"
        ),
        lambda schema, m: _edit_flip_colors(schema),
    ),
    (
        re.compile(
            r"^(?:now )?(?:from this simpler version,? )?(?:add|use) letter cubes instead of (?:the )?colored ones$"
        ),
        lambda schema, m: _edit_colors_to_letters(schema),
    ),
    (
        re.compile(rf"^swap the ({_COLOR_ALT}) and (?:the )?({_COLOR_ALT}) (?:cubes|blocks)$"),
        lambda schema, m: _edit_swap_colors(schema, m.group(1), m.group(2)),
    ),
    (
        re.compile(rf"^remove the ({_COLOR_ALT}) (?:cube|block)$"),
        lambda schema, m: _edit_remove(schema, m.group(1), None),
    ),
    (
        re.compile(r"^remove the letter ([a-z0-9]) (?:cube|block)$"),
        lambda schema, m: _edit_remove(schema, None, m.group(1).upper()),
    ),
    (
        re.compile(
            r"^(?:arrange|put|place|rearrange) (?:them|the cubes|the blocks) "
            r"(?:in|into) a (?:circle|ring)(?: instead)?$"
        ),
        lambda schema, m: _edit_pivot_circle(schema),
    ),
    (
        re.compile(
            r"^(?:arrange|put|place|rearrange|line) (?:them|the cubes|the blocks) "
            r"(?:up )?(?:in|into) a (?:line|row)(?: instead)?$"
        ),
        lambda schema, m: _edit_pivot_row(schema),
    ),
]

_FRESH_RE = re.compile(
    r"^(?:start over|start from scratch|forget (?:that|everything))(?:[:,] | and )(.+)$"
)


def apply_edit(schema: TaskSchema, edit_text: str) -> tuple[str, TaskSchema]:
    """Match one edit sentence and rewrite the schema; ('Extend', same) on empty."""
    if not edit_text:
        return "Extend", schema
    fresh = _FRESH_RE.match(edit_text)
    if fresh is not None:
        return "Fresh", parse_instruction(fresh.group(1))
    for pattern, handler in _EDIT_TEMPLATES:
        m = pattern.match(edit_text)
        if m is not None:
            return handler(schema, m)
    # Whole-sentence task descriptions start a fresh task too.
    try:
        return "Fresh", parse_instruction(edit_text)
    except UnparsableInstruction:
        raise UnparsableInstruction(f"no steering template matches: {edit_text!r}")


class SteeringEngine:
    """Holds one session's version history and applies edits to it."""

    def __init__(self) -> None:
        self._versions: list[SteeringResult] = []

    @property
    def versions(self) -> list[TaskSnapshot]:
        return [v.snapshot for v in self._versions]

    def version(self, version_id: int) -> SteeringResult:
        return self._versions[version_id]

    def __len__(self) -> int:
        return len(self._versions)

    def begin(self, instruction: str) -> SteeringResult:
        if self._versions:
            raise UnparsableInstruction("session already has a task; steer it instead")
        schema = parse_instruction(instruction)
        return self.adopt(instruction, schema, elaborate(schema))

    def adopt(self, instruction: str, schema: TaskSchema, spec: TaskSpec) -> SteeringResult:
        """Install an externally compiled (possibly repaired) first version."""
        if self._versions:
            raise UnparsableInstruction("session already has a task; steer it instead")
        result = SteeringResult(
            category="Fresh",
            reference_version=None,
            schema=schema,
            spec=spec,
            snapshot=make_snapshot(0, instruction.strip(), spec),
        )
        self._versions.append(result)
        return result

    def rollback(self) -> None:
        """Drop the newest version (used when validation rejects an edit)."""
        if self._versions:
            self._versions.pop()

    def steer(self, text: str) -> SteeringResult:
        if not self._versions:
            raise UnparsableInstruction("no task yet; give an instruction first")
        clause, edit_text = split_reference(text)
        if clause is None:
            reference = len(self._versions) - 1
        else:
            reference = resolve_reference(clause, self.versions)
        ref = self._versions[reference]

        category, schema = apply_edit(ref.schema, edit_text)
        if category == "Fresh":
            spec = elaborate(schema)
        elif schema is ref.schema:
            # Bare revert: reproduce the referenced version verbatim.
            spec = ref.spec
        else:
            spec = elaborate(schema, instruction=text.strip(), paraphrases=())
        version_id = len(self._versions)
        result = SteeringResult(
            category=category,
            reference_version=None if category == "Fresh" else reference,
            schema=schema,
            spec=spec,
            snapshot=make_snapshot(version_id, text.strip(), spec),
        )
        self._versions.append(result)
        return result
