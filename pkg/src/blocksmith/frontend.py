"""Controlled-language frontend.

Instructions are matched against a closed template grammar (documented in
``docs/grammar.md``) and compiled to a :class:`TaskSchema`: asset requests,
a goal blueprint over deterministically minted asset ids, an init hint,
and an ordering pattern. ``check_feasibility`` screens schemas against the
physical envelope before ``elaborate`` assembles the executable spec.

The parser sits behind the :class:`ProposalBackend` protocol so a hosted
model can replace it without touching anything downstream; the bundled
backend is the deterministic grammar itself.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .core import (
    AssetDecl,
    AssetKind,
    DEFAULT_CUBE_EDGE_M,
    DEFAULT_PATCH_HALF_EXTENT_M,
    DEFAULT_CONSTANTS,
    InitDistribution,
    InvalidSpec,
    JsonObj,
    Pose,
    Region,
    TaskSpec,
    default_region,
)
from .geometry import Face
from .predicates import (
    AlignedRow,
    AllOf,
    CircleArrangement,
    EquationRow,
    FaceReads,
    Node,
    On,
    OnPatch,
    OnTable,
    OrderedRow,
    Stages,
    StackSpec,
    TwoStacks,
    WordRow,
    equation_is_correct,
    equation_glyphs,
    node_from_obj,
    node_to_obj,
    normalize_equation,
)


class UnparsableInstruction(ValueError):
    """No grammar template matched (or the backend refused)."""


class AmbiguousReference(ValueError):
    """A singular reference matches several candidate assets.

    The bundled grammar mints assets per instruction, so it never collides;
    backends that resolve references against an existing scene raise this
    instead of guessing.
    """


class ElaborationConflict(InvalidSpec):
    """A schema's goal references assets its requests never provide."""


COLOR_WORDS = (
    "red", "blue", "green", "yellow", "purple", "orange",
    "pink", "brown", "black", "white", "gray", "cyan",
)
DEFAULT_COLOR_CYCLE = ("red", "blue", "green", "yellow", "purple", "orange")

NUMBER_WORDS = {
    "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

INIT_HINTS = ("scattered", "partially_stacked", "fixed")

# Center-to-center spacing used for coplanar layouts and footprint checks.
LAYOUT_SPACING_FACTOR = 1.5

CAPABILITY_SUMMARY = (
    "tabletop of colored cubes, glyph cubes labeled A-Z or 0-9, and flat goal "
    "patches; supports stacking, rows, alphabetical/numerical ordering, words, "
    "single-digit equations, circles, patch targets, and face orientation goals"
)

REPAIR_KINDS = (
    "Reduce_Labels_Preserve_Geometry",
    "Switch_Ordering_Pattern",
    "Switch_To_Spatial_Only",
)


@dataclass(frozen=True)
class AssetRequest:
    kind: AssetKind
    color: Optional[str] = None
    label: Optional[str] = None
    count: int = 1

    def to_obj(self) -> JsonObj:
        return {
            "color": self.color,
            "count": self.count,
            "kind": self.kind.value,
            "label": self.label,
        }


@dataclass(frozen=True)
class TaskSchema:
    """Intermediate between language and an executable spec."""

    task_name: str
    asset_requests: tuple[AssetRequest, ...]
    goal_blueprint: Node
    init_hint: str = "scattered"
    ordering_pattern: str = "none"

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_requests", tuple(self.asset_requests))
        if self.init_hint not in INIT_HINTS:
            raise InvalidSpec(f"unknown init hint {self.init_hint!r}")

    def to_obj(self) -> JsonObj:
        return {
            "asset_requests": [r.to_obj() for r in self.asset_requests],
            "goal_blueprint": node_to_obj(self.goal_blueprint),
            "init_hint": self.init_hint,
            "ordering_pattern": self.ordering_pattern,
            "task_name": self.task_name,
        }


@dataclass(frozen=True)
class ProposalRequest:
    instruction: str
    capability_summary: str = CAPABILITY_SUMMARY


@dataclass(frozen=True)
class ProposalResponse:
    schema: Optional[TaskSchema] = None
    refusal: Optional[str] = None


class ProposalBackend(Protocol):
    """Anything that can turn an instruction into a schema (or refuse)."""

    def propose(self, request: ProposalRequest) -> ProposalResponse: ...


# ---------------------------------------------------------------------------
# Deterministic asset minting.
# ---------------------------------------------------------------------------


def mint_assets(requests: tuple[AssetRequest, ...]) -> tuple[AssetDecl, ...]:
    """Expand requests into declarations with deterministic ids.

    Ids follow kind-color-label-index compressed to the informative parts:
    ``cube-red-0`` for colored cubes, ``cube-a-0`` for glyph cubes, and
    ``patch-green-0`` (or ``patch-goal-0``) for patches. The index counts
    per id stem in request order.
    """
    counters: dict[str, int] = {}
    out: list[AssetDecl] = []
    for req in requests:
        if req.count < 1:
            raise ElaborationConflict(f"request with count {req.count}: {req!r}")
        for _ in range(req.count):
            if req.kind is AssetKind.GOAL_PATCH:
                stem = f"patch-{req.color or 'goal'}"
                edge = DEFAULT_PATCH_HALF_EXTENT_M
            elif req.kind is AssetKind.SEMANTIC_CUBE:
                if req.label is None:
                    raise ElaborationConflict("glyph cube request without a label")
                stem = f"cube-{req.label.lower()}"
                edge = DEFAULT_CUBE_EDGE_M
            else:
                if req.color is None:
                    raise ElaborationConflict("colored cube request without a color")
                stem = f"cube-{req.color}"
                edge = DEFAULT_CUBE_EDGE_M
            index = counters.get(stem, 0)
            counters[stem] = index + 1
            out.append(
                AssetDecl(
                    id=f"{stem}-{index}",
                    kind=req.kind,
                    color=req.color,
                    label=req.label,
                    edge_m=edge,
                )
            )
    return tuple(out)


def _cube_id(color: str, index: int = 0) -> str:
    return f"cube-{color}-{index}"


def _glyph_id(glyph: str, index: int = 0) -> str:
    return f"cube-{glyph.lower()}-{index}"


def _patch_id(color: Optional[str], index: int = 0) -> str:
    return f"patch-{color or 'goal'}-{index}"


# ---------------------------------------------------------------------------
# Grammar templates.
# ---------------------------------------------------------------------------

_COLOR_ALT = "|".join(COLOR_WORDS)
_NUM_ALT = "|".join(NUMBER_WORDS) + r"|\d+"


def _normalize(text: str) -> str:
    folded = text.strip().lower()
    folded = folded.replace("‘", "").replace("’", "")
    folded = folded.replace('"', "").replace("'", "")
    folded = folded.replace("−", "-").replace("×", "x")
    folded = re.sub(r"[.!?]+$", "", folded)
    folded = re.sub(r"\s+", " ", folded)
    return folded


def _to_count(token: str) -> int:
    if token.isdigit():
        return int(token)
    return NUMBER_WORDS[token]


def _color_list(fragment: str) -> list[str]:
    tokens = re.split(r",| and | then ", fragment)
    colors = [t.strip() for t in tokens if t.strip()]
    for c in colors:
        if c not in COLOR_WORDS:
            raise UnparsableInstruction(f"unknown color {c!r}")
    return colors


def _glyph_list(fragment: str) -> list[str]:
    tokens = re.split(r",| and ", fragment)
    glyphs = [t.strip().upper() for t in tokens if t.strip()]
    for g in glyphs:
        if not re.match(r"^[A-Z0-9]$", g):
            raise UnparsableInstruction(f"not a single glyph: {g!r}")
    return glyphs


def _colored_requests(colors: list[str]) -> tuple[AssetRequest, ...]:
    return tuple(AssetRequest(kind=AssetKind.COLORED_CUBE, color=c) for c in colors)


def _glyph_requests(glyphs: list[str]) -> tuple[AssetRequest, ...]:
    """One request per distinct glyph, counting repeats, first-seen order."""
    order: list[str] = []
    counts: dict[str, int] = {}
    for g in glyphs:
        if g not in counts:
            order.append(g)
        counts[g] = counts.get(g, 0) + 1
    return tuple(
        AssetRequest(kind=AssetKind.SEMANTIC_CUBE, label=g, count=counts[g]) for g in order
    )


def _stack_blueprint(colors: list[str], patch: Optional[str] = None) -> Node:
    ids = [_cube_id(c, i) for i, c in enumerate_with_dupes(colors)]
    leaves: list[Node] = []
    if patch is not None:
        leaves.append(OnPatch(ids[0], patch))
    else:
        leaves.append(OnTable(ids[0]))
    for below, above in zip(ids, ids[1:]):
        leaves.append(On(above, below))
    return AllOf(tuple(leaves))


def enumerate_with_dupes(colors: list[str]) -> list[tuple[int, str]]:
    """Pair each color with its occurrence index among equal colors."""
    seen: dict[str, int] = {}
    out = []
    for c in colors:
        i = seen.get(c, 0)
        seen[c] = i + 1
        out.append((i, c))
    return out


def _row_blueprint_colored(colors: list[str]) -> Node:
    ids = [_cube_id(c, i) for i, c in enumerate_with_dupes(colors)]
    leaves: list[Node] = [AlignedRow(tuple(ids))]
    leaves.extend(OnTable(i) for i in ids)
    return AllOf(tuple(leaves))


def _ordered_blueprint(glyphs: list[str], pattern: str) -> Node:
    ids = _glyph_ids_in_order(glyphs)
    leaves: list[Node] = [OrderedRow(tuple(ids), pattern=pattern)]
    leaves.extend(OnTable(i) for i in ids)
    return AllOf(tuple(leaves))


def _glyph_ids_in_order(glyphs: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    ids = []
    for g in glyphs:
        i = seen.get(g, 0)
        seen[g] = i + 1
        ids.append(_glyph_id(g, i))
    return ids


def _word_blueprint(word: str) -> Node:
    ids = _glyph_ids_in_order(list(word))
    leaves: list[Node] = [WordRow(word)]
    leaves.extend(OnTable(i) for i in ids)
    return AllOf(tuple(leaves))


def _equation_blueprint(text: str) -> Node:
    glyphs = equation_glyphs(text)
    ids = _glyph_ids_in_order(list(glyphs))
    leaves: list[Node] = [EquationRow(text)]
    leaves.extend(OnTable(i) for i in ids)
    return AllOf(tuple(leaves))


def _circle_blueprint(colors: list[str], radius_m: float = 0.08) -> Node:
    ids = [_cube_id(c, i) for i, c in enumerate_with_dupes(colors)]
    leaves: list[Node] = [CircleArrangement(tuple(ids), radius_m=radius_m)]
    leaves.extend(OnTable(i) for i in ids)
    return AllOf(tuple(leaves))


_FACE_WORDS = {
    "the camera": Face.FRONT,
    "front": Face.FRONT,
    "forward": Face.FRONT,
    "up": Face.TOP,
    "upward": Face.TOP,
    "away": Face.BACK,
    "backward": Face.BACK,
    "left": Face.LEFT,
    "right": Face.RIGHT,
}


def _default_colors(n: int) -> list[str]:
    cycle = list(DEFAULT_COLOR_CYCLE)
    return [cycle[i % len(cycle)] for i in range(n)]


# Builders return (schema, canonical instruction filler dict).


def _build_stack(colors: list[str]) -> TaskSchema:
    return TaskSchema(
        task_name="stack_" + "_".join(colors),
        asset_requests=_colored_requests(colors),
        goal_blueprint=_stack_blueprint(colors),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_stack_on_patch(colors: list[str]) -> TaskSchema:
    requests = _colored_requests(colors) + (AssetRequest(kind=AssetKind.GOAL_PATCH),)
    return TaskSchema(
        task_name="patch_stack_" + "_".join(colors),
        asset_requests=requests,
        goal_blueprint=_stack_blueprint(colors, patch=_patch_id(None)),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_align(colors: list[str]) -> TaskSchema:
    return TaskSchema(
        task_name="row_" + "_".join(colors),
        asset_requests=_colored_requests(colors),
        goal_blueprint=_row_blueprint_colored(colors),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_letters(glyphs: list[str]) -> TaskSchema:
    return TaskSchema(
        task_name="alphabetical_" + "_".join(g.lower() for g in glyphs),
        asset_requests=_glyph_requests(glyphs),
        goal_blueprint=_ordered_blueprint(glyphs, "alphabetical"),
        init_hint="scattered",
        ordering_pattern="alphabetical",
    )


def _build_word(word: str) -> TaskSchema:
    return TaskSchema(
        task_name=f"word_{word.lower()}",
        asset_requests=_glyph_requests(list(word)),
        goal_blueprint=_word_blueprint(word),
        init_hint="scattered",
        ordering_pattern=f"word:{word}",
    )


def _build_numbers(glyphs: list[str]) -> TaskSchema:
    return TaskSchema(
        task_name="numerical_" + "_".join(glyphs),
        asset_requests=_glyph_requests(glyphs),
        goal_blueprint=_ordered_blueprint(glyphs, "numerical"),
        init_hint="scattered",
        ordering_pattern="numerical",
    )


def _build_equation(text: str) -> TaskSchema:
    return TaskSchema(
        task_name=f"equation_{text}",
        asset_requests=_glyph_requests(list(equation_glyphs(text))),
        goal_blueprint=_equation_blueprint(text),
        init_hint="scattered",
        ordering_pattern=f"equation:{text}",
    )


def _build_circle(count: int) -> TaskSchema:
    colors = _default_colors(count)
    return TaskSchema(
        task_name=f"circle_{count}",
        asset_requests=_colored_requests(colors),
        goal_blueprint=_circle_blueprint(colors),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_sequential(colors: list[str]) -> TaskSchema:
    requests = _colored_requests(colors) + tuple(
        AssetRequest(kind=AssetKind.GOAL_PATCH, color=c) for c in colors
    )
    stages = tuple(
        OnPatch(_cube_id(c), _patch_id(c)) for c in colors
    )
    return TaskSchema(
        task_name="sequential_patches_" + "_".join(colors),
        asset_requests=requests,
        goal_blueprint=Stages(stages),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_rotate(glyph: str, face: Face) -> TaskSchema:
    requests = (AssetRequest(kind=AssetKind.SEMANTIC_CUBE, label=glyph),)
    return TaskSchema(
        task_name=f"rotate_{glyph.lower()}_{face.value.lower()}",
        asset_requests=requests,
        goal_blueprint=FaceReads(_glyph_id(glyph), face, glyph),
        init_hint="scattered",
        ordering_pattern="none",
    )


def _build_two_stacks(colors_a: list[str], colors_b: list[str]) -> TaskSchema:
    all_colors = colors_a + colors_b
    requests = _colored_requests(all_colors) + (
        AssetRequest(kind=AssetKind.GOAL_PATCH, color="green"),
        AssetRequest(kind=AssetKind.GOAL_PATCH, color="red"),
    )
    indexed = enumerate_with_dupes(all_colors)
    ids = [_cube_id(c, i) for i, c in indexed]
    split = len(colors_a)
    blueprint = TwoStacks(
        stacks=(
            StackSpec(cubes=tuple(ids[:split]), base=_patch_id("green")),
            StackSpec(cubes=tuple(ids[split:]), base=_patch_id("red")),
        )
    )
    return TaskSchema(
        task_name="two_stacks_" + "_".join(all_colors),
        asset_requests=requests,
        goal_blueprint=blueprint,
        init_hint="scattered",
        ordering_pattern="none",
    )


# Template table: (compiled regex, handler). Handlers receive the match and
# return a TaskSchema. Order matters: first match wins.

_TEMPLATES: list[tuple[re.Pattern, Callable[[re.Match], TaskSchema]]] = []


def _template(pattern: str):
    def register(fn: Callable[[re.Match], TaskSchema]):
        _TEMPLATES.append((re.compile(pattern), fn))
        return fn

    return register


@_template(
    rf"^(?:stack|put|place|set) (?:the |a |an )?({_COLOR_ALT}) (?:block|cube) "
    rf"(?:on top of|onto|on) (?:the |a |an )?({_COLOR_ALT}) (?:block|cube)"
    rf"(?: on the table)?$"
)
def _t_stack_pair(m: re.Match) -> TaskSchema:
    top, bottom = m.group(1), m.group(2)
    return _build_stack([bottom, top])


@_template(
    rf"^make a (?:simple )?(?:2|two)[- ]block tower with (?:the |a )?({_COLOR_ALT}) "
    rf"(?:block|cube) on (?:the )?bottom and (?:the |a )?({_COLOR_ALT})(?: block| cube)? on top$"
)
def _t_stack_tower2(m: re.Match) -> TaskSchema:
    return _build_stack([m.group(1), m.group(2)])


@_template(
    rf"^(?:stack|build a tower of) the ((?:{_COLOR_ALT})(?:, ?(?:{_COLOR_ALT}))*(?:,? and (?:{_COLOR_ALT}))?) "
    rf"(?:blocks|cubes)(?: from bottom to top| in that order)?$"
)
def _t_stack_list(m: re.Match) -> TaskSchema:
    return _build_stack(_color_list(m.group(1)))


@_template(
    rf"^stack (?:({_NUM_ALT}) )?(?:blocks|cubes) on the (?:target |goal )?(?:square )?patch"
    rf"(?: designated)?(?: on the table)?$"
)
def _t_stack_on_patch(m: re.Match) -> TaskSchema:
    count = _to_count(m.group(1)) if m.group(1) else 2
    return _build_stack_on_patch(_default_colors(count))


@_template(
    rf"^(?:align|arrange|place|put) (?:({_NUM_ALT}) )?(?:cubic )?(?:blocks|cubes) in a "
    rf"(?:single )?(?:straight )?(?:horizontal )?(?:line|row)$"
)
def _t_align_n(m: re.Match) -> TaskSchema:
    count = _to_count(m.group(1)) if m.group(1) else 3
    return _build_align(_default_colors(count))


@_template(
    rf"^(?:align|arrange) the ((?:{_COLOR_ALT})(?:, ?(?:{_COLOR_ALT}))*(?:,? and (?:{_COLOR_ALT}))?) "
    rf"(?:blocks|cubes) in a (?:single )?(?:straight )?(?:horizontal )?(?:line|row)$"
)
def _t_align_colors(m: re.Match) -> TaskSchema:
    return _build_align(_color_list(m.group(1)))


@_template(
    r"^arrange (?:the )?cubes so (?:that )?their up[- ]faces read "
    r"([a-z0-9](?:, ?[a-z0-9])*(?:,? and [a-z0-9])?)(?: ?…| ?\.\.\.)? in alphabetical order$"
)
def _t_letters_read(m: re.Match) -> TaskSchema:
    return _build_letters(_glyph_list(m.group(1)))


@_template(
    r"^(?:arrange|sort|order) (?:the )?letter cubes ([a-z](?:, ?[a-z])*(?:,? and [a-z])?) "
    r"(?:in alphabetical order|alphabetically)$"
)
def _t_letters_list(m: re.Match) -> TaskSchema:
    return _build_letters(_glyph_list(m.group(1)))


@_template(r"^(?:arrange|sort|order) (\d+|" + "|".join(NUMBER_WORDS) + r") letter cubes alphabetically$")
def _t_letters_count(m: re.Match) -> TaskSchema:
    count = _to_count(m.group(1))
    return _build_letters([chr(ord("A") + i) for i in range(count)])


@_template(
    r"^arrange (?:the )?cubes so (?:that )?they spell (?:the word )?([a-z]{2,})"
    r"(?: from left to right)?$"
)
def _t_word_arrange(m: re.Match) -> TaskSchema:
    return _build_word(m.group(1).upper())


@_template(
    r"^spell (?:out )?(?:the word )?([a-z]{2,})"
    r"(?: (?:with|using) (?:the )?(?:letter |glyph )?cubes)?(?: arranged in a line| left to right)?$"
)
def _t_word_spell(m: re.Match) -> TaskSchema:
    return _build_word(m.group(1).upper())


@_template(
    r"^arrange (?:the )?(?:number )?cubes ([0-9](?:, ?[0-9])*(?:,? and [0-9])?) in "
    r"(?:strictly )?(?:increasing|ascending) (?:numerical|numeric) order$"
)
def _t_numbers_list(m: re.Match) -> TaskSchema:
    return _build_numbers(_glyph_list(m.group(1)))


@_template(
    r"^arrange (?:the )?cubes in (?:strictly )?(?:increasing|ascending) (?:numerical|numeric) order$"
)
def _t_numbers_default(m: re.Match) -> TaskSchema:
    return _build_numbers(["1", "2", "3"])


@_template(
    r"^(?:sort|order) the number cubes ([0-9](?:, ?[0-9])*(?:,? and [0-9])?)"
    r"(?: in ascending order)?$"
)
def _t_numbers_sort(m: re.Match) -> TaskSchema:
    return _build_numbers(_glyph_list(m.group(1)))


@_template(
    r"^(?:arrange|form) (?:the )?cubes (?:into|to form|to spell) (?:a correct )?"
    r"(?:single[- ]digit )?(?:math )?equation:? ?([0-9] ?[+\-x] ?[0-9] ?= ?[0-9]{1,2})$"
)
def _t_equation_arrange(m: re.Match) -> TaskSchema:
    return _build_equation(normalize_equation(m.group(1)))


@_template(
    r"^arrange (?:the )?cubes into the equation ([0-9] ?[+\-x] ?[0-9] ?= ?[0-9]{1,2})$"
)
def _t_equation_canonical(m: re.Match) -> TaskSchema:
    return _build_equation(normalize_equation(m.group(1)))


@_template(r"^form the equation ([0-9] ?[+\-x] ?[0-9] ?= ?[0-9]{1,2})(?: with number cubes)?$")
def _t_equation_form(m: re.Match) -> TaskSchema:
    return _build_equation(normalize_equation(m.group(1)))


@_template(
    rf"^(?:place|arrange|put) (?:({_NUM_ALT}) )?(?:the )?(?:blocks|cubes) "
    rf"(?:in|into) a (?:circle|circular arrangement|ring)$"
)
def _t_circle(m: re.Match) -> TaskSchema:
    count = _to_count(m.group(1)) if m.group(1) else 6
    return _build_circle(count)


@_template(
    rf"^place each colored (?:block|cube) on its matching colored (?:target )?patch in "
    rf"(?:exact temporal )?order:? ?({_COLOR_ALT}) first,? then (?:the )?({_COLOR_ALT})$"
)
def _t_sequential(m: re.Match) -> TaskSchema:
    return _build_sequential([m.group(1), m.group(2)])


@_template(
    rf"^put the ({_COLOR_ALT}) (?:block|cube) on the (?:\1|matching) patch first,? then "
    rf"the ({_COLOR_ALT}) (?:block|cube) on the (?:\2|matching) patch$"
)
def _t_sequential_explicit(m: re.Match) -> TaskSchema:
    return _build_sequential([m.group(1), m.group(2)])


@_template(
    r"^(?:rotate|turn) (?:the |a )?([a-z0-9]) (?:letter |glyph )?(?:cube|block) so "
    r"(?:that )?the (?:target )?letter (?:faces|points|is facing) "
    r"(the camera|front|forward|up|upward|away|backward|left|right)$"
)
def _t_rotate(m: re.Match) -> TaskSchema:
    return _build_rotate(m.group(1).upper(), _FACE_WORDS[m.group(2)])


@_template(
    r"^stack two towers of (?:blocks|cubes) on (?:the )?color[- ]specific goal patches$"
)
def _t_two_stacks(m: re.Match) -> TaskSchema:
    return _build_two_stacks(["red", "blue"], ["green", "yellow"])


class GrammarBackend:
    """The bundled deterministic parser: template match, first hit wins."""

    def propose(self, request: ProposalRequest) -> ProposalResponse:
        text = _normalize(request.instruction)
        if not text:
            return ProposalResponse(refusal="empty instruction")
        for pattern, handler in _TEMPLATES:
            m = pattern.match(text)
            if m is None:
                continue
            try:
                return ProposalResponse(schema=handler(m))
            except UnparsableInstruction as exc:
                return ProposalResponse(refusal=str(exc))
        return ProposalResponse(refusal=f"no grammar template matches: {text!r}")


def parse_instruction(text: str, backend: Optional[ProposalBackend] = None) -> TaskSchema:
    """Compile an instruction to a schema via the (pluggable) backend."""
    backend = backend or GrammarBackend()
    response = backend.propose(ProposalRequest(instruction=text))
    if response.schema is None:
        raise UnparsableInstruction(response.refusal or "backend returned no schema")
    return response.schema


# ---------------------------------------------------------------------------
# Canonical sentences and paraphrases.
# ---------------------------------------------------------------------------


def _pattern_payload(schema: TaskSchema, expected: str) -> str:
    head, sep, payload = schema.ordering_pattern.partition(":")
    if head != expected or not payload:
        raise UnparsableInstruction(
            f"task {schema.task_name!r} carries no {expected!r} pattern payload"
        )
    return payload


def canonical_instruction(schema: TaskSchema) -> str:
    """The single canonical sentence for a schema, regenerated from its parts."""
    kind = schema.task_name.split("_", 1)[0]
    if kind == "stack":
        colors = _request_colors(schema)
        if len(colors) == 2:
            return f"stack the {colors[1]} block on top of the {colors[0]} block"
        return "stack the " + _join_list(colors) + " blocks from bottom to top"
    if kind == "patch":
        colors = _request_colors(schema)
        return f"stack {len(colors)} blocks on the target square patch"
    if kind == "row":
        colors = _request_colors(schema)
        return "align the " + _join_list(colors) + " blocks in a single straight horizontal line"
    if kind == "alphabetical":
        glyphs = _request_glyphs(schema)
        return (
            "arrange cubes so that their up-faces read "
            + _join_list(glyphs)
            + " in alphabetical order"
        )
    if kind == "word":
        word = _pattern_payload(schema, "word")
        return f"arrange cubes so that they spell {word} from left to right"
    if kind == "numerical":
        glyphs = _request_glyphs(schema)
        return (
            "arrange the number cubes "
            + _join_list(glyphs)
            + " in strictly increasing numerical order"
        )
    if kind == "equation":
        text = _pattern_payload(schema, "equation")
        a, op, b, c = text[0], text[1], text[2], text[4:]
        return f"arrange cubes into the equation {a} {op} {b} = {c}"
    if kind == "circle":
        count = sum(r.count for r in schema.asset_requests)
        return f"place {count} cubes in a circle"
    if kind == "sequential":
        colors = [r.color for r in schema.asset_requests if r.kind is AssetKind.GOAL_PATCH]
        return (
            "place each colored block on its matching colored target patch in order: "
            f"{colors[0]} first, then {colors[1]}"
        )
    if kind == "rotate":
        glyph = schema.asset_requests[0].label or "A"
        face = schema.goal_blueprint.face  # type: ignore[union-attr]
        word = {
            Face.FRONT: "the camera",
            Face.TOP: "up",
            Face.BACK: "away",
            Face.LEFT: "left",
            Face.RIGHT: "right",
        }[face]
        return f"rotate the {glyph} cube so that the target letter faces {word}"
    if kind == "two":
        return "stack two towers of blocks on color-specific goal patches"
    raise UnparsableInstruction(f"no canonical sentence for {schema.task_name!r}")


def paraphrases_for(schema: TaskSchema) -> tuple[str, ...]:
    """Grammar-covered rewordings that parse back to the same schema."""
    kind = schema.task_name.split("_", 1)[0]
    if kind == "stack":
        colors = _request_colors(schema)
        if len(colors) == 2:
            return (
                f"place a {colors[1]} cube on top of a {colors[0]} cube on the table",
                f"put the {colors[1]} block on the {colors[0]} block",
                f"make a simple 2-block tower with a {colors[0]} block on bottom and {colors[1]} on top",
            )
        return ("build a tower of the " + _join_list(colors) + " blocks",)
    if kind == "patch":
        colors = _request_colors(schema)
        return (f"stack {len(colors)} cubes on the goal patch",)
    if kind == "row":
        colors = _request_colors(schema)
        return ("arrange the " + _join_list(colors) + " cubes in a row",)
    if kind == "alphabetical":
        glyphs = _request_glyphs(schema)
        return (
            "sort the letter cubes " + _join_list(glyphs) + " alphabetically",
            "arrange the letter cubes " + _join_list(glyphs) + " in alphabetical order",
        )
    if kind == "word":
        word = _pattern_payload(schema, "word")
        return (
            f"spell the word {word} using letter cubes",
            f"spell out {word}",
        )
    if kind == "numerical":
        glyphs = _request_glyphs(schema)
        return (
            "sort the number cubes " + _join_list(glyphs) + " in ascending order",
            "arrange the number cubes " + _join_list(glyphs) + " in ascending numerical order",
        )
    if kind == "equation":
        text = _pattern_payload(schema, "equation")
        a, op, b, c = text[0], text[1], text[2], text[4:]
        return (
            f"form the equation {a} {op} {b} = {c} with number cubes",
            f"arrange cubes to form a correct single-digit math equation: {a}{op}{b}={c}",
        )
    if kind == "circle":
        count = sum(r.count for r in schema.asset_requests)
        return (
            f"arrange {count} blocks in a circle",
            f"put {count} cubes into a ring",
        )
    if kind == "sequential":
        colors = [r.color for r in schema.asset_requests if r.kind is AssetKind.GOAL_PATCH]
        return (
            "place each colored cube on its matching colored patch in order: "
            f"{colors[0]} first, then the {colors[1]}",
        )
    if kind == "rotate":
        glyph = schema.asset_requests[0].label or "A"
        face = schema.goal_blueprint.face  # type: ignore[union-attr]
        word = {
            Face.FRONT: "front",
            Face.TOP: "up",
            Face.BACK: "away",
            Face.LEFT: "left",
            Face.RIGHT: "right",
        }[face]
        return (f"turn the {glyph} cube so that the letter faces {word}",)
    if kind == "two":
        return ()
    return ()


def _request_colors(schema: TaskSchema) -> list[str]:
    out = []
    for req in schema.asset_requests:
        if req.kind is AssetKind.COLORED_CUBE and req.color:
            out.extend([req.color] * req.count)
    return out


def _request_glyphs(schema: TaskSchema) -> list[str]:
    out = []
    for req in schema.asset_requests:
        if req.kind is AssetKind.SEMANTIC_CUBE and req.label:
            out.extend([req.label] * req.count)
    return out


def _join_list(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


# ---------------------------------------------------------------------------
# Feasibility.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepairSuggestion:
    kind: str
    params: JsonObj = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in REPAIR_KINDS:
            raise InvalidSpec(f"unknown repair kind {self.kind!r}")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    repairs: tuple[RepairSuggestion, ...]


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[Violation, ...]


def _max_row_count(constants=DEFAULT_CONSTANTS, edge: float = DEFAULT_CUBE_EDGE_M) -> int:
    """Largest row that fits the y extent at default spacing."""
    spacing = LAYOUT_SPACING_FACTOR * edge
    extent = constants.workspace_y[1] - constants.workspace_y[0]
    return int((extent - edge) / spacing) + 1


def check_feasibility(schema: TaskSchema) -> FeasibilityReport:
    """Screen a schema against glyph pools, label demand, and the footprint.

    Violations carry at least one repair suggestion drawn from the closed
    repair kinds; suggestions are deterministic functions of the schema.
    """
    violations: list[Violation] = []
    requested_labels: list[str] = []
    for req in schema.asset_requests:
        if req.kind is AssetKind.SEMANTIC_CUBE and req.label:
            requested_labels.extend([req.label] * req.count)
    letters = [l for l in requested_labels if l.isalpha()]
    digits = [l for l in requested_labels if l.isdigit()]

    if len(set(letters)) > 26 or (schema.ordering_pattern == "alphabetical" and len(letters) > 26):
        violations.append(
            Violation(
                code="letter_pool_exceeded",
                message=f"{len(letters)} letter cubes demanded; 26 distinct letters exist",
                repairs=(
                    RepairSuggestion("Reduce_Labels_Preserve_Geometry", {"max_count": 26}),
                ),
            )
        )
    if len(set(digits)) > 10 or (schema.ordering_pattern == "numerical" and len(digits) > 10):
        violations.append(
            Violation(
                code="digit_pool_exceeded",
                message=f"{len(digits)} digit cubes demanded; 10 distinct digits exist",
                repairs=(
                    RepairSuggestion("Reduce_Labels_Preserve_Geometry", {"max_count": 10}),
                ),
            )
        )

    pattern_kind = schema.ordering_pattern.split(":", 1)[0]
    if pattern_kind != "none" and not requested_labels:
        violations.append(
            Violation(
                code="pattern_without_labels",
                message=f"pattern {schema.ordering_pattern!r} needs glyph cubes",
                repairs=(RepairSuggestion("Switch_To_Spatial_Only", {}),),
            )
        )
    if pattern_kind == "alphabetical" and digits:
        violations.append(
            Violation(
                code="pattern_label_mismatch",
                message="alphabetical ordering over digit labels",
                repairs=(RepairSuggestion("Switch_Ordering_Pattern", {"pattern": "numerical"}),),
            )
        )
    if pattern_kind == "numerical" and letters:
        violations.append(
            Violation(
                code="pattern_label_mismatch",
                message="numerical ordering over letter labels",
                repairs=(RepairSuggestion("Switch_Ordering_Pattern", {"pattern": "alphabetical"}),),
            )
        )
    if pattern_kind == "alphabetical" and len(letters) != len(set(letters)):
        violations.append(
            Violation(
                code="duplicate_labels_under_ordering",
                message="strict alphabetical order is impossible with repeated letters",
                repairs=(RepairSuggestion("Switch_To_Spatial_Only", {}),),
            )
        )
    if pattern_kind == "numerical" and len(digits) != len(set(digits)):
        violations.append(
            Violation(
                code="duplicate_labels_under_ordering",
                message="strictly increasing order is impossible with repeated digits",
                repairs=(RepairSuggestion("Switch_To_Spatial_Only", {}),),
            )
        )

    if pattern_kind == "word":
        word = schema.ordering_pattern.split(":", 1)[1]
        needed: dict[str, int] = {}
        for g in word:
            needed[g] = needed.get(g, 0) + 1
        have: dict[str, int] = {}
        for g in letters:
            have[g] = have.get(g, 0) + 1
        short = {g: n for g, n in needed.items() if have.get(g, 0) < n}
        if short:
            violations.append(
                Violation(
                    code="word_glyphs_unavailable",
                    message=f"word {word!r} needs more cubes of {sorted(short)} than requested",
                    repairs=(
                        RepairSuggestion(
                            "Switch_Ordering_Pattern", {"pattern": "alphabetical"}
                        ),
                    ),
                )
            )
    if pattern_kind == "equation":
        text = schema.ordering_pattern.split(":", 1)[1]
        correct = False
        try:
            correct = equation_is_correct(text)
        except InvalidSpec:
            correct = False
        if not correct:
            repaired = _correct_equation(text)
            repairs: tuple[RepairSuggestion, ...]
            if repaired is not None:
                repairs = (RepairSuggestion("Switch_Ordering_Pattern", {"equation": repaired}),)
            else:
                repairs = (RepairSuggestion("Switch_To_Spatial_Only", {}),)
            violations.append(
                Violation(
                    code="equation_invalid",
                    message=f"equation {text!r} is malformed or false",
                    repairs=repairs,
                )
            )

    # Footprint of coplanar layouts at default spacing.
    total_cubes = sum(
        r.count for r in schema.asset_requests if r.kind is not AssetKind.GOAL_PATCH
    )
    is_row_layout = pattern_kind in ("alphabetical", "numerical", "word", "equation") or any(
        isinstance(leaf, (AlignedRow, OrderedRow, WordRow, EquationRow))
        for _, leaf in _blueprint_leaves(schema)
    )
    if is_row_layout:
        limit = _max_row_count()
        if total_cubes > limit:
            violations.append(
                Violation(
                    code="row_exceeds_workspace",
                    message=f"{total_cubes} cubes at default spacing exceed the workspace",
                    repairs=(
                        RepairSuggestion(
                            "Reduce_Labels_Preserve_Geometry", {"max_count": limit}
                        ),
                    ),
                )
            )
    for _, leaf in _blueprint_leaves(schema):
        if isinstance(leaf, CircleArrangement):
            edge = DEFAULT_CUBE_EDGE_M
            diameter = 2.0 * (leaf.radius_m + edge / 2.0)
            extent_x = DEFAULT_CONSTANTS.workspace_x[1] - DEFAULT_CONSTANTS.workspace_x[0]
            extent_y = DEFAULT_CONSTANTS.workspace_y[1] - DEFAULT_CONSTANTS.workspace_y[0]
            spacing_ok = (
                2.0 * 3.14159265 * leaf.radius_m / max(len(leaf.assets), 1) >= edge
            )
            if diameter > min(extent_x, extent_y) or not spacing_ok:
                violations.append(
                    Violation(
                        code="circle_exceeds_workspace",
                        message="circle arrangement does not fit the workspace",
                        repairs=(
                            RepairSuggestion(
                                "Reduce_Labels_Preserve_Geometry",
                                {"max_count": max(3, int(2 * 3.14159265 * leaf.radius_m / edge))},
                            ),
                        ),
                    )
                )

    return FeasibilityReport(feasible=not violations, violations=tuple(violations))


def _blueprint_leaves(schema: TaskSchema):
    from .predicates import iter_leaves

    return list(iter_leaves(schema.goal_blueprint))


def _correct_equation(text: str) -> Optional[str]:
    m = re.match(r"^([0-9])([+\-x])([0-9])=([0-9]{1,2})$", text)
    if not m:
        return None
    a, op, b = int(m.group(1)), m.group(2), int(m.group(3))
    result = {"+": a + b, "-": a - b, "x": a * b}[op]
    if result < 0:
        return None
    return f"{a}{op}{b}={result}"


def apply_repair(schema: TaskSchema, suggestion: RepairSuggestion) -> TaskSchema:
    """Deterministically rewrite a schema per one suggestion."""
    if suggestion.kind == "Switch_To_Spatial_Only":
        colors = _default_colors(
            sum(r.count for r in schema.asset_requests if r.kind is not AssetKind.GOAL_PATCH)
            or 3
        )
        return _build_align(colors)
    if suggestion.kind == "Switch_Ordering_Pattern":
        if "equation" in suggestion.params:
            return _build_equation(suggestion.params["equation"])
        target = suggestion.params.get("pattern", "alphabetical")
        glyphs = sorted(set(_request_glyphs(schema)))
        if target == "alphabetical":
            letters = [g for g in glyphs if g.isalpha()] or ["A", "B", "C"]
            return _build_letters(letters)
        digits = [g for g in glyphs if g.isdigit()] or ["1", "2", "3"]
        return _build_numbers(digits)
    if suggestion.kind == "Reduce_Labels_Preserve_Geometry":
        limit = int(suggestion.params.get("max_count", 3))
        kind = schema.task_name.split("_", 1)[0]
        if kind == "word":
            word = schema.ordering_pattern.split(":", 1)[1][:limit]
            if len(word) >= 2:
                return _build_word(word)
            return _build_align(_default_colors(2))
        if kind == "alphabetical":
            glyphs = sorted(set(_request_glyphs(schema)))[:limit]
            if len(glyphs) >= 2:
                return _build_letters(glyphs)
        if kind == "numerical":
            glyphs = sorted(set(_request_glyphs(schema)))[:limit]
            if len(glyphs) >= 2:
                return _build_numbers(glyphs)
        if kind == "circle":
            return _build_circle(min(limit, 8))
        if kind == "row":
            return _build_align(_default_colors(min(limit, 8)))
        colors = _request_colors(schema)[:limit] or _default_colors(min(limit, 3))
        return _build_align(colors)
    raise InvalidSpec(f"unknown repair kind {suggestion.kind!r}")


# ---------------------------------------------------------------------------
# Elaboration.
# ---------------------------------------------------------------------------


def elaborate(
    schema: TaskSchema,
    instruction: Optional[str] = None,
    paraphrases: Optional[tuple[str, ...]] = None,
) -> TaskSpec:
    """Assemble the executable spec for a feasible schema.

    Mints assets, resolves the goal blueprint against them, derives the
    init distribution from the hint, and attaches the canonical sentence
    plus its grammar paraphrases (both overridable for schemas that were
    edited rather than parsed). Raises :class:`ElaborationConflict` when
    the blueprint references assets the requests never produce.
    """
    assets = mint_assets(schema.asset_requests)
    declared = {a.id for a in assets}
    referenced = set(schema.goal_blueprint.referenced_ids())
    missing = referenced - declared
    if missing:
        raise ElaborationConflict(f"goal references unminted assets: {sorted(missing)}")

    asset_map = {a.id: a for a in assets}
    from .predicates import OnPatch as _OnPatch, iter_leaves

    for _, leaf in iter_leaves(schema.goal_blueprint):
        if isinstance(leaf, _OnPatch):
            target = asset_map[leaf.patch]
            if target.kind is not AssetKind.GOAL_PATCH:
                raise ElaborationConflict(f"OnPatch target {leaf.patch!r} is not a patch")

    fixed: dict[str, Pose] = {}
    constants = DEFAULT_CONSTANTS
    cx = (constants.workspace_x[0] + constants.workspace_x[1]) / 2.0
    patches = [a for a in assets if a.kind is AssetKind.GOAL_PATCH]
    if patches:
        span = (len(patches) - 1) * 0.12
        for i, patch in enumerate(patches):
            fixed[patch.id] = Pose(position=(cx, span / 2.0 - i * 0.12, constants.table_z))

    cubes = [a for a in assets if a.is_cube]
    if schema.init_hint == "partially_stacked" and len(cubes) >= 2:
        below, above = cubes[0], cubes[1]
        z0 = constants.table_z + below.edge_m / 2.0
        fixed[below.id] = Pose(position=(cx, 0.0, z0))
        fixed[above.id] = Pose(
            position=(cx, 0.0, z0 + (below.edge_m + above.edge_m) / 2.0)
        )
    elif schema.init_hint == "fixed":
        spacing = LAYOUT_SPACING_FACTOR * DEFAULT_CUBE_EDGE_M
        for i, cube in enumerate(cubes):
            y = (len(cubes) - 1) * spacing / 2.0 - i * spacing
            fixed[cube.id] = Pose(
                position=(cx, y, constants.table_z + cube.edge_m / 2.0)
            )

    init = InitDistribution(
        region=default_region(constants),
        min_separation_m=LAYOUT_SPACING_FACTOR * DEFAULT_CUBE_EDGE_M,
        fixed_poses=fixed or None,
    )
    return TaskSpec(
        name=schema.task_name,
        instruction=instruction if instruction is not None else canonical_instruction(schema),
        assets=assets,
        init=init,
        goal=schema.goal_blueprint,
        paraphrases=paraphrases if paraphrases is not None else paraphrases_for(schema),
    )


def compile_instruction(text: str, backend: Optional[ProposalBackend] = None) -> TaskSpec:
    """parse -> feasibility -> elaborate, raising on the first failure."""
    schema = parse_instruction(text, backend=backend)
    report = check_feasibility(schema)
    if not report.feasible:
        raise InvalidSpec(
            "; ".join(f"{v.code}: {v.message}" for v in report.violations)
        )
    return elaborate(schema)
