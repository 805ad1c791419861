"""Staged validation pipeline with classified, budgeted repair.

A candidate runs through six stages in a fixed order, stopping at the
first failure: schema checks, elaboration, seeded smoke resets, support
graph analysis, goal verification, and workspace bounds. Every failure
classifies to exactly one repair operator; the orchestrator applies the
operator's strategies in order under a cycle budget, never repeating an
(operator, strategy) pair that already failed to help.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Union

from .core import InvalidSpec, TaskSpec, validate_spec
from .frontend import (
    RepairSuggestion,
    TaskSchema,
    UnparsableInstruction,
    apply_repair,
    canonical_instruction,
    check_feasibility,
    elaborate,
    parse_instruction,
    _max_row_count,
    _request_glyphs,
)
from .predicates import (
    AllOf,
    Node,
    On,
    OnPatch,
    OnTable,
    analyze_csp,
    describe,
    evaluate,
    extract_support_graph,
)
from .scene import check_bounds, sample_initial, settle
from .synthesis import verify_goal

STAGES = ("Schema", "Elaborate", "SmokeTest", "CSP", "GoalVerify", "Bounds")

REPAIR_OPERATORS = (
    "SyntaxFix",
    "APIUsageFix",
    "RuntimeFix",
    "SuccessCheckFix",
    "StructureStabilityFix",
    "GeometricBoundsFix",
)

SMOKE_SEEDS = tuple(range(10))
MAX_REPAIR_CYCLES = 5
MAX_OPERATOR_ATTEMPTS = 3

# Ordered strategy menus. A menu may list more entries than the attempt
# budget; only strategies that actually produce a new candidate count.
OPERATOR_STRATEGIES: dict[str, tuple[str, ...]] = {
    "SyntaxFix": ("reparse_canonical", "first_feasibility_repair", "spatial_fallback"),
    "APIUsageFix": ("reparse_canonical", "spatial_fallback"),
    "RuntimeFix": ("reduce_count", "spatial_fallback"),
    "SuccessCheckFix": (
        "drop_conflicting_leaf",
        "first_feasibility_repair",
        "switch_ordering",
        "spatial_fallback",
    ),
    "StructureStabilityFix": ("shorten_stack", "reduce_count", "spatial_fallback"),
    "GeometricBoundsFix": ("shrink_layout", "reduce_count", "spatial_fallback"),
}


@dataclass(frozen=True)
class StageResult:
    name: str
    passed: bool
    details: str


@dataclass(frozen=True)
class PipelineFailure:
    stage: str
    kind: str
    details: str


@dataclass(frozen=True)
class ValidationReport:
    admitted: bool
    stages: tuple[StageResult, ...]
    failure: Optional[PipelineFailure]
    spec: Optional[TaskSpec]

    def stage(self, name: str) -> Optional[StageResult]:
        for result in self.stages:
            if result.name == name:
                return result
        return None


def run_pipeline(candidate: Union[TaskSchema, TaskSpec]) -> ValidationReport:
    """Run all stages in order, stopping at the first failure."""
    stages: list[StageResult] = []

    def fail(stage: str, kind: str, details: str) -> ValidationReport:
        stages.append(StageResult(stage, False, f"{kind}: {details}"))
        return ValidationReport(
            admitted=False,
            stages=tuple(stages),
            failure=PipelineFailure(stage, kind, details),
            spec=None,
        )

    # Schema
    if isinstance(candidate, TaskSchema):
        try:
            candidate.goal_blueprint.validate()
            report = check_feasibility(candidate)
        except InvalidSpec as exc:
            return fail("Schema", "SchemaViolation", str(exc))
        if not report.feasible:
            details = "; ".join(f"{v.code}: {v.message}" for v in report.violations)
            return fail("Schema", "Infeasible", details)
        stages.append(StageResult("Schema", True, "schema well formed and feasible"))
        # Elaborate: canonical-sentence regeneration can also fail here when a
        # schema's ordering pattern lost its payload
        try:
            spec = elaborate(candidate)
        except (InvalidSpec, UnparsableInstruction) as exc:
            return fail("Elaborate", "ElaborationConflict", str(exc))
        stages.append(StageResult("Elaborate", True, f"minted {len(spec.assets)} assets"))
    else:
        try:
            validate_spec(candidate)
        except InvalidSpec as exc:
            return fail("Schema", "SchemaViolation", str(exc))
        stages.append(StageResult("Schema", True, "spec well formed"))
        spec = candidate
        stages.append(StageResult("Elaborate", True, "already elaborated"))

    # SmokeTest: seeded resets must sample, settle, and evaluate cleanly.
    sampled_states = []
    for seed in SMOKE_SEEDS:
        try:
            state = sample_initial(spec, seed)
            settle(state)
            evaluate(spec.goal, state)
        except Exception as exc:
            return fail("SmokeTest", "RuntimeError", f"seed {seed}: {exc}")
        sampled_states.append(state)
    stages.append(StageResult("SmokeTest", True, f"{len(SMOKE_SEEDS)} seeded resets clean"))

    # CSP
    csp = analyze_csp(extract_support_graph(spec.goal))
    if not csp.feasible:
        details = []
        if csp.cycles:
            details.append("cycles: " + "; ".join(",".join(c) for c in csp.cycles))
        if csp.unsupported:
            details.append("unsupported: " + ", ".join(csp.unsupported))
        return fail("CSP", "CspInfeasible", "; ".join(details) or "infeasible")
    note = "support graph feasible"
    if csp.redundant:
        note += f" ({len(csp.redundant)} redundant constraints noted)"
    stages.append(StageResult("CSP", True, note))

    # GoalVerify
    check = verify_goal(spec, seed=0)
    if not check.ok:
        return fail("GoalVerify", check.failure_kind or "GoalUnsatisfied", check.details)
    stages.append(StageResult("GoalVerify", True, check.details))

    # Bounds: every sampled reset stays inside the workspace.
    for seed, state in zip(SMOKE_SEEDS, sampled_states):
        out = check_bounds(state)
        if out:
            return fail("Bounds", "OutOfBounds", f"seed {seed}: " + ", ".join(out))
    stages.append(StageResult("Bounds", True, "all sampled resets in bounds"))

    return ValidationReport(admitted=True, stages=tuple(stages), failure=None, spec=spec)


def classify_failure(failure: PipelineFailure) -> str:
    """Total map from a pipeline failure to one repair operator."""
    if failure.stage == "Schema":
        return "SyntaxFix"
    if failure.stage == "Elaborate":
        return "APIUsageFix"
    if failure.stage == "SmokeTest":
        return "RuntimeFix"
    if failure.kind == "Unstable":
        return "StructureStabilityFix"
    if failure.kind == "OutOfBounds":
        return "GeometricBoundsFix"
    # CSP infeasibility and unsatisfied or unsynthesizable goals all mean
    # the success condition itself needs rework.
    return "SuccessCheckFix"


# ---------------------------------------------------------------------------
# Repair strategies.
# ---------------------------------------------------------------------------


def _schema_key(schema: TaskSchema) -> str:
    return json.dumps(schema.to_obj(), sort_keys=True, separators=(",", ":"))


def _total_cubes(schema: TaskSchema) -> int:
    from .core import AssetKind

    return sum(r.count for r in schema.asset_requests if r.kind is not AssetKind.GOAL_PATCH)


_DIRECTIONAL_KINDS = {"left_of", "right_of", "in_front_of", "behind", "beside"}


def _drop_conflicting_leaf(schema: TaskSchema) -> Optional[TaskSchema]:
    """Remove one support-conflicting or redundant leaf from the goal.

    Looked for in order: a leaf closing a support cycle (the drop that
    leaves the cleanest graph wins), a cube demanded on two different
    supports at once, a duplicate or chain-implied support leaf, and a
    lateral relation between cubes already tied into one support chain.
    """
    goal = schema.goal_blueprint
    if not isinstance(goal, AllOf):
        return None
    members = list(goal.children)
    report = analyze_csp(extract_support_graph(goal))

    drop_idx: Optional[int] = None
    if report.cycles:
        cycle_nodes = set(report.cycles[0])
        candidates = [
            idx
            for idx, leaf in enumerate(members)
            if isinstance(leaf, On) and {leaf.a, leaf.b} <= cycle_nodes
        ]
        best: Optional[tuple[tuple[bool, int, int], int]] = None
        for idx in candidates:
            pruned = AllOf(tuple(members[:idx] + members[idx + 1:]))
            after = analyze_csp(extract_support_graph(pruned))
            key = (bool(after.cycles), len(after.unsupported), -idx)
            if best is None or key < best[0]:
                best = (key, idx)
        if best is not None:
            drop_idx = best[1]

    if drop_idx is None:
        # A cube listed as resting on two different supports.
        supported_by: dict[str, list[int]] = {}
        for idx, leaf in enumerate(members):
            if isinstance(leaf, (On, OnTable, OnPatch)):
                supported_by.setdefault(leaf.a, []).append(idx)
        for _, indices in sorted(supported_by.items()):
            if len(indices) > 1:
                drop_idx = indices[-1]
                break

    if drop_idx is None and report.redundant:
        for idx, leaf in enumerate(members):
            if describe(leaf) in report.redundant:
                drop_idx = idx
                break

    if drop_idx is None:
        # Lateral relation fighting a support chain over the same cubes.
        adj: dict[str, set[str]] = {}
        for leaf in members:
            for src, dst in getattr(leaf, "support_edges", lambda: ())():
                adj.setdefault(src, set()).add(dst)

        def chained(src: str, dst: str) -> bool:
            frontier = [src]
            seen = set()
            while frontier:
                node = frontier.pop()
                if node == dst:
                    return True
                if node in seen:
                    continue
                seen.add(node)
                frontier.extend(adj.get(node, ()))
            return False

        for idx, leaf in enumerate(members):
            if getattr(leaf, "kind", None) not in _DIRECTIONAL_KINDS:
                continue
            if chained(leaf.a, leaf.b) or chained(leaf.b, leaf.a):
                drop_idx = idx
                break

    if drop_idx is None:
        return None
    remaining: list[Node] = members[:drop_idx] + members[drop_idx + 1:]
    if not remaining:
        return None
    return replace(schema, goal_blueprint=AllOf(tuple(remaining)))


def apply_strategy(strategy: str, schema: TaskSchema) -> Optional[TaskSchema]:
    """One deterministic rewrite; None when the strategy does not apply."""
    if strategy == "drop_conflicting_leaf":
        return _drop_conflicting_leaf(schema)
    if strategy == "spatial_fallback":
        return apply_repair(schema, RepairSuggestion("Switch_To_Spatial_Only", {}))
    if strategy == "reparse_canonical":
        try:
            return parse_instruction(canonical_instruction(schema))
        except Exception:
            return None
    if strategy == "first_feasibility_repair":
        report = check_feasibility(schema)
        for violation in report.violations:
            for suggestion in violation.repairs:
                return apply_repair(schema, suggestion)
        return None
    if strategy == "switch_ordering":
        glyphs = _request_glyphs(schema)
        if not glyphs:
            return None
        target = "numerical" if all(g.isdigit() for g in glyphs) else "alphabetical"
        pattern_kind = schema.ordering_pattern.split(":", 1)[0]
        if pattern_kind == target:
            return None
        return apply_repair(schema, RepairSuggestion("Switch_Ordering_Pattern", {"pattern": target}))
    if strategy == "reduce_count":
        total = _total_cubes(schema)
        if total <= 2:
            return None
        return apply_repair(
            schema,
            RepairSuggestion("Reduce_Labels_Preserve_Geometry", {"max_count": total - 1}),
        )
    if strategy == "shorten_stack":
        total = _total_cubes(schema)
        if total <= 3:
            return None
        return apply_repair(
            schema, RepairSuggestion("Reduce_Labels_Preserve_Geometry", {"max_count": 3})
        )
    if strategy == "shrink_layout":
        limit = _max_row_count()
        if _total_cubes(schema) <= limit:
            return None
        return apply_repair(
            schema, RepairSuggestion("Reduce_Labels_Preserve_Geometry", {"max_count": limit})
        )
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class RepairStep:
    cycle: int
    operator: str
    strategy: str
    failure_stage: str
    failure_kind: str


@dataclass(frozen=True)
class OrchestrationResult:
    admitted: bool
    spec: Optional[TaskSpec]
    schema: TaskSchema
    steps: tuple[RepairStep, ...]
    reports: tuple[ValidationReport, ...]

    @property
    def cycles_used(self) -> int:
        return len(self.reports)


def orchestrate(schema: TaskSchema) -> OrchestrationResult:
    """Validate-classify-repair loop under the cycle and attempt budgets.

    Stops when a candidate is admitted, when the responsible operator has
    spent its attempts, when no untried strategy remains, or after
    MAX_REPAIR_CYCLES validations. Tried (operator, strategy) pairs are
    never repeated, and a strategy that produces an already-seen schema
    is treated as a dead end.
    """
    current = schema
    seen_schemas = {_schema_key(current)}
    attempts: dict[str, int] = {op: 0 for op in REPAIR_OPERATORS}
    tried: set[tuple[str, str]] = set()
    steps: list[RepairStep] = []
    reports: list[ValidationReport] = []

    for cycle in range(MAX_REPAIR_CYCLES):
        report = run_pipeline(current)
        reports.append(report)
        if report.admitted:
            return OrchestrationResult(
                admitted=True,
                spec=report.spec,
                schema=current,
                steps=tuple(steps),
                reports=tuple(reports),
            )
        operator = classify_failure(report.failure)
        repaired: Optional[TaskSchema] = None
        for strategy in OPERATOR_STRATEGIES[operator]:
            if (operator, strategy) in tried:
                continue
            if attempts[operator] >= MAX_OPERATOR_ATTEMPTS:
                break
            tried.add((operator, strategy))
            candidate = apply_strategy(strategy, current)
            if candidate is None:
                continue
            key = _schema_key(candidate)
            if key in seen_schemas:
                continue
            attempts[operator] += 1
            seen_schemas.add(key)
            steps.append(
                RepairStep(
                    cycle=cycle,
                    operator=operator,
                    strategy=strategy,
                    failure_stage=report.failure.stage,
                    failure_kind=report.failure.kind,
                )
            )
            repaired = candidate
            break
        if repaired is None:
            break
        current = repaired

    return OrchestrationResult(
        admitted=False,
        spec=None,
        schema=current,
        steps=tuple(steps),
        reports=tuple(reports),
    )
