"""Compiler and validator for language-defined tabletop block tasks."""

from .core import (
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
    deserialize_spec,
    validate_spec,
)
from .frontend import (
    AmbiguousReference,
    GrammarBackend,
    ProposalBackend,
    TaskSchema,
    UnparsableInstruction,
    apply_repair,
    check_feasibility,
    compile_instruction,
    elaborate,
    parse_instruction,
)
from .predicates import analyze_csp, evaluate, extract_support_graph
from .scene import check_bounds, check_stability, sample_initial, settle
from .steering import SteeringEngine, SteeringResult, TaskSnapshot
from .synthesis import GoalCheck, synthesize_goal, verify_goal
from .validation import classify_failure, orchestrate, run_pipeline
from .visibility import face_readability, face_visibility, visibility_report

__version__ = "0.1.0"

__all__ = [
    "AmbiguousReference",
    "AssetDecl",
    "AssetKind",
    "GoalCheck",
    "GrammarBackend",
    "InitDistribution",
    "InvalidSpec",
    "Pose",
    "ProposalBackend",
    "Region",
    "SceneConstants",
    "SteeringEngine",
    "SteeringResult",
    "TaskSchema",
    "TaskSnapshot",
    "TaskSpec",
    "UnparsableInstruction",
    "WorldState",
    "analyze_csp",
    "apply_repair",
    "canonical_serialize",
    "check_bounds",
    "check_feasibility",
    "check_stability",
    "classify_failure",
    "compile_instruction",
    "content_hash",
    "deserialize_spec",
    "elaborate",
    "evaluate",
    "extract_support_graph",
    "face_readability",
    "face_visibility",
    "orchestrate",
    "parse_instruction",
    "run_pipeline",
    "sample_initial",
    "settle",
    "synthesize_goal",
    "validate_spec",
    "verify_goal",
    "visibility_report",
]
