"""Command line entry points.

Exit codes: 0 on success, 1 when the domain rejects the input (unparsable
instruction, failed validation, too little data), 2 on usage or IO errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .core import content_hash, deserialize_spec
from .diversity import (
    TooFewTasks,
    cumulative_curve,
    dump_cumulative_curve_tsv,
    dump_pooled_curve_tsv,
    load_corpus_tsv,
    pooled_curve,
)
from .frontend import UnparsableInstruction, parse_instruction
from .steering import SteeringEngine
from .validation import orchestrate, run_pipeline


def _print_report(report) -> None:
    for stage in report.stages:
        mark = "ok" if stage.passed else "FAIL"
        print(f"  {stage.name:<10} {mark:<4} {stage.details}")
    verdict = "ADMITTED" if report.admitted else "REJECTED"
    print(verdict)


def _cmd_compile(args: argparse.Namespace) -> int:
    try:
        schema = parse_instruction(args.instruction)
    except UnparsableInstruction as exc:
        print(f"unparsable: {exc}", file=sys.stderr)
        return 1
    result = orchestrate(schema)
    if not result.admitted:
        failure = result.reports[-1].failure
        where = f"{failure.stage}/{failure.kind}" if failure else "unknown"
        print(f"rejected at {where}: {failure.details if failure else ''}", file=sys.stderr)
        return 1
    spec = result.spec
    if args.json:
        print(json.dumps(spec.to_obj(), indent=2, sort_keys=True))
    else:
        print(f"name: {spec.name}")
        print(f"instruction: {spec.instruction}")
        print(f"assets: {len(spec.assets)}")
        print(f"hash: {content_hash(spec)}")
        if result.steps:
            applied = ", ".join(f"{s.operator}:{s.strategy}" for s in result.steps)
            print(f"repairs: {applied}")
    if args.out:
        Path(args.out).write_bytes(
            json.dumps(spec.to_obj(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        )
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    if args.spec:
        try:
            spec = deserialize_spec(Path(args.spec).read_bytes())
        except OSError as exc:
            print(f"cannot read {args.spec}: {exc}", file=sys.stderr)
            return 2
        except Exception as exc:
            print(f"bad spec file: {exc}", file=sys.stderr)
            return 1
        report = run_pipeline(spec)
    else:
        try:
            schema = parse_instruction(args.instruction)
        except UnparsableInstruction as exc:
            print(f"unparsable: {exc}", file=sys.stderr)
            return 1
        report = run_pipeline(schema)
    _print_report(report)
    return 0 if report.admitted else 1


def _cmd_steer(args: argparse.Namespace) -> int:
    try:
        lines = [l.strip() for l in Path(args.script).read_text(encoding="utf-8").splitlines()]
    except OSError as exc:
        print(f"cannot read {args.script}: {exc}", file=sys.stderr)
        return 2
    lines = [l for l in lines if l and not l.startswith("#")]
    if not lines:
        print("script has no instructions", file=sys.stderr)
        return 2
    engine = SteeringEngine()
    try:
        engine.begin(lines[0])
        for line in lines[1:]:
            engine.steer(line)
    except UnparsableInstruction as exc:
        print(f"unparsable: {exc}", file=sys.stderr)
        return 1
    for snap in engine.versions:
        print(f"v{snap.version_id}  {snap.code_hash[:12]}  {snap.goal_summary}")
    return 0


def _cmd_diversity(args: argparse.Namespace) -> int:
    try:
        with open(args.corpus, "r", encoding="utf-8") as fh:
            corpus = load_corpus_tsv(fh)
    except OSError as exc:
        print(f"cannot read {args.corpus}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"bad corpus: {exc}", file=sys.stderr)
        return 1
    try:
        pooled = pooled_curve(corpus, shuffles=args.shuffles, seed=args.seed)
        combined = cumulative_curve([t for texts in corpus.values() for t in texts])
    except TooFewTasks as exc:
        print(f"too few tasks: {exc}", file=sys.stderr)
        return 1
    print("# pooled")
    print(dump_pooled_curve_tsv(pooled), end="")
    print("# cumulative (combined)")
    print(dump_cumulative_curve_tsv(combined), end="")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(host=args.host, port=args.port, store_path=args.store)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocksmith",
        description="Compile, validate, steer, and score tabletop block tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_compile = sub.add_parser("compile", help="instruction -> validated task spec")
    p_compile.add_argument("instruction")
    p_compile.add_argument("--json", action="store_true", help="print the full spec JSON")
    p_compile.add_argument("--out", help="also write canonical spec JSON to this file")
    p_compile.set_defaults(fn=_cmd_compile)

    p_validate = sub.add_parser("validate", help="run the staged pipeline, print per-stage results")
    group = p_validate.add_mutually_exclusive_group(required=True)
    group.add_argument("--instruction", help="validate a parsed instruction")
    group.add_argument("--spec", help="validate a canonical spec JSON file")
    p_validate.set_defaults(fn=_cmd_validate)

    p_steer = sub.add_parser("steer", help="replay a steering script (one edit per line)")
    p_steer.add_argument("script")
    p_steer.set_defaults(fn=_cmd_steer)

    p_div = sub.add_parser("diversity", help="curves for a user<TAB>text corpus")
    p_div.add_argument("--corpus", required=True)
    p_div.add_argument("--shuffles", type=int, default=100)
    p_div.add_argument("--seed", type=int, default=0)
    p_div.set_defaults(fn=_cmd_diversity)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--store", default=None)
    p_serve.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
