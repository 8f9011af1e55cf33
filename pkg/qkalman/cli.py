#!/usr/bin/env python3
"""
Command-line interface for qkalman.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional

from qkalman.errors import QKalmanError, SpecIOError
from qkalman.models.system_context import OutputFormat
from qkalman.pipeline_controller import PipelineController, notice
from qkalman.utils.corpus import corpus_run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkalman", description="Kalman decomposition of linear quantum systems")
    parser.add_argument("--config", type=str, help="Alternative YAML config file (default ~/.qkalman/config.yaml)")
    parser.add_argument("--quiet", action="store_true", help="Suppress progress lines on stderr")
    parser.add_argument("--trace", action="store_true", help="Dump the stage trace log to stderr after the run")
    commands = parser.add_subparsers(dest="command", required=True)

    decompose = commands.add_parser("decompose", help="Decompose a system spec and print the report")
    decompose.add_argument("spec", type=str, help="Path to the JSON system spec")
    decompose.add_argument("--format", type=str, default="json", choices=["json", "text"], help="Report format")
    decompose.add_argument("--tol-rank", type=float, help="Rank decision tolerance")
    decompose.add_argument("--tol-zero", type=float, help="Zero-block tolerance")
    decompose.add_argument("--tol-eig", type=float, help="Eigenvalue tolerance")
    decompose.add_argument("--out", type=str, help="Write the report to this file instead of stdout")

    check = commands.add_parser("check", help="Check physical realizability only")
    check.add_argument("spec", type=str, help="Path to the JSON system spec")

    corpus = commands.add_parser("corpus", help="Bundled example corpus")
    corpus_commands = corpus.add_subparsers(dest="corpus_command", required=True)
    run = corpus_commands.add_parser("run", help="Decompose every bundled example and compare with its goldens")
    run.add_argument("--only", type=str, help="Run a single corpus entry")
    return parser


def read_spec(path: str) -> str:
    spec_path = Path(path)
    if not spec_path.exists():
        raise SpecIOError(f"spec file '{path}' does not exist")
    try:
        with open(spec_path, "r") as f:
            return f.read()
    except OSError as e:
        raise SpecIOError(f"could not read spec file '{path}': {e}")


def write_report(content: str, path: Optional[str]):
    if path is None:
        print(content)
        return
    try:
        with open(path, "w") as f:
            f.write(content)
    except OSError as e:
        raise SpecIOError(f"could not write report to '{path}': {e}")
    notice(f"Report saved to: {path}")


def dump_trace(controller: Optional[PipelineController]):
    if controller is None or controller.last_context is None:
        return
    for entry in controller.last_context.trace_log:
        print(json.dumps(entry, default=str), file=sys.stderr)


def run_command(args: argparse.Namespace) -> int:
    if args.command == "corpus":
        outcomes = corpus_run(only=args.only)
        return 0 if all(o.passed for o in outcomes) else 2

    controller = None
    try:
        if args.command == "decompose":
            controller = PipelineController(
                output_format=OutputFormat(args.format),
                cli_overrides={"rank_tol": args.tol_rank, "zero_tol": args.tol_zero, "eig_tol": args.tol_eig},
                config_path=args.config,
                quiet=args.quiet,
            )
        else:
            controller = PipelineController(config_path=args.config, check_only=True, quiet=args.quiet)
        context = controller.run_pipeline(read_spec(args.spec), args.spec)
        write_report(context.responses[0]["content"], getattr(args, "out", None))
    finally:
        if args.trace:
            dump_trace(controller)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        code = run_command(args)
    except QKalmanError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    sys.exit(code)


if __name__ == "__main__":
    main()
