"""
Bundled example corpus.

Each manifest entry names a spec file next to the manifest, the dimensions
its decomposition must have and a set of golden values addressed by
dot-paths into the JSON report.
"""

import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError

from qkalman.errors import QKalmanError, SpecIOError, SpecValidationError
from qkalman.models.system_context import OutputFormat
from qkalman.pipeline_controller import PipelineController

CORPUS_DIR = Path(__file__).resolve().parent.parent / "corpus"
MANIFEST_PATH = CORPUS_DIR / "manifest.yaml"


class CorpusEntry(BaseModel):
    name: str
    spec: str
    dims: Dict[str, int] = Field(default_factory=dict)
    tolerance: float = 1e-9
    golden: Dict[str, Any] = Field(default_factory=dict)


class CorpusOutcome(BaseModel):
    name: str
    passed: bool
    failures: List[str] = Field(default_factory=list)
    exit_code: int = 0


def load_manifest(path: Optional[str] = None) -> List[CorpusEntry]:
    """
    Read the corpus manifest.

    Raises:
        SpecIOError: if the manifest cannot be read
        SpecValidationError: if an entry is malformed
    """
    manifest_path = Path(path) if path else MANIFEST_PATH
    try:
        with open(manifest_path, "r") as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise SpecIOError(f"could not read corpus manifest '{manifest_path}': {e}")
    try:
        return [CorpusEntry(**entry) for entry in data.get("entries", [])]
    except (TypeError, ValidationError) as e:
        raise SpecValidationError(f"malformed corpus manifest: {e}", field_path=str(manifest_path))


def lookup(document: Any, dotted: str) -> Any:
    """Resolve a dot-path such as `bae.0.verdict` against nested dicts and lists."""
    node = document
    for part in dotted.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(dotted)
    return node


def matches(found: Any, expected: Any, tolerance: float) -> bool:
    if isinstance(expected, bool) or isinstance(found, bool):
        return found == expected
    if isinstance(expected, (int, float)) and isinstance(found, (int, float)):
        return math.isfinite(found) and abs(found - expected) <= tolerance
    if isinstance(expected, list) and isinstance(found, list):
        return len(found) == len(expected) and all(matches(f, e, tolerance) for f, e in zip(found, expected))
    return found == expected


def run_entry(entry: CorpusEntry, base_dir: Path = CORPUS_DIR) -> CorpusOutcome:
    """Decompose one corpus system and compare its report with the manifest."""
    try:
        with open(base_dir / entry.spec, "r") as f:
            content = f.read()
    except OSError as e:
        return CorpusOutcome(name=entry.name, passed=False, failures=[f"could not read {entry.spec}: {e}"], exit_code=SpecIOError.exit_code)

    controller = PipelineController(output_format=OutputFormat.JSON, quiet=True)
    try:
        context = controller.run_pipeline(content, str(base_dir / entry.spec))
    except QKalmanError as e:
        return CorpusOutcome(name=entry.name, passed=False, failures=[f"{e.stage}: {e}"], exit_code=e.exit_code)

    report = context.report.model_dump(mode="json")
    failures = []
    for key, expected in entry.dims.items():
        found = report["dims"].get(key)
        if found != expected:
            failures.append(f"dims.{key}: expected {expected}, found {found}")
    for path, expected in entry.golden.items():
        try:
            found = lookup(report, path)
        except (KeyError, IndexError, ValueError):
            failures.append(f"{path}: missing from report")
            continue
        if not matches(found, expected, entry.tolerance):
            failures.append(f"{path}: expected {json.dumps(expected)}, found {json.dumps(found)}")
    return CorpusOutcome(name=entry.name, passed=not failures, failures=failures, exit_code=0 if not failures else 2)


def corpus_run(only: Optional[str] = None, manifest_path: Optional[str] = None, verbose: bool = True) -> List[CorpusOutcome]:
    """
    Run every corpus entry (or the one named by `only`) and print PASS/FAIL lines.

    Raises:
        SpecValidationError: if `only` names no entry
    """
    entries = load_manifest(manifest_path)
    if only is not None:
        entries = [e for e in entries if e.name == only]
        if not entries:
            raise SpecValidationError(f"no corpus entry named '{only}'", field_path="--only", found=only)
    base_dir = Path(manifest_path).resolve().parent if manifest_path else CORPUS_DIR

    outcomes = []
    for entry in entries:
        outcome = run_entry(entry, base_dir)
        outcomes.append(outcome)
        if verbose:
            print(f"{'PASS' if outcome.passed else 'FAIL'} {entry.name}")
            for failure in outcome.failures:
                print(f"  • {failure}")
    if verbose:
        passed = sum(o.passed for o in outcomes)
        print(f"{passed}/{len(outcomes)} corpus systems passed.", file=sys.stderr)
    return outcomes
