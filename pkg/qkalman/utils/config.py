"""
Tolerance resolution.

Later sources override earlier ones: built-in defaults, the user config file
(~/.qkalman/config.yaml, `tolerances:` mapping), the spec file's
`tolerances`, the QKALMAN_TOL_* environment variables and finally CLI flags.
"""

import os
from pathlib import Path
from typing import Dict, Mapping, Optional

import yaml
from pydantic import ValidationError

from qkalman.errors import SpecIOError, SpecValidationError
from qkalman.matrix_core import StructureTolerance

DEFAULT_CONFIG_PATH = Path.home() / ".qkalman" / "config.yaml"

ENV_VARIABLES = {
    "QKALMAN_TOL_ZERO": "zero_tol",
    "QKALMAN_TOL_RANK": "rank_tol",
    "QKALMAN_TOL_EIG": "eig_tol",
}


def load_config_file(path: Optional[str] = None) -> Dict[str, float]:
    """
    Read the `tolerances:` mapping of a YAML config file.

    A missing default file yields no overrides; a missing explicit file is an error.

    Raises:
        SpecIOError: if an explicitly named file cannot be read
        SpecValidationError: if the file is not a mapping or holds unknown knobs
    """
    explicit = path is not None
    config_path = Path(path) if explicit else DEFAULT_CONFIG_PATH
    if not config_path.exists():
        if explicit:
            raise SpecIOError(f"config file '{config_path}' does not exist")
        return {}
    try:
        with open(config_path, "r") as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise SpecIOError(f"could not read config file '{config_path}': {e}")
    except yaml.YAMLError as e:
        raise SpecValidationError(f"config file is not valid YAML: {e}", field_path=str(config_path))
    if not isinstance(data, dict):
        raise SpecValidationError("config file must be a mapping", field_path=str(config_path), expected="mapping", found=type(data).__name__)
    tolerances = data.get("tolerances") or {}
    _check_knobs(tolerances, f"{config_path}:tolerances")
    return dict(tolerances)


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, float]:
    """
    Tolerance overrides from QKALMAN_TOL_ZERO, QKALMAN_TOL_RANK and QKALMAN_TOL_EIG.

    Raises:
        SpecValidationError: if a variable is set to something that is not a number
    """
    environ = os.environ if environ is None else environ
    out = {}
    for variable, knob in ENV_VARIABLES.items():
        raw = environ.get(variable)
        if raw is None or raw.strip() == "":
            continue
        try:
            out[knob] = float(raw)
        except ValueError:
            raise SpecValidationError(f"{variable} must be a number", field_path=variable, expected="float", found=raw)
    return out


def _check_knobs(values: Mapping, where: str):
    if not isinstance(values, Mapping):
        raise SpecValidationError("tolerances must be a mapping", field_path=where, expected="mapping", found=type(values).__name__)
    unknown = sorted(set(values) - set(StructureTolerance.model_fields))
    if unknown:
        raise SpecValidationError("unknown tolerance knob", field_path=f"{where}.{unknown[0]}", expected=sorted(StructureTolerance.model_fields), found=unknown)


def resolve_tolerance(
    spec_tolerances: Optional[Mapping[str, float]] = None,
    cli_overrides: Optional[Mapping[str, Optional[float]]] = None,
    config_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> StructureTolerance:
    """
    Merge every tolerance source into one StructureTolerance.

    Args:
        spec_tolerances: The spec file's `tolerances` object
        cli_overrides: Knob values from CLI flags; None entries are ignored
        config_path: Explicit config file (default ~/.qkalman/config.yaml)
        environ: Environment mapping (default os.environ)

    Returns:
        The resolved, validated tolerance policy
    """
    merged: Dict[str, float] = {}
    for layer in (
        load_config_file(config_path),
        dict(spec_tolerances or {}),
        env_overrides(environ),
        {k: v for k, v in (cli_overrides or {}).items() if v is not None},
    ):
        _check_knobs(layer, "tolerances")
        merged.update(layer)
    try:
        return StructureTolerance(**merged)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise SpecValidationError("invalid tolerance value", field_path=f"tolerances.{field}", expected="positive number", found=first.get("input"))
