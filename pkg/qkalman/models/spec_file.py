"""
The JSON spec-file model and its canonical serialization.

Matrices are held fully evaluated. Real-representation matrices are
written as plain numbers, the others as [re, im] pairs.
"""

import hashlib
import json
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# Matrix fields per representation: name -> (rows, cols) as multiples of (n, m) and whether it may be omitted.
MATRIX_FIELDS: Dict[str, Dict[str, Tuple[Tuple[str, str], bool]]] = {
    "complex": {
        "Omega_minus": (("n", "n"), False),
        "Omega_plus": (("n", "n"), True),
        "Cminus": (("m", "n"), True),
        "Cplus": (("m", "n"), True),
    },
    "passive": {
        "Omega_minus": (("n", "n"), False),
        "Cminus": (("m", "n"), True),
    },
    "real": {
        "H": (("2n", "2n"), False),
        "C": (("2m", "2n"), True),
    },
}

TOP_LEVEL_FIELDS = ("name", "description", "representation", "n", "m", "parameters", "tolerances")


def expected_shape(dims: Tuple[str, str], n: int, m: int) -> Tuple[int, int]:
    sizes = {"n": n, "m": m, "2n": 2 * n, "2m": 2 * m}
    return sizes[dims[0]], sizes[dims[1]]


class SystemSpecFile(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    representation: str
    n: int
    m: int
    name: Optional[str] = None
    description: Optional[str] = None
    tolerances: Dict[str, float] = Field(default_factory=dict)
    matrices: Dict[str, np.ndarray] = Field(default_factory=dict)

    def matrix(self, key: str) -> np.ndarray:
        """The named matrix, or a zero block of the declared shape when it was omitted."""
        if key in self.matrices:
            return self.matrices[key]
        dims, _ = MATRIX_FIELDS[self.representation][key]
        return np.zeros(expected_shape(dims, self.n, self.m), dtype=complex)


def _encode_entry(value: complex, real: bool) -> Any:
    # + 0.0 folds -0.0 into 0.0; re-parsing re + 1j*im never yields a negative zero
    re, im = float(value.real) + 0.0, float(value.imag) + 0.0
    if real:
        return re
    return [re, im]


def _encode_rows(X: np.ndarray, real: bool) -> List[List[Any]]:
    return [[_encode_entry(complex(x), real) for x in row] for row in X]


def emit_spec(spec: SystemSpecFile) -> bytes:
    """
    Canonical evaluated form of a spec: parameters and expressions are gone,
    every entry is a number or an [re, im] pair.
    """
    real = spec.representation == "real"
    doc: Dict[str, Any] = {}
    if spec.name is not None:
        doc["name"] = spec.name
    if spec.description is not None:
        doc["description"] = spec.description
    doc["representation"] = spec.representation
    doc["n"] = spec.n
    doc["m"] = spec.m
    if spec.tolerances:
        doc["tolerances"] = dict(sorted(spec.tolerances.items()))
    for key in MATRIX_FIELDS[spec.representation]:
        if key in spec.matrices:
            doc[key] = _encode_rows(spec.matrices[key], real)
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def spec_checksum(spec: SystemSpecFile) -> str:
    return hashlib.sha256(emit_spec(spec)).hexdigest()
