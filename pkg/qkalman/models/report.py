from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


class MatrixPayload(BaseModel):
    shape: List[int]
    dtype: str  # 'real' or 'complex'
    data: List[List[Any]]


def encode_matrix(X) -> MatrixPayload:
    """Real arrays become rows of numbers; complex arrays rows of [re, im] pairs."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if np.iscomplexobj(X):
        data = [[[float(x.real), float(x.imag)] for x in row] for row in X]
        return MatrixPayload(shape=list(X.shape), dtype="complex", data=data)
    return MatrixPayload(shape=list(X.shape), dtype="real", data=[[float(x) for x in row] for row in X])


def decode_matrix(payload: MatrixPayload) -> np.ndarray:
    if payload.dtype == "complex":
        X = np.zeros(payload.shape, dtype=complex)
        for i, row in enumerate(payload.data):
            for j, (re, im) in enumerate(row):
                X[i, j] = complex(re, im)
        return X
    X = np.zeros(payload.shape)
    for i, row in enumerate(payload.data):
        X[i, : len(row)] = row
    return X


class DecompositionReport(BaseModel):
    # Input echo
    name: Optional[str] = None
    representation: str
    n: int
    m: int
    checksum: str
    input: Dict[str, Any] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)

    # Realizability
    realizability: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    passed: bool = True

    # Decomposition
    dims: Dict[str, int] = Field(default_factory=dict)
    transformations: Dict[str, MatrixPayload] = Field(default_factory=dict)
    complex_blocks: Dict[str, MatrixPayload] = Field(default_factory=dict)
    real_blocks: Dict[str, MatrixPayload] = Field(default_factory=dict)
    labels: List[str] = Field(default_factory=list)
    rearranged: Dict[str, MatrixPayload] = Field(default_factory=dict)
    rearranged_labels: List[str] = Field(default_factory=list)
    variables: Dict[str, List[float]] = Field(default_factory=dict)
    mode_coefficients: Dict[str, List[List[float]]] = Field(default_factory=dict)
    passive_blocks: Dict[str, MatrixPayload] = Field(default_factory=dict)
    cross_check: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, float] = Field(default_factory=dict)

    # Analysis
    classification: Dict[str, Any] = Field(default_factory=dict)
    bae: List[Dict[str, Any]] = Field(default_factory=list)
    special_cases: Dict[str, Any] = Field(default_factory=dict)
    passive_dfs: Optional[Dict[str, Any]] = None

    findings: List[Dict[str, Any]] = Field(default_factory=list)
