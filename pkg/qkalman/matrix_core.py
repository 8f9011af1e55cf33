"""
Doubled-up and symplectic matrix algebra.

Conventions:
    J_k   = diag(I_k, -I_k)
    JJ_k  = [[0, I_k], [-I_k, 0]]
    X#    = entrywise complex conjugate
    X♭    = J_r X† J_k            (flat adjoint of a 2k x 2r matrix)
    X♯    = -JJ_r X† JJ_k         (sharp adjoint)
    Δ(U, V) = [[U, V], [V#, U#]]  (doubled-up matrix)
    V_k   = (1/sqrt 2) [[I, I], [-iI, iI]]
"""

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qkalman.errors import DimensionError, SpecValidationError, StructureError

# Relative slack when deciding which entry of a vector is "the largest".
PHASE_TIE_RTOL = 1e-6


class StructureTolerance(BaseModel):
    """
    Tolerance policy used by every structural decision.

    rank_tol is relative to the largest singular value; all other knobs are
    absolute and measured in the entrywise max-norm.
    """

    model_config = ConfigDict(frozen=True)

    rank_tol: float = Field(default=1e-10, gt=0)
    zero_tol: float = Field(default=1e-9, gt=0)
    eig_tol: float = Field(default=1e-8, gt=0)
    classify_tol: float = Field(default=1e-7, gt=0)
    angle_tol: float = Field(default=1e-8, gt=0)
    hermitian_gate: float = Field(default=1e-6, gt=0)

    def override(self, **values) -> "StructureTolerance":
        """Return a copy with every non-None keyword applied (validated)."""
        updates = {k: v for k, v in values.items() if v is not None}
        if not updates:
            return self
        return StructureTolerance(**{**self.model_dump(), **updates})


DEFAULT_TOLERANCE = StructureTolerance()


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """
    Convert input to a finite 2-D complex128 array.

    Args:
        X: Anything numpy can turn into a 2-D array
        name: Field name used in error messages

    Returns:
        A new complex array
    """
    arr = np.array(X, dtype=complex)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional", field_path=name, expected="2-D array", found=f"{arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        bad = [tuple(int(i) for i in idx) for idx in np.argwhere(~np.isfinite(arr))[:5]]
        raise SpecValidationError(f"{name} has non-finite entries", field_path=name, expected="finite entries", found=bad)
    return arr


def half_dims(X: np.ndarray, name: str = "matrix") -> Tuple[int, int]:
    rows, cols = X.shape
    if rows % 2 or cols % 2:
        raise DimensionError(f"{name} must have even dimensions", field_path=name, expected="2k x 2r", found=f"{rows} x {cols}")
    return rows // 2, cols // 2


def max_norm(X) -> float:
    """Entrywise max-norm; 0.0 for empty arrays."""
    arr = np.asarray(X)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr)))


def sharp(X: np.ndarray) -> np.ndarray:
    return np.conj(X)


def j_matrix(k: int) -> np.ndarray:
    return np.diag(np.concatenate([np.ones(k), -np.ones(k)])).astype(complex)


def jj_matrix(k: int) -> np.ndarray:
    jj = np.zeros((2 * k, 2 * k), dtype=complex)
    jj[:k, k:] = np.eye(k)
    jj[k:, :k] = -np.eye(k)
    return jj


def v_matrix(k: int) -> np.ndarray:
    """The unitary V_k mapping [a; a#] to [q; p]."""
    V = np.zeros((2 * k, 2 * k), dtype=complex)
    eye = np.eye(k)
    V[:k, :k], V[:k, k:] = eye, eye
    V[k:, :k], V[k:, k:] = -1j * eye, 1j * eye
    return V / np.sqrt(2)


def flat_adjoint(X) -> np.ndarray:
    """
    Compute X♭ = J_r X† J_k for a 2k x 2r matrix X.

    Raises:
        DimensionError: if either dimension is odd
    """
    X = as_matrix(X, "X")
    k, r = half_dims(X, "X")
    out = X.conj().T.copy()
    out[r:, :] *= -1
    out[:, k:] *= -1
    return out


def sharp_adjoint(X) -> np.ndarray:
    """Compute X♯ = -JJ_r X† JJ_k for a 2k x 2r matrix X."""
    X = as_matrix(X, "X")
    k, r = half_dims(X, "X")
    return -jj_matrix(r) @ X.conj().T @ jj_matrix(k)


class DoubledUpMatrix(BaseModel):
    """
    A 2k x 2r matrix Δ(U, V) stored as its (U, V) blocks.

    Arithmetic is carried out on the blocks, so the result is doubled-up
    exactly, not just to rounding.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    U: np.ndarray
    V: np.ndarray

    @model_validator(mode="after")
    def _check_blocks(self):
        if self.U.shape != self.V.shape:
            raise DimensionError("U and V blocks must share a shape", field_path="V", expected=self.U.shape, found=self.V.shape)
        self.U.setflags(write=False)
        self.V.setflags(write=False)
        return self

    @property
    def half_rows(self) -> int:
        return self.U.shape[0]

    @property
    def half_cols(self) -> int:
        return self.U.shape[1]

    def materialize(self) -> np.ndarray:
        k, r = self.U.shape
        X = np.zeros((2 * k, 2 * r), dtype=complex)
        X[:k, :r], X[:k, r:] = self.U, self.V
        X[k:, :r], X[k:, r:] = sharp(self.V), sharp(self.U)
        return X

    def flat(self) -> "DoubledUpMatrix":
        return delta(self.U.conj().T, -self.V.T)

    def __add__(self, other: "DoubledUpMatrix") -> "DoubledUpMatrix":
        return delta(self.U + other.U, self.V + other.V)

    def __sub__(self, other: "DoubledUpMatrix") -> "DoubledUpMatrix":
        return delta(self.U - other.U, self.V - other.V)

    def __matmul__(self, other: "DoubledUpMatrix") -> "DoubledUpMatrix":
        if self.half_cols != other.half_rows:
            raise DimensionError("incompatible doubled-up shapes", expected=self.half_cols, found=other.half_rows)
        U = self.U @ other.U + self.V @ sharp(other.V)
        V = self.U @ other.V + self.V @ sharp(other.U)
        return delta(U, V)

    def scale(self, c: float) -> "DoubledUpMatrix":
        """Multiply by a real scalar (complex scalars break the structure)."""
        return delta(c * self.U, c * self.V)


def delta(U, V) -> DoubledUpMatrix:
    """Build Δ(U, V)."""
    return DoubledUpMatrix(U=as_matrix(U, "U").copy(), V=as_matrix(V, "V").copy())


def split_doubled_up(X, tol: StructureTolerance = DEFAULT_TOLERANCE, name: str = "matrix") -> DoubledUpMatrix:
    """
    Recover (U, V) from a materialized 2k x 2r matrix.

    Raises:
        StructureError: if the lower blocks differ from the conjugated upper blocks by more than zero_tol
    """
    X = as_matrix(X, name)
    k, r = half_dims(X, name)
    U, V = X[:k, :r], X[:k, r:]
    residual = max(max_norm(X[k:, :r] - sharp(V)), max_norm(X[k:, r:] - sharp(U)))
    if residual > tol.zero_tol:
        raise StructureError(f"{name} is not doubled-up", residuals={"block_symmetry": residual})
    return delta(U, V)


def doubled_up_residual(X) -> float:
    X = as_matrix(X)
    k, r = half_dims(X)
    return max(max_norm(X[k:, :r] - sharp(X[:k, r:])), max_norm(X[k:, r:] - sharp(X[:k, :r])))


def is_bogoliubov(T, tol: StructureTolerance = DEFAULT_TOLERANCE) -> bool:
    """
    Check whether T is doubled-up and satisfies T J T† = T† J T = J.

    Args:
        T: Square matrix of even dimension
        tol: zero_tol is used for every residual

    Returns:
        True if all three conditions hold within zero_tol
    """
    T = as_matrix(T, "T")
    if T.shape[0] != T.shape[1] or T.shape[0] % 2:
        return False
    k = T.shape[0] // 2
    J = j_matrix(k)
    if doubled_up_residual(T) > tol.zero_tol:
        return False
    return max_norm(T @ J @ T.conj().T - J) <= tol.zero_tol and max_norm(T.conj().T @ J @ T - J) <= tol.zero_tol


def is_symplectic(S, tol: StructureTolerance = DEFAULT_TOLERANCE) -> bool:
    """Check S JJ S† = S† JJ S = JJ within zero_tol."""
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1] or S.shape[0] % 2:
        return False
    JJ = jj_matrix(S.shape[0] // 2)
    return max_norm(S @ JJ @ S.conj().T - JJ) <= tol.zero_tol and max_norm(S.conj().T @ JJ @ S - JJ) <= tol.zero_tol


def hermitian_residual(X) -> float:
    X = as_matrix(X)
    return max_norm(X - X.conj().T)


def is_hermitian(X, tol: StructureTolerance = DEFAULT_TOLERANCE) -> bool:
    X = as_matrix(X)
    return X.shape[0] == X.shape[1] and hermitian_residual(X) <= tol.zero_tol


def symmetrize(X, tol: StructureTolerance = DEFAULT_TOLERANCE, name: str = "matrix") -> Tuple[np.ndarray, bool]:
    """
    Return the Hermitian part of X and whether it differed from X.

    Differences up to zero_tol are treated as exact. Anything between zero_tol
    and hermitian_gate is symmetrized; anything larger is rejected.

    Raises:
        SpecValidationError: if the asymmetry exceeds hermitian_gate
    """
    X = as_matrix(X, name)
    if X.shape[0] != X.shape[1]:
        raise DimensionError(f"{name} must be square", field_path=name, expected="square", found=X.shape)
    diff = np.abs(X - X.conj().T)
    asym = max_norm(diff)
    if asym > tol.hermitian_gate:
        pairs = [tuple(int(i) for i in idx) for idx in np.argwhere(diff > tol.hermitian_gate) if idx[0] <= idx[1]]
        raise SpecValidationError(
            f"{name} is not Hermitian",
            field_path=name,
            expected=f"asymmetry <= {tol.hermitian_gate:g}",
            found=pairs,
            residuals={"asymmetry": asym},
        )
    changed = asym > tol.zero_tol
    return (X + X.conj().T) / 2, changed


def phase_normalize(v: np.ndarray) -> np.ndarray:
    """
    Rotate v by a unit phase so its largest-magnitude entry is real positive.

    Near-ties (within PHASE_TIE_RTOL of the maximum) go to the earliest index.
    """
    mags = np.abs(v)
    if v.size == 0 or mags.max() == 0:
        return v
    idx = int(np.argmax(mags >= mags.max() * (1 - PHASE_TIE_RTOL)))
    return v * (np.conj(v[idx]) / mags[idx])


def sign_normalize(v: np.ndarray) -> np.ndarray:
    """
    Flip the sign of v so its largest-magnitude entry has positive real part,
    or positive imaginary part when the real part vanishes.

    Only a real sign is free for vectors whose doubled form must stay inside a
    fixed real structure.
    """
    mags = np.abs(v)
    if v.size == 0 or mags.max() == 0:
        return v
    idx = int(np.argmax(mags >= mags.max() * (1 - PHASE_TIE_RTOL)))
    anchor = v[idx]
    key = anchor.real if abs(anchor.real) > PHASE_TIE_RTOL * mags[idx] else anchor.imag
    return v if key >= 0 else -v


def markov_parameters(A, B, C, order: int) -> List[np.ndarray]:
    """
    Return [C B, C A B, ..., C A^(order-1) B].

    All of them vanish iff C (sI - A)^-1 B is identically zero (once order
    reaches the dimension of A).
    """
    A, B, C = np.asarray(A), np.asarray(B), np.asarray(C)
    params = []
    AkB = B
    for _ in range(order):
        params.append(C @ AkB)
        AkB = A @ AkB
    return params


def block_slices(sizes: List[int]) -> List[slice]:
    """Consecutive slices for a partition given by block sizes."""
    out, start = [], 0
    for size in sizes:
        out.append(slice(start, start + size))
        start += size
    return out


def permutation_matrix(order: List[int], dim: Optional[int] = None) -> np.ndarray:
    """Real matrix P with P[:, j] = e_{order[j]}, so X @ P reorders columns."""
    dim = len(order) if dim is None else dim
    P = np.zeros((dim, len(order)))
    for j, i in enumerate(order):
        P[i, j] = 1.0
    return P
