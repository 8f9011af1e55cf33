"""
Krylov matrices, SVD-based kernels and images, and the four Kalman subspaces.

Kernels and images count a singular value iff it exceeds rank_tol times
the largest one. Krylov bases are grown from orthonormal blocks under a
unit-norm generator, where the same rank_tol is read as an absolute floor.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from qkalman.errors import DimensionError, StructureError
from qkalman.matrix_core import DEFAULT_TOLERANCE, StructureTolerance, j_matrix, max_norm
from qkalman.system_model import PassiveQLSystem, QLSystem


class SubspaceBasis(BaseModel):
    """Orthonormal column basis of a subspace of C^ambient_dim."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ambient_dim: int
    basis: np.ndarray
    tol_used: StructureTolerance = DEFAULT_TOLERANCE

    @model_validator(mode="after")
    def _check_shape(self):
        if self.basis.ndim != 2 or self.basis.shape[0] != self.ambient_dim:
            raise DimensionError("basis rows must equal the ambient dimension", expected=self.ambient_dim, found=self.basis.shape)
        if self.basis.shape[1] > self.ambient_dim:
            raise DimensionError("subspace dimension exceeds the ambient dimension", expected=f"<= {self.ambient_dim}", found=self.basis.shape[1])
        return self

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def residual(self, vectors: np.ndarray) -> float:
        """Max-norm of the part of `vectors` outside this subspace."""
        vectors = np.asarray(vectors, dtype=complex).reshape(self.ambient_dim, -1)
        return max_norm(vectors - self.projector() @ vectors)


class KalmanSubspaces(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    R_co: SubspaceBasis
    R_cbar_obar: SubspaceBasis
    R_cobar: SubspaceBasis
    R_cbar_o: SubspaceBasis
    ker_Os: SubspaceBasis
    ker_OsJ: SubspaceBasis
    n1: int
    n2: int
    n3: int
    checks: Dict[str, float] = Field(default_factory=dict)


def empty_subspace(ambient_dim: int, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    return SubspaceBasis(ambient_dim=ambient_dim, basis=np.zeros((ambient_dim, 0), dtype=complex), tol_used=tol)


def full_space(ambient_dim: int, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    return SubspaceBasis(ambient_dim=ambient_dim, basis=np.eye(ambient_dim, dtype=complex), tol_used=tol)


def numerical_rank(singular_values: np.ndarray, tol: StructureTolerance = DEFAULT_TOLERANCE) -> int:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > tol.rank_tol * singular_values[0]))


def _krylov_basis(M: np.ndarray, X: np.ndarray, order: int, tol: StructureTolerance, early_stop: bool = True) -> np.ndarray:
    """
    Orthonormal basis of span[X, M X, ..., M^(order-1) X].

    M is scaled to unit 2-norm. Each step multiplies the directions found in
    the previous step by M, projects out the span built so far (twice) and
    keeps the singular directions above rank_tol. The loop stops once a step
    adds nothing, since the span is then M-invariant. With early_stop=False
    every step multiplies the whole basis and all order - 1 steps run.
    """
    M = np.asarray(M, dtype=complex)
    X = np.asarray(X, dtype=complex)
    n = M.shape[0]
    if order <= 0:
        return np.zeros((n, 0), dtype=complex)
    scale = linalg.norm(M, 2) if M.size else 0.0
    M_hat = M / scale if scale > 0 else M
    Q = image(X, tol).basis
    newest = Q
    for _ in range(order - 1):
        if Q.shape[1] == n or (early_stop and newest.shape[1] == 0):
            break
        Y = M_hat @ (newest if early_stop else Q)
        for _ in range(2):
            Y = Y - Q @ (Q.conj().T @ Y)
        U, s, _ = _svd(Y)
        newest = U[:, : int(np.sum(s > tol.rank_tol))]
        Q = np.hstack([Q, newest])
    return Q


def controllability_matrix(A, B, order: int, tol: StructureTolerance = DEFAULT_TOLERANCE, scaled: bool = True) -> np.ndarray:
    """
    Return [B, AB, ..., A^(order-1) B], or an orthonormal basis of its image.

    Args:
        A: n x n drift matrix
        B: n x k input matrix
        order: Number of blocks (2n for general systems, n for passive ones)
        tol: rank_tol decides which new Krylov directions are numerically zero
        scaled: Return the orthonormal Krylov basis (same image); False returns the raw powers

    Raises:
        DimensionError: if A and B do not conform
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape[0] != A.shape[1] or A.shape[0] != B.shape[0]:
        raise DimensionError("A and B do not conform", expected=f"{A.shape[0]} rows in B", found=B.shape)
    if scaled:
        return _krylov_basis(A, B, order, tol)
    blocks, block = [], B
    for _ in range(order):
        blocks.append(block)
        block = A @ block
    if not blocks:
        return np.zeros((A.shape[0], 0), dtype=complex)
    return np.hstack(blocks)


def observability_matrix(A, C, order: int, tol: StructureTolerance = DEFAULT_TOLERANCE, scaled: bool = True) -> np.ndarray:
    """Return the stacked [C; CA; ...; CA^(order-1)], or orthonormal rows spanning its row space."""
    A = np.asarray(A, dtype=complex)
    C = np.asarray(C, dtype=complex)
    if A.shape[0] != A.shape[1] or A.shape[1] != C.shape[1]:
        raise DimensionError("A and C do not conform", expected=f"{A.shape[1]} columns in C", found=C.shape)
    if scaled:
        return _krylov_basis(A.conj().T, C.conj().T, order, tol).conj().T
    blocks, block = [], C
    for _ in range(order):
        blocks.append(block)
        block = block @ A
    if not blocks:
        return np.zeros((0, A.shape[1]), dtype=complex)
    return np.vstack(blocks)


def auxiliary_observability_matrix(system, tol: StructureTolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    """
    The auxiliary matrix O_s.

    General systems: rows 𝒞 (J_n Ω)^k for k < 2n.
    Passive systems: rows C₋ Ω₋^k for k < n.
    """
    if isinstance(system, PassiveQLSystem):
        return observability_matrix(system.omega_minus, system.c_minus, system.n, tol)
    generator = j_matrix(system.n) @ system.omega.materialize()
    return observability_matrix(generator, system.C, 2 * system.n, tol)


def _svd(X: np.ndarray):
    rows, cols = X.shape
    if rows == 0 or cols == 0:
        return np.eye(rows, dtype=complex), np.zeros(0), np.eye(cols, dtype=complex)
    return linalg.svd(X, full_matrices=True)


def kernel(X, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    """Right null space of X from the trailing right singular vectors."""
    X = np.asarray(X, dtype=complex)
    _, s, Vh = _svd(X)
    r = numerical_rank(s, tol)
    return SubspaceBasis(ambient_dim=X.shape[1], basis=Vh[r:].conj().T.copy(), tol_used=tol)


def image(X, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    """Column space of X from the leading left singular vectors."""
    X = np.asarray(X, dtype=complex)
    U, s, _ = _svd(X)
    r = numerical_rank(s, tol)
    return SubspaceBasis(ambient_dim=X.shape[0], basis=U[:, :r].copy(), tol_used=tol)


def complement(S: SubspaceBasis) -> SubspaceBasis:
    """Orthogonal complement: the left singular directions not used by S."""
    if S.dim == 0:
        return full_space(S.ambient_dim, S.tol_used)
    U, _, _ = linalg.svd(S.basis, full_matrices=True)
    return SubspaceBasis(ambient_dim=S.ambient_dim, basis=U[:, S.dim:].copy(), tol_used=S.tol_used)


orthogonal_complement = complement


def orthonormalize(vectors: np.ndarray, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    return image(vectors, tol)


def intersect(S1: SubspaceBasis, S2: SubspaceBasis, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    """
    Intersection by principal angles.

    Directions whose cosine is at least 1 - zero_tol are taken as common.

    Raises:
        DimensionError: if the ambient dimensions differ
    """
    if S1.ambient_dim != S2.ambient_dim:
        raise DimensionError("ambient dimensions differ", expected=S1.ambient_dim, found=S2.ambient_dim)
    if S1.dim == 0 or S2.dim == 0:
        return empty_subspace(S1.ambient_dim, tol)
    U, s, _ = linalg.svd(S1.basis.conj().T @ S2.basis)
    k = int(np.sum(s >= 1 - tol.zero_tol))
    if k == 0:
        return empty_subspace(S1.ambient_dim, tol)
    common = S1.basis @ U[:, :k]
    Q, _ = linalg.qr(common, mode="economic")
    return SubspaceBasis(ambient_dim=S1.ambient_dim, basis=Q, tol_used=tol)


def apply(M, S: SubspaceBasis, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SubspaceBasis:
    """
    The subspace M·S.

    Directions of M·S whose singular value is at most zero_tol·max(1, ‖M‖₂)
    are dropped as absolute zeros, so a basis vector that M annihilates does
    not come back as a unit direction made of rounding noise.
    """
    M = np.asarray(M, dtype=complex)
    if S.dim == 0:
        return empty_subspace(M.shape[0], tol)
    U, s, _ = _svd(M @ S.basis)
    floor = tol.zero_tol * max(1.0, float(linalg.norm(M, 2)))
    return SubspaceBasis(ambient_dim=M.shape[0], basis=U[:, : int(np.sum(s > floor))].copy(), tol_used=tol)


def invariance_residual(M, S: SubspaceBasis) -> float:
    """‖(I - P_S) M Q_S‖₂ / max(1, ‖M‖₂): zero iff M·S ⊆ S."""
    M = np.asarray(M, dtype=complex)
    if S.dim == 0:
        return 0.0
    mapped = M @ S.basis
    outside = mapped - S.basis @ (S.basis.conj().T @ mapped)
    return float(linalg.norm(outside, 2)) / max(1.0, float(linalg.norm(M, 2)))


def unitary_map(U, S: SubspaceBasis) -> SubspaceBasis:
    """U·S for a unitary U (J_n, for instance); the basis stays orthonormal."""
    return SubspaceBasis(ambient_dim=S.ambient_dim, basis=np.asarray(U, dtype=complex) @ S.basis, tol_used=S.tol_used)


def principal_angles(S1: SubspaceBasis, S2: SubspaceBasis) -> np.ndarray:
    if S1.dim == 0 or S2.dim == 0:
        return np.zeros(0)
    return linalg.subspace_angles(S1.basis, S2.basis)


def max_containment_sine(S1: SubspaceBasis, S2: SubspaceBasis) -> float:
    """‖(I - P_2) Q_1‖₂: zero iff S1 ⊆ S2."""
    if S1.dim == 0:
        return 0.0
    if S2.dim == 0:
        return 1.0
    outside = S1.basis - S2.basis @ (S2.basis.conj().T @ S1.basis)
    return float(linalg.norm(outside, 2))


def same_subspace(S1: SubspaceBasis, S2: SubspaceBasis, angle_tol: Optional[float] = None) -> bool:
    angle_tol = S1.tol_used.angle_tol if angle_tol is None else angle_tol
    if S1.dim != S2.dim:
        return False
    return max(max_containment_sine(S1, S2), max_containment_sine(S2, S1)) <= angle_tol


def krylov_image(A, B, order: int, tol: StructureTolerance = DEFAULT_TOLERANCE, early_stop: bool = True) -> SubspaceBasis:
    """
    Image of [B, AB, ...], stopping as soon as a step adds no new direction.

    Once the rank stalls the Krylov space is A-invariant, so the early stop
    gives the same image as the full expansion.
    """
    A = np.asarray(A, dtype=complex)
    basis = _krylov_basis(A, np.asarray(B, dtype=complex), order, tol, early_stop=early_stop)
    return SubspaceBasis(ambient_dim=A.shape[0], basis=basis, tol_used=tol)


def _orthogonality(S1: SubspaceBasis, S2: SubspaceBasis) -> float:
    if S1.dim == 0 or S2.dim == 0:
        return 0.0
    return max_norm(S1.basis.conj().T @ S2.basis)


def kalman_subspaces(system: QLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE, cross_check: bool = True) -> KalmanSubspaces:
    """
    Compute R_co, R_c̄ō, R_cō and R_c̄o from Ker(O_s) and Ker(O_s J_n).

    Args:
        system: A general (doubled-up) linear quantum system
        tol: Tolerance policy
        cross_check: Also confirm Ker(O_G) = Ker(O_s) and Ker(C_G†) = Ker(O_s J_n)

    Returns:
        KalmanSubspaces with n1, n2, n3 and the residuals of every check

    Raises:
        StructureError: if any of the structural invariants fails
    """
    n = system.n
    J = j_matrix(n)
    O_s = auxiliary_observability_matrix(system, tol)
    ker_Os = kernel(O_s, tol)
    ker_OsJ = kernel(O_s @ J, tol)
    perp_Os = complement(ker_Os)
    perp_OsJ = complement(ker_OsJ)

    R_cobar = intersect(perp_OsJ, ker_Os, tol)
    R_co = intersect(perp_OsJ, perp_Os, tol)
    R_cbar_obar = intersect(ker_OsJ, ker_Os, tol)
    R_cbar_o = intersect(ker_OsJ, perp_Os, tol)

    checks = {}
    dims = {"co": R_co.dim, "cbar_obar": R_cbar_obar.dim, "cobar": R_cobar.dim, "cbar_o": R_cbar_o.dim}
    if sum(dims.values()) != 2 * n:
        raise StructureError("Kalman subspaces do not add up to the state space", residuals={**dims, "expected_total": 2 * n})
    if R_co.dim % 2 or R_cbar_obar.dim % 2 or R_cobar.dim != R_cbar_o.dim:
        raise StructureError("Kalman subspace dimensions violate the pairing rules", residuals=dims)

    spaces = {"co": R_co, "cbar_obar": R_cbar_obar, "cobar": R_cobar, "cbar_o": R_cbar_o}
    names = list(spaces)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            checks[f"orth_{a}_{b}"] = _orthogonality(spaces[a], spaces[b])
    worst = max(checks.values()) if checks else 0.0
    if worst > tol.zero_tol:
        raise StructureError("Kalman subspaces are not pairwise orthogonal", residuals=checks)

    j_checks = {
        "J_cobar_vs_cbar_o": _mapping_residual(unitary_map(J, R_cbar_o), R_cobar),
        "J_co_vs_co": _mapping_residual(unitary_map(J, R_co), R_co),
        "J_cbar_obar_vs_cbar_obar": _mapping_residual(unitary_map(J, R_cbar_obar), R_cbar_obar),
        "J_ker_OsJ_vs_ker_Os": _mapping_residual(unitary_map(J, ker_OsJ), ker_Os),
    }
    checks.update(j_checks)
    if max(j_checks.values()) > tol.angle_tol:
        raise StructureError("J-mapping relations between Kalman subspaces fail", residuals=j_checks)

    if cross_check:
        identity_checks = observability_identities(system, tol, ker_Os=ker_Os, ker_OsJ=ker_OsJ)
        checks.update(identity_checks)
        if max(identity_checks.values()) > tol.angle_tol:
            raise StructureError("Krylov kernels disagree with the auxiliary kernels", residuals=identity_checks)

    return KalmanSubspaces(
        R_co=R_co,
        R_cbar_obar=R_cbar_obar,
        R_cobar=R_cobar,
        R_cbar_o=R_cbar_o,
        ker_Os=ker_Os,
        ker_OsJ=ker_OsJ,
        n1=R_co.dim // 2,
        n2=R_cbar_obar.dim // 2,
        n3=R_cobar.dim,
        checks=checks,
    )


def _mapping_residual(S1: SubspaceBasis, S2: SubspaceBasis) -> float:
    if S1.dim != S2.dim:
        return 1.0
    return max(max_containment_sine(S1, S2), max_containment_sine(S2, S1))


def observability_identities(
    system: QLSystem,
    tol: StructureTolerance = DEFAULT_TOLERANCE,
    ker_Os: Optional[SubspaceBasis] = None,
    ker_OsJ: Optional[SubspaceBasis] = None,
) -> Dict[str, float]:
    """Residuals of Ker(O_G) = Ker(O_s) and Ker(C_G†) = Ker(O_s J_n)."""
    n = system.n
    if ker_Os is None or ker_OsJ is None:
        O_s = auxiliary_observability_matrix(system, tol)
        ker_Os = kernel(O_s, tol)
        ker_OsJ = kernel(O_s @ j_matrix(n), tol)
    ker_OG = kernel(observability_matrix(system.A, system.C, 2 * n, tol), tol)
    uncontrollable = complement(image(controllability_matrix(system.A, system.B, 2 * n, tol), tol))
    return {
        "ker_OG_vs_ker_Os": _mapping_residual(ker_OG, ker_Os),
        "ker_CGdag_vs_ker_OsJ": _mapping_residual(uncontrollable, ker_OsJ),
    }


def passive_subspaces(system: PassiveQLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE) -> Tuple[SubspaceBasis, SubspaceBasis]:
    """
    Controllable subspace Im(C_G) and its complement Ker(C_G†) for a passive system.

    Raises:
        StructureError: if Ker(C_G†) and Ker(O_G) differ beyond angle_tol
    """
    controllable = image(controllability_matrix(system.A, system.B, system.n, tol), tol)
    uncontrollable = complement(controllable)
    unobservable = kernel(observability_matrix(system.A, system.C, system.n, tol), tol)
    residual = _mapping_residual(uncontrollable, unobservable)
    if residual > tol.angle_tol:
        raise StructureError(
            "uncontrollable and unobservable subspaces of a passive system differ",
            residuals={"principal_sine": residual, "dim_uncontrollable": uncontrollable.dim, "dim_unobservable": unobservable.dim},
        )
    return controllable, uncontrollable
