"""
Linear quantum systems in the annihilation-creation and the real quadrature
representation.

Variable ordering is [a_1..a_n, a_1*..a_n*] for the complex representation
and [q_1..q_n, p_1..p_n] for the real one; fields are ordered the same way.
"""

import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from qkalman.errors import (
    DimensionError,
    InternalConsistencyError,
    PoleProximityError,
    SpecValidationError,
    SymmetrizationWarning,
)
from qkalman.matrix_core import (
    DEFAULT_TOLERANCE,
    DoubledUpMatrix,
    StructureTolerance,
    as_matrix,
    delta,
    flat_adjoint,
    jj_matrix,
    max_norm,
    sharp_adjoint,
    split_doubled_up,
    symmetrize,
    v_matrix,
)

REPRESENTATIONS = ("complex", "passive", "real")

# Eigenvalues closer than this are treated as one cluster (multiple or defective).
CLUSTER_RADIUS = 1e-5


class QLSystem(BaseModel):
    """General linear quantum system (Ω = Δ(Ω₋, Ω₊), 𝒞 = Δ(C₋, C₊))."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    m: int
    omega: DoubledUpMatrix
    coupling: DoubledUpMatrix
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: Optional[str] = None

    @property
    def omega_minus(self) -> np.ndarray:
        return self.omega.U

    @property
    def omega_plus(self) -> np.ndarray:
        return self.omega.V

    @property
    def c_minus(self) -> np.ndarray:
        return self.coupling.U

    @property
    def c_plus(self) -> np.ndarray:
        return self.coupling.V


class PassiveQLSystem(BaseModel):
    """Passive system in the annihilation-only representation."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    m: int
    omega_minus: np.ndarray
    c_minus: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: Optional[str] = None


class RealQLSystem(BaseModel):
    """Real quadrature representation; H is the real symmetric Hamiltonian matrix."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    m: int
    H: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: Optional[str] = None


class RealizabilityReport(BaseModel):
    representation: str
    residuals: Dict[str, float]
    passed: bool
    tolerance: float


def _check_shape(X: np.ndarray, shape, name: str):
    if X.shape != tuple(shape):
        raise DimensionError(f"{name} has the wrong shape", field_path=name, expected=f"{shape[0]} x {shape[1]}", found=f"{X.shape[0]} x {X.shape[1]}")


def _optional_block(X, empty_shape, name: str) -> np.ndarray:
    """An empty input stands for a zero block of empty_shape."""
    if np.size(X) == 0:
        return np.zeros(empty_shape, dtype=complex)
    X = as_matrix(X, name)
    if empty_shape[0]:
        _check_shape(X, empty_shape, name)
    return X


def _hermitian_input(X: np.ndarray, tol: StructureTolerance, name: str) -> np.ndarray:
    X_h, changed = symmetrize(X, tol, name)
    if changed:
        warnings.warn(f"{name} was not exactly Hermitian and has been symmetrized", SymmetrizationWarning, stacklevel=3)
    return X_h


def build_general(
    omega_minus,
    omega_plus,
    c_minus,
    c_plus,
    tol: StructureTolerance = DEFAULT_TOLERANCE,
    name: Optional[str] = None,
) -> QLSystem:
    """
    Build a general linear quantum system from its physical parameters.

    Args:
        omega_minus, omega_plus: n x n blocks of the Hamiltonian matrix Ω = Δ(Ω₋, Ω₊)
        c_minus, c_plus: m x n blocks of the coupling matrix 𝒞 = Δ(C₋, C₊)
        tol: Tolerance policy (hermitian_gate decides symmetrize-or-reject)
        name: Optional label carried along for reports

    Returns:
        QLSystem with 𝒟 = I, ℬ = -𝒞♭ and 𝒜 = -iJΩ - ½𝒞♭𝒞
    """
    omega_minus = as_matrix(omega_minus, "Omega_minus")
    n = omega_minus.shape[0]
    _check_shape(omega_minus, (n, n), "Omega_minus")
    omega_plus = _optional_block(omega_plus, (n, n), "Omega_plus")
    c_minus = _optional_block(c_minus, (0, n), "Cminus")
    m = c_minus.shape[0]
    _check_shape(c_minus, (m, n), "Cminus")
    c_plus = _optional_block(c_plus, (m, n), "Cplus")
    _check_shape(c_plus, (m, n), "Cplus")

    omega_full = _hermitian_input(delta(omega_minus, omega_plus).materialize(), tol, "Omega")
    omega = delta(omega_full[:n, :n], omega_full[:n, n:])
    coupling = delta(c_minus, c_plus)

    drift = delta(-1j * omega.U, -1j * omega.V) - (coupling.flat() @ coupling).scale(0.5)
    A = drift.materialize()
    C = coupling.materialize()
    B = -coupling.flat().materialize()
    D = np.eye(2 * m, dtype=complex)

    system = QLSystem(n=n, m=m, omega=omega, coupling=coupling, A=A, B=B, C=C, D=D, name=name)
    report = check_realizability(A, B, C, "complex", tol)
    if not report.passed:
        raise InternalConsistencyError("constructed system is not physically realizable", residuals=report.residuals)
    return system


def build_passive(omega_minus, c_minus, tol: StructureTolerance = DEFAULT_TOLERANCE, name: Optional[str] = None) -> PassiveQLSystem:
    """
    Build a passive system: A = -iΩ₋ - ½C₋†C₋, B = -C₋†, C = C₋, D = I.
    """
    omega_minus = as_matrix(omega_minus, "Omega_minus")
    n = omega_minus.shape[0]
    _check_shape(omega_minus, (n, n), "Omega_minus")
    c_minus = _optional_block(c_minus, (0, n), "Cminus")
    m = c_minus.shape[0]
    _check_shape(c_minus, (m, n), "Cminus")
    omega_minus = _hermitian_input(omega_minus, tol, "Omega_minus")

    A = -1j * omega_minus - 0.5 * c_minus.conj().T @ c_minus
    B = -c_minus.conj().T
    system = PassiveQLSystem(
        n=n, m=m, omega_minus=omega_minus, c_minus=c_minus, A=A, B=B, C=c_minus.copy(), D=np.eye(m, dtype=complex), name=name
    )
    report = check_realizability(A, B, system.C, "passive", tol)
    if not report.passed:
        raise InternalConsistencyError("constructed passive system is not physically realizable", residuals=report.residuals)
    return system


def embed_passive(system: PassiveQLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE) -> QLSystem:
    """View a passive system as a general one with Ω₊ = 0 and C₊ = 0."""
    n, m = system.n, system.m
    return build_general(
        system.omega_minus, np.zeros((n, n)), system.c_minus, np.zeros((m, n)), tol, name=system.name
    )


def build_real(H, C, tol: StructureTolerance = DEFAULT_TOLERANCE, name: Optional[str] = None) -> RealQLSystem:
    """
    Build a real quadrature system from H and C: A = JJ H - ½C♯C, B = -C♯.
    """
    H = as_matrix(H, "H")
    if max_norm(H.imag) > tol.zero_tol:
        raise SpecValidationError("H must be real", field_path="H", expected="real entries", found=f"imag part {max_norm(H.imag):.3e}")
    rows, cols = H.shape
    if rows != cols or rows % 2:
        raise DimensionError("H must be square with even dimension", field_path="H", expected="2n x 2n", found=f"{rows} x {cols}")
    n = rows // 2
    C = _optional_block(C, (0, 2 * n), "C")
    if C.shape[1] != 2 * n or C.shape[0] % 2:
        raise DimensionError("C has the wrong shape", field_path="C", expected=f"2m x {2 * n}", found=f"{C.shape[0]} x {C.shape[1]}")
    if max_norm(C.imag) > tol.zero_tol:
        raise SpecValidationError("C must be real", field_path="C", expected="real entries", found=f"imag part {max_norm(C.imag):.3e}")
    m = C.shape[0] // 2
    H = _hermitian_input(H.real.astype(complex), tol, "H").real
    C = C.real

    C_sharp = sharp_adjoint(C).real
    A = (jj_matrix(n).real @ H - 0.5 * C_sharp @ C)
    B = -C_sharp
    system = RealQLSystem(n=n, m=m, H=H, A=A, B=B, C=C, D=np.eye(2 * m), name=name)
    report = check_realizability(A, B, C, "real", tol)
    if not report.passed:
        raise InternalConsistencyError("constructed real system is not physically realizable", residuals=report.residuals)
    return system


def _realify(X: np.ndarray, tol: StructureTolerance, label: str) -> np.ndarray:
    residue = max_norm(X.imag)
    if residue > tol.zero_tol:
        raise InternalConsistencyError(f"{label} has an imaginary residue after the change of basis", residuals={label: residue})
    return X.real.copy()


def to_real(system: QLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE) -> RealQLSystem:
    """
    Convert to the real quadrature representation via V_n and V_m.

    Raises:
        InternalConsistencyError: if any transformed matrix is not real within zero_tol
    """
    Vn, Vm = v_matrix(system.n), v_matrix(system.m)
    A = _realify(Vn @ system.A @ Vn.conj().T, tol, "A")
    B = _realify(Vn @ system.B @ Vm.conj().T, tol, "B")
    C = _realify(Vm @ system.C @ Vn.conj().T, tol, "C")
    D = _realify(Vm @ system.D @ Vm.conj().T, tol, "D")
    H = _realify(Vn @ system.omega.materialize() @ Vn.conj().T, tol, "H")
    H = (H + H.T) / 2
    return RealQLSystem(n=system.n, m=system.m, H=H, A=A, B=B, C=C, D=D, name=system.name)


def to_complex(system: RealQLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE) -> QLSystem:
    """Inverse of to_real: recover Ω and 𝒞 from H and C and rebuild the system."""
    Vn, Vm = v_matrix(system.n), v_matrix(system.m)
    omega = split_doubled_up(Vn.conj().T @ system.H @ Vn, tol, "Omega")
    coupling = split_doubled_up(Vm.conj().T @ system.C @ Vn, tol, "Cmat")
    return build_general(omega.U, omega.V, coupling.U, coupling.V, tol, name=system.name)


def check_realizability(A, B, C, representation: str, tol: StructureTolerance = DEFAULT_TOLERANCE) -> RealizabilityReport:
    """
    Evaluate the physical realizability conditions.

    Args:
        A, B, C: System matrices in the given representation
        representation: "complex" (♭-adjoint), "passive" (Hermitian adjoint) or "real" (♯-adjoint)
        tol: zero_tol decides pass/fail

    Returns:
        RealizabilityReport with the max-norm residual of each condition
    """
    if representation not in REPRESENTATIONS:
        raise SpecValidationError("unknown representation", field_path="representation", expected=list(REPRESENTATIONS), found=representation)
    A, B, C = (np.asarray(X, dtype=complex) for X in (A, B, C))
    if representation == "complex":
        adj = flat_adjoint
    elif representation == "real":
        adj = sharp_adjoint
    else:
        def adj(X):
            return X.conj().T

    residuals = {
        "dynamics": max_norm(A + adj(A) + B @ adj(B)),
        "coupling": max_norm(B + adj(C)),
    }
    return RealizabilityReport(
        representation=representation,
        residuals=residuals,
        passed=all(r <= tol.zero_tol for r in residuals.values()),
        tolerance=tol.zero_tol,
    )


def evaluate_transfer(A, B, C, D, s: complex, tol: StructureTolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    """
    Evaluate Ξ(s) = D - C (sI - A)^-1 B with a linear solve.

    Raises:
        PoleProximityError: if s lies within eig_tol of an eigenvalue of A
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    C = np.asarray(C, dtype=complex)
    D = np.asarray(D, dtype=complex)
    if A.shape[0] == 0:
        return D.copy()
    eigs = linalg.eigvals(A)
    nearest = eigs[np.argmin(np.abs(eigs - s))]
    if abs(nearest - s) <= tol.eig_tol:
        raise PoleProximityError(f"s = {s} is at a pole of the transfer function", nearest_eigenvalue=complex(nearest), residuals={"distance": abs(nearest - s)})
    X = linalg.solve(s * np.eye(A.shape[0]) - A, B)
    return D - C @ X


def transfer_function(system: RealQLSystem, s: complex, tol: StructureTolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    return evaluate_transfer(system.A, system.B, system.C, system.D, s, tol)


def spectrum(A) -> np.ndarray:
    """Eigenvalues sorted by (real, imag)."""
    A = np.asarray(A, dtype=complex)
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    eigs = linalg.eigvals(A)
    return eigs[np.lexsort((eigs.imag, eigs.real))]


def eigen_clusters(values: Sequence[complex], radius: float) -> List[List[int]]:
    """Single-linkage clusters of indices whose values lie within radius of each other."""
    values = np.asarray(values, dtype=complex)
    clusters: List[List[int]] = []
    unassigned = list(range(values.size))
    while unassigned:
        members = [unassigned.pop(0)]
        grew = True
        while grew:
            grew = False
            for idx in list(unassigned):
                if np.min(np.abs(values[members] - values[idx])) <= radius:
                    members.append(idx)
                    unassigned.remove(idx)
                    grew = True
        clusters.append(members)
    return clusters


def multiset_close(first: Sequence[complex], second: Sequence[complex], tol: float, radius: float = CLUSTER_RADIUS) -> bool:
    """
    Compare two eigenvalue multisets.

    Eigenvalues are pooled and clustered; each cluster must hold the same
    number of values from both sides, and the two cluster means must agree
    within tol. Means stay accurate for defective eigenvalues, whose
    individual computed values spread like sqrt(eps).
    """
    first = np.asarray(first, dtype=complex)
    second = np.asarray(second, dtype=complex)
    if first.size != second.size:
        return False
    pooled = np.concatenate([first, second])
    for members in eigen_clusters(pooled, radius):
        left = [i for i in members if i < first.size]
        right = [i for i in members if i >= first.size]
        if len(left) != len(right):
            return False
        if left and abs(pooled[left].mean() - pooled[right].mean()) > tol:
            return False
    return True


def is_hurwitz(A, tol: StructureTolerance = DEFAULT_TOLERANCE) -> bool:
    eigs = spectrum(A)
    return bool(np.all(eigs.real < -tol.eig_tol))
