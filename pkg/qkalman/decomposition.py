"""
Kalman canonical forms of linear quantum systems.

The general path builds a unitary, blockwise Bogoliubov T from the four
Kalman subspaces and its real orthogonal, blockwise symplectic counterpart
S. The passive path splits C^n into the controllable subspace and the
decoherence-free subspace with a single unitary.

Block order of T is (h, co, c̄ō). Real canonical variables are ordered
(q_h, p_h, x_co, x_c̄ō); the rearranged form uses (q_h, x_co, x_c̄ō, p_h).
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from qkalman.errors import InternalConsistencyError, StructureError, ToleranceError
from qkalman.matrix_core import (
    DEFAULT_TOLERANCE,
    StructureTolerance,
    block_slices,
    flat_adjoint,
    is_bogoliubov,
    is_symplectic,
    j_matrix,
    jj_matrix,
    markov_parameters,
    max_norm,
    permutation_matrix,
    phase_normalize,
    sign_normalize,
    v_matrix,
)
from qkalman.subspaces import KalmanSubspaces, SubspaceBasis, kalman_subspaces, kernel, max_containment_sine, passive_subspaces
from qkalman.system_model import (
    CLUSTER_RADIUS,
    PassiveQLSystem,
    QLSystem,
    eigen_clusters,
    embed_passive,
    is_hurwitz,
    multiset_close,
    spectrum,
    to_real,
)

_ARRAYS = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class BlockBases(BaseModel):
    """Half-bases of the co (Z1), c̄ō (Z2) and h (X, Y) sectors, each n x k."""

    model_config = _ARRAYS

    Z1: np.ndarray
    Z2: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    @property
    def Z3(self) -> np.ndarray:
        return np.hstack([self.X, self.Y])

    @property
    def n1(self) -> int:
        return self.Z1.shape[1]

    @property
    def n2(self) -> int:
        return self.Z2.shape[1]

    @property
    def na(self) -> int:
        return self.X.shape[1]

    @property
    def nb(self) -> int:
        return self.Y.shape[1]

    @property
    def n3(self) -> int:
        return self.na + self.nb

    def gram_residuals(self) -> Dict[str, float]:
        blocks = {"Z1": self.Z1, "Z2": self.Z2, "X": self.X, "Y": self.Y}
        out = {}
        for name, Z in blocks.items():
            out[f"{name}_orthonormal"] = max_norm(Z.conj().T @ Z - np.eye(Z.shape[1]))
        out["X_Y_orthogonal"] = max_norm(self.X.conj().T @ self.Y)
        pairs = (("Z1", self.Z1, "Z2", self.Z2), ("Z1", self.Z1, "Z3", self.Z3), ("Z2", self.Z2, "Z3", self.Z3))
        for a, Za, b, Zb in pairs:
            out[f"{a}_{b}_orthogonal"] = max_norm(Za.conj().T @ Zb)
        return out


class ComplexCanonicalForm(BaseModel):
    """𝒜̄ = T†𝒜T, ℬ̄ = T†ℬ, 𝒞̄ = 𝒞T with the named blocks."""

    model_config = _ARRAYS

    A_bar: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray
    blocks: Dict[str, np.ndarray]
    sizes: Dict[str, int]


class RealCanonicalForm(BaseModel):
    """Ā = SᵀAS, B̄ = SᵀB, C̄ = CS in (q_h, p_h, x_co, x_c̄ō) order, plus the rearranged form."""

    model_config = _ARRAYS

    A_bar: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray
    blocks: Dict[str, np.ndarray]
    labels: List[str]
    rearranged_A: np.ndarray
    rearranged_B: np.ndarray
    rearranged_C: np.ndarray
    rearranged_labels: List[str]
    sizes: Dict[str, int]


class EigenDFS(BaseModel):
    """Imaginary-axis eigenstructure of a passive drift matrix."""

    model_config = _ARRAYS

    hurwitz: bool
    span: SubspaceBasis
    clusters: List[Dict[str, object]] = Field(default_factory=list)
    kernel_vs_eigen_sine: float = 0.0


class PassiveCanonicalForm(BaseModel):
    """Passive blocks in the annihilation-only representation."""

    model_config = _ARRAYS

    T: np.ndarray
    A_co: np.ndarray
    A_df: np.ndarray
    B_co: np.ndarray
    C_co: np.ndarray
    eigen: EigenDFS


class KalmanResult(BaseModel):
    model_config = _ARRAYS

    source: str
    n: int
    m: int
    blocks: BlockBases
    T_tilde: np.ndarray
    T: np.ndarray
    S_tilde: np.ndarray
    S: np.ndarray
    Pi: np.ndarray
    complex_form: ComplexCanonicalForm
    real_form: RealCanonicalForm
    passive_form: Optional[PassiveCanonicalForm] = None
    subspaces: Optional[KalmanSubspaces] = None
    variables: Dict[str, np.ndarray] = Field(default_factory=dict)
    modes: Dict[str, np.ndarray] = Field(default_factory=dict)
    checks: Dict[str, float] = Field(default_factory=dict)

    @property
    def n1(self) -> int:
        return self.blocks.n1

    @property
    def n2(self) -> int:
        return self.blocks.n2

    @property
    def n3(self) -> int:
        return self.blocks.n3

    @property
    def na(self) -> int:
        return self.blocks.na

    @property
    def nb(self) -> int:
        return self.blocks.nb

    def dims(self) -> Dict[str, int]:
        return {"n1": self.n1, "n2": self.n2, "n3": self.n3, "na": self.na, "nb": self.nb}


def _columns(vectors: List[np.ndarray], n: int) -> np.ndarray:
    if not vectors:
        return np.zeros((n, 0), dtype=complex)
    return np.column_stack(vectors)


def _doubled(Z: np.ndarray) -> np.ndarray:
    """[[Z, 0], [0, Z#]]."""
    n, k = Z.shape
    out = np.zeros((2 * n, 2 * k), dtype=complex)
    out[:n, :k] = Z
    out[n:, k:] = np.conj(Z)
    return out


def build_paired_basis(S: SubspaceBasis, n: int, tol: StructureTolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    """
    Half-basis Z with span([[Z, 0], [0, Z#]]) = S for a J-self-mapped subspace S.

    Each step takes the largest remaining column [e; f] of the deflated basis,
    keeps the larger of e and f# as the new column z, and deflates both [z; 0]
    and [0; z#].

    Raises:
        StructureError: if S has odd dimension, if a paired vector falls outside S,
            or if S is not exhausted after dim/2 steps
    """
    if S.dim % 2:
        raise StructureError("paired subspace has odd dimension", residuals={"dim": S.dim})
    W = S.basis.copy()
    columns: List[np.ndarray] = []
    for step in range(S.dim // 2):
        norms = np.linalg.norm(W, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= tol.classify_tol:
            raise StructureError("paired subspace exhausted early", residuals={"step": step, "remaining_norm": float(norms[j])})
        w = W[:, j] / norms[j]
        e, f = w[:n], w[n:]
        z = e if np.linalg.norm(e) >= np.linalg.norm(f) else np.conj(f)
        if columns:
            Z = _columns(columns, n)
            z = z - Z @ (Z.conj().T @ z)
        z = phase_normalize(z / np.linalg.norm(z))
        pair = _doubled(z.reshape(n, 1))
        residual = S.residual(pair)
        if residual > tol.angle_tol:
            raise StructureError("subspace is not closed under the e/f split", residuals={"step": step, "outside": residual})
        W = W - pair @ (pair.conj().T @ W)
        columns.append(z)
    leftover = float(np.max(np.linalg.norm(W, axis=0))) if W.size else 0.0
    if leftover > tol.classify_tol:
        raise StructureError("paired subspace not exhausted", residuals={"remaining_norm": leftover})
    return _columns(columns, n)


def build_h_basis(R_cobar: SubspaceBasis, n: int, tol: StructureTolerance = DEFAULT_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Construct X and Y for the h-sector from R_cō.

    At each step a unit candidate [u; v] is taken from the part of R_cō not
    yet covered and phase-normalized. If ‖u + v#‖ exceeds classify_tol it
    yields x ∝ u + v# (emitting [x; x#]/√2), otherwise y ∝ u - v# (emitting
    [y; -y#]/√2). The emitted complex line is deflated before the next step.

    Returns:
        (X, Y) with X†X = I, Y†Y = I and X†Y = 0

    Raises:
        StructureError: on non-termination, vectors outside R_cō or Gram residuals above zero_tol
    """
    W = R_cobar.basis.copy()
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    for step in range(R_cobar.dim):
        norms = np.linalg.norm(W, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= tol.classify_tol:
            raise StructureError("h-sector subspace exhausted early", residuals={"step": step, "remaining_norm": float(norms[j])})
        w = phase_normalize(W[:, j] / norms[j])
        u, v = w[:n], w[n:]
        symmetric = u + np.conj(v)
        if np.linalg.norm(symmetric) > tol.classify_tol * np.linalg.norm(w):
            x = sign_normalize(symmetric / np.linalg.norm(symmetric))
            emitted = np.concatenate([x, np.conj(x)]) / np.sqrt(2)
            xs.append(x)
        else:
            antisymmetric = u - np.conj(v)
            y = sign_normalize(antisymmetric / np.linalg.norm(antisymmetric))
            emitted = np.concatenate([y, -np.conj(y)]) / np.sqrt(2)
            ys.append(y)
        residual = R_cobar.residual(emitted)
        if residual > tol.angle_tol:
            raise StructureError("h-sector vector falls outside R_cō", residuals={"step": step, "outside": residual})
        W = W - np.outer(emitted, emitted.conj() @ W)
    leftover = float(np.max(np.linalg.norm(W, axis=0))) if W.size else 0.0
    if leftover > tol.classify_tol:
        raise StructureError("h-sector construction did not terminate", residuals={"remaining_norm": leftover})

    X, Y = _columns(xs, n), _columns(ys, n)
    gram = {
        "XtX": max_norm(X.conj().T @ X - np.eye(X.shape[1])),
        "YtY": max_norm(Y.conj().T @ Y - np.eye(Y.shape[1])),
        "XtY": max_norm(X.conj().T @ Y),
    }
    if max(gram.values()) > tol.zero_tol:
        raise StructureError("h-sector basis fails its Gram identities", residuals=gram)
    return X, Y


def assemble_T(blocks: BlockBases, tol: StructureTolerance = DEFAULT_TOLERANCE) -> Tuple[np.ndarray, np.ndarray, Dict[str, float]]:
    """
    Build T̃ = Δ([Z3 Z1 Z2], 0) and T = [T_h T_co T_c̄ō].

    Returns:
        (T_tilde, T, residuals)

    Raises:
        StructureError: if T̃ is not unitary Bogoliubov or T is not unitary blockwise Bogoliubov
    """
    n = blocks.Z1.shape[0]
    Z = np.hstack([blocks.Z3, blocks.Z1, blocks.Z2])
    T_tilde = _doubled(Z)
    T = np.hstack([_doubled(blocks.Z3), _doubled(blocks.Z1), _doubled(blocks.Z2)])

    J = j_matrix(n)
    J_blocks = linalg.block_diag(j_matrix(blocks.n3), j_matrix(blocks.n1), j_matrix(blocks.n2))
    eye = np.eye(2 * n)
    residuals = {
        "T_tilde_unitary": max_norm(T_tilde.conj().T @ T_tilde - eye),
        "T_tilde_bogoliubov": max_norm(T_tilde.conj().T @ J @ T_tilde - J),
        "T_unitary": max_norm(T.conj().T @ T - eye),
        "T_blockwise_bogoliubov": max_norm(T.conj().T @ J @ T - J_blocks),
    }
    if max(residuals.values(), default=0.0) > tol.zero_tol or not is_bogoliubov(T_tilde, tol):
        raise StructureError("transformation T fails its group identities", residuals=residuals)
    return T_tilde, T, residuals


def _partition(M: np.ndarray, rows: List[slice], cols: List[slice]) -> List[List[np.ndarray]]:
    return [[M[r, c] for c in cols] for r in rows]


def _scaled_markov_residual(left: np.ndarray, A: np.ndarray, right: np.ndarray, order: int) -> float:
    """
    Largest max-norm of left A^k right for k < order, after scaling A to unit
    2-norm and left/right to unit max-norm (the zero pattern is scale-free).
    """
    if left.size == 0 or right.size == 0 or order == 0:
        return 0.0
    scale_a = linalg.norm(A, 2)
    A_hat = A / scale_a if scale_a > 0 else A
    scale_l, scale_r = max_norm(left), max_norm(right)
    if scale_l == 0 or scale_r == 0:
        return 0.0
    params = markov_parameters(A_hat, right / scale_r, left / scale_l, order)
    return max(max_norm(p) for p in params)


def canonical_complex(system: QLSystem, T: np.ndarray, blocks: BlockBases, tol: StructureTolerance = DEFAULT_TOLERANCE) -> Tuple[ComplexCanonicalForm, Dict[str, float]]:
    """
    Transform the system by T and extract the named blocks.

    Raises:
        ToleranceError: if the structural zeros, the subsystem realizability
            conditions, the transfer-function identity or the spectrum identity fail
    """
    n3, n1, n2 = blocks.n3, blocks.n1, blocks.n2
    A_bar = T.conj().T @ system.A @ T
    B_bar = T.conj().T @ system.B
    C_bar = system.C @ T
    h, co, df = block_slices([2 * n3, 2 * n1, 2 * n2])
    out = slice(0, 2 * system.m)

    named = {
        "A_h": A_bar[h, h], "A12": A_bar[h, co], "A13": A_bar[h, df],
        "A21": A_bar[co, h], "A_co": A_bar[co, co],
        "A31": A_bar[df, h], "A_cbar_obar": A_bar[df, df],
        "B_h": B_bar[h], "B_co": B_bar[co], "C_h": C_bar[out, h], "C_co": C_bar[out, co],
    }
    checks = {
        "zero_A_co_cbar_obar": max_norm(A_bar[co, df]),
        "zero_A_cbar_obar_co": max_norm(A_bar[df, co]),
        "zero_B_cbar_obar": max_norm(B_bar[df]),
        "zero_C_cbar_obar": max_norm(C_bar[:, df]),
    }
    if max(checks.values()) > tol.zero_tol:
        raise ToleranceError("complex canonical form violates its zero pattern", residuals=checks)

    realizability = {
        "co_coupling": max_norm(named["B_co"] + flat_adjoint(named["C_co"])) if n1 else 0.0,
        "co_dynamics": max_norm(named["A_co"] + flat_adjoint(named["A_co"]) + named["B_co"] @ flat_adjoint(named["B_co"])) if n1 else 0.0,
        "cbar_obar_dynamics": max_norm(named["A_cbar_obar"] + flat_adjoint(named["A_cbar_obar"])) if n2 else 0.0,
    }
    checks.update({f"realizability_{k}": v for k, v in realizability.items()})
    if max(realizability.values()) > tol.zero_tol:
        raise ToleranceError("canonical subsystems are not physically realizable", residuals=realizability)

    left = np.vstack([named["A21"], named["A31"]])
    right = np.hstack([named["A12"], named["A13"]])
    checks["markov_h_identity"] = _scaled_markov_residual(left, named["A_h"], right, 2 * n3)
    if checks["markov_h_identity"] > tol.zero_tol:
        raise ToleranceError("h-sector transfer identity fails", residuals={"markov_h_identity": checks["markov_h_identity"]})

    union = np.concatenate([spectrum(named["A_h"]), spectrum(named["A_co"]), spectrum(named["A_cbar_obar"])])
    if not multiset_close(spectrum(system.A), union, tol.eig_tol):
        raise ToleranceError("spectrum of the canonical blocks differs from the system spectrum", residuals={"eig_tol": tol.eig_tol})

    form = ComplexCanonicalForm(A_bar=A_bar, B_bar=B_bar, C_bar=C_bar, blocks=named, sizes={"h": 2 * n3, "co": 2 * n1, "cbar_obar": 2 * n2})
    return form, checks


def pi_matrix(na: int, nb: int) -> np.ndarray:
    """
    Π acting on (q̃_a, q̃_b, p̃_a, p̃_b): q_h = [q̃_a; -p̃_b], p_h = [p̃_a; q̃_b].
    """
    n3 = na + nb
    Pi = np.zeros((2 * n3, 2 * n3))
    qa, qb, pa, pb = block_slices([na, nb, na, nb])
    Pi[qa, qa] = np.eye(na)
    Pi[qb, pb] = -np.eye(nb)
    Pi[pa, pa] = np.eye(na)
    Pi[pb, qb] = np.eye(nb)
    return Pi


def _realify(X: np.ndarray, tol: StructureTolerance, label: str) -> np.ndarray:
    residue = max_norm(X.imag)
    if residue > tol.zero_tol:
        raise InternalConsistencyError(f"{label} is not real", residuals={label: residue})
    return X.real.copy()


def real_labels(n3: int, n1: int, n2: int) -> List[str]:
    names = [f"q_h{i + 1}" for i in range(n3)] + [f"p_h{i + 1}" for i in range(n3)]
    names += [f"q_co{i + 1}" for i in range(n1)] + [f"p_co{i + 1}" for i in range(n1)]
    names += [f"q_df{i + 1}" for i in range(n2)] + [f"p_df{i + 1}" for i in range(n2)]
    return names


def canonical_real(
    system: QLSystem, blocks: BlockBases, T_tilde: np.ndarray, T: np.ndarray, tol: StructureTolerance = DEFAULT_TOLERANCE
) -> Tuple[RealCanonicalForm, np.ndarray, np.ndarray, np.ndarray, Dict[str, float]]:
    """
    Real orthogonal symplectic S̃, blockwise symplectic S and the real canonical blocks.

    Returns:
        (form, S_tilde, S, Pi, residuals)

    Raises:
        InternalConsistencyError: if S̃ or S is not real within zero_tol
        StructureError: if S̃ or S fails orthogonality or (blockwise) symplecticity
        ToleranceError: if the real zero pattern fails
    """
    n, n3, n1, n2 = system.n, blocks.n3, blocks.n1, blocks.n2
    Vn = v_matrix(n)
    S_tilde = _realify(Vn @ T_tilde @ Vn.conj().T, tol, "S_tilde")
    Pi = pi_matrix(blocks.na, blocks.nb)
    V_tilde = linalg.block_diag(Pi @ v_matrix(n3), v_matrix(n1), v_matrix(n2))
    S = _realify(Vn @ T @ V_tilde.conj().T, tol, "S")

    eye = np.eye(2 * n)
    JJ = jj_matrix(n).real
    JJ_blocks = linalg.block_diag(jj_matrix(n3), jj_matrix(n1), jj_matrix(n2)).real
    checks = {
        "S_tilde_orthogonal": max_norm(S_tilde.T @ S_tilde - eye),
        "S_tilde_symplectic": max_norm(S_tilde.T @ JJ @ S_tilde - JJ),
        "S_orthogonal": max_norm(S.T @ S - eye),
        "S_blockwise_symplectic": max_norm(S.T @ JJ @ S - JJ_blocks),
        "Pi_orthogonal": max_norm(Pi.T @ Pi - np.eye(2 * n3)),
    }
    if max(checks.values()) > tol.zero_tol or not is_symplectic(S_tilde, tol) or not is_symplectic(Pi, tol):
        raise StructureError("real transformations fail their group identities", residuals=checks)

    real = to_real(system, tol)
    A_bar = S.T @ real.A @ S
    B_bar = S.T @ real.B
    C_bar = real.C @ S
    qh, ph, co, df = block_slices([n3, n3, 2 * n1, 2 * n2])

    zeros = {
        "A_ph_qh": A_bar[ph, qh], "A_ph_co": A_bar[ph, co], "A_ph_df": A_bar[ph, df],
        "A_co_qh": A_bar[co, qh], "A_df_qh": A_bar[df, qh],
        "A_co_df": A_bar[co, df], "A_df_co": A_bar[df, co],
        "B_ph": B_bar[ph], "B_df": B_bar[df], "C_qh": C_bar[:, qh], "C_df": C_bar[:, df],
    }
    zero_checks = {f"zero_{k}": max_norm(v) for k, v in zeros.items()}
    checks.update(zero_checks)
    if max(zero_checks.values()) > tol.zero_tol:
        raise ToleranceError("real canonical form violates its zero pattern", residuals=zero_checks)

    named = {
        "A_h11": A_bar[qh, qh], "A_h12": A_bar[qh, ph], "A_h22": A_bar[ph, ph],
        "A12": A_bar[qh, co], "A13": A_bar[qh, df], "A21": A_bar[co, ph], "A31": A_bar[df, ph],
        "A_co": A_bar[co, co], "A_cbar_obar": A_bar[df, df],
        "B_h": B_bar[qh], "B_co": B_bar[co], "C_h": C_bar[:, ph], "C_co": C_bar[:, co],
    }
    labels = real_labels(n3, n1, n2)
    order = list(range(0, n3)) + list(range(2 * n3, 2 * n)) + list(range(n3, 2 * n3))
    P = permutation_matrix(order)
    form = RealCanonicalForm(
        A_bar=A_bar,
        B_bar=B_bar,
        C_bar=C_bar,
        blocks=named,
        labels=labels,
        rearranged_A=P.T @ A_bar @ P,
        rearranged_B=P.T @ B_bar,
        rearranged_C=C_bar @ P,
        rearranged_labels=[labels[i] for i in order],
        sizes={"q_h": n3, "p_h": n3, "co": 2 * n1, "cbar_obar": 2 * n2},
    )
    return form, S_tilde, S, Pi, checks


def _mode_table(blocks: BlockBases) -> Dict[str, np.ndarray]:
    """Annihilation-operator coefficients of each canonical mode: ã = z† a."""
    modes = {}
    for prefix, Z in (("a_h", blocks.Z3), ("a_co", blocks.Z1), ("a_df", blocks.Z2)):
        for i in range(Z.shape[1]):
            modes[f"{prefix}{i + 1}"] = np.conj(Z[:, i])
    return modes


def _finish(
    source: str,
    system: QLSystem,
    blocks: BlockBases,
    tol: StructureTolerance,
    subspaces: Optional[KalmanSubspaces] = None,
    passive_form: Optional[PassiveCanonicalForm] = None,
    extra_checks: Optional[Dict[str, float]] = None,
) -> KalmanResult:
    checks = dict(extra_checks or {})
    gram = blocks.gram_residuals()
    checks.update({f"gram_{k}": v for k, v in gram.items()})
    if max(gram.values()) > tol.zero_tol:
        raise StructureError("block bases are not orthonormal", residuals=gram)
    T_tilde, T, t_checks = assemble_T(blocks, tol)
    checks.update(t_checks)
    complex_form, c_checks = canonical_complex(system, T, blocks, tol)
    checks.update(c_checks)
    real_form, S_tilde, S, Pi, r_checks = canonical_real(system, blocks, T_tilde, T, tol)
    checks.update(r_checks)
    variables = {name: S[:, j].copy() for j, name in enumerate(real_form.labels)}
    return KalmanResult(
        source=source,
        n=system.n,
        m=system.m,
        blocks=blocks,
        T_tilde=T_tilde,
        T=T,
        S_tilde=S_tilde,
        S=S,
        Pi=Pi,
        complex_form=complex_form,
        real_form=real_form,
        passive_form=passive_form,
        subspaces=subspaces,
        variables=variables,
        modes=_mode_table(blocks),
        checks=checks,
    )


def decompose(system: QLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE, subspaces: Optional[KalmanSubspaces] = None) -> KalmanResult:
    """
    Kalman decomposition of a general linear quantum system.

    Args:
        system: The system in annihilation-creation form
        tol: Tolerance policy
        subspaces: Precomputed Kalman subspaces of the same system, if available

    Returns:
        KalmanResult holding T̃, T, S̃, S, Π and both canonical forms
    """
    spaces = subspaces if subspaces is not None else kalman_subspaces(system, tol)
    n = system.n
    empty = np.zeros((n, 0), dtype=complex)
    X, Y = build_h_basis(spaces.R_cobar, n, tol) if spaces.n3 else (empty, empty)
    blocks = BlockBases(
        Z1=build_paired_basis(spaces.R_co, n, tol),
        Z2=build_paired_basis(spaces.R_cbar_obar, n, tol),
        X=X,
        Y=Y,
    )
    return _finish("complex", system, blocks, tol, subspaces=spaces, extra_checks=spaces.checks)


def eigen_dfs(A: np.ndarray, tol: StructureTolerance = DEFAULT_TOLERANCE) -> EigenDFS:
    """
    Span of the eigenvectors of a passive drift matrix with eigenvalues on the imaginary axis.

    Eigenvalues within CLUSTER_RADIUS are grouped; each group's kernel is
    taken at the group mean, and its dimension is the geometric multiplicity.

    Raises:
        ToleranceError: if an imaginary-axis eigenvalue has a Jordan block
            (geometric multiplicity below algebraic multiplicity)
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    eigs = linalg.eigvals(A) if n else np.zeros(0, dtype=complex)
    hurwitz = is_hurwitz(A, tol)
    clusters = []
    vectors = []
    for members in eigen_clusters(eigs, CLUSTER_RADIUS):
        centre = complex(eigs[members].mean())
        if abs(centre.real) > tol.eig_tol:
            continue
        ker = kernel(A - centre * np.eye(n), tol)
        clusters.append({"eigenvalue": centre, "algebraic": len(members), "geometric": ker.dim})
        if ker.dim != len(members):
            raise ToleranceError(
                "imaginary-axis eigenvalue is defective",
                residuals={"eigenvalue": centre, "algebraic": len(members), "geometric": ker.dim},
            )
        vectors.append(ker.basis)
    if vectors:
        Q, _ = linalg.qr(np.hstack(vectors), mode="economic")
        span = SubspaceBasis(ambient_dim=n, basis=Q, tol_used=tol)
    else:
        span = SubspaceBasis(ambient_dim=n, basis=np.zeros((n, 0), dtype=complex), tol_used=tol)
    return EigenDFS(hurwitz=hurwitz, span=span, clusters=clusters)


def decompose_passive(system: PassiveQLSystem, tol: StructureTolerance = DEFAULT_TOLERANCE) -> KalmanResult:
    """
    Passive decomposition: one unitary splits C^n into controllable and decoherence-free parts.

    The DFS found from the Krylov kernel is cross-checked against the span
    of imaginary-axis eigenvectors of A.

    Raises:
        ToleranceError: if the passive blocks do not decouple or the two DFS computations disagree
    """
    n = system.n
    controllable, uncontrollable = passive_subspaces(system, tol)
    Z1 = _columns([phase_normalize(controllable.basis[:, i]) for i in range(controllable.dim)], n)
    Z2 = _columns([phase_normalize(uncontrollable.basis[:, i]) for i in range(uncontrollable.dim)], n)
    T_p = np.hstack([Z1, Z2])

    A_bar = T_p.conj().T @ system.A @ T_p
    B_bar = T_p.conj().T @ system.B
    C_bar = system.C @ T_p
    co, df = block_slices([Z1.shape[1], Z2.shape[1]])
    checks = {
        "passive_zero_A_co_df": max_norm(A_bar[co, df]),
        "passive_zero_A_df_co": max_norm(A_bar[df, co]),
        "passive_zero_B_df": max_norm(B_bar[df]),
        "passive_zero_C_df": max_norm(C_bar[:, df]),
        "passive_unitary": max_norm(T_p.conj().T @ T_p - np.eye(n)),
    }
    if max(checks.values(), default=0.0) > tol.zero_tol:
        raise ToleranceError("passive canonical form does not decouple", residuals=checks)

    eigen = eigen_dfs(system.A, tol)
    sine = _subspace_mismatch(eigen.span, uncontrollable)
    eigen = eigen.model_copy(update={"kernel_vs_eigen_sine": sine})
    checks["passive_kernel_vs_eigen"] = sine
    if sine > tol.angle_tol:
        raise ToleranceError("DFS from the Krylov kernel and from imaginary eigenvectors disagree", residuals={"principal_sine": sine})

    passive_form = PassiveCanonicalForm(
        T=T_p, A_co=A_bar[co, co], A_df=A_bar[df, df], B_co=B_bar[co], C_co=C_bar[:, co], eigen=eigen
    )
    blocks = BlockBases(Z1=Z1, Z2=Z2, X=np.zeros((n, 0), dtype=complex), Y=np.zeros((n, 0), dtype=complex))
    return _finish("passive", embed_passive(system, tol), blocks, tol, passive_form=passive_form, extra_checks=checks)


def _subspace_mismatch(S1: SubspaceBasis, S2: SubspaceBasis) -> float:
    if S1.dim != S2.dim:
        return 1.0
    return max(max_containment_sine(S1, S2), max_containment_sine(S2, S1))
