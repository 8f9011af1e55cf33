"""
Physical reading of a Kalman decomposition: decoherence-free modes, QND
variables and the QMFS they span, back-action evasion, and the two
structural special cases that simplify the canonical form.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qkalman.decomposition import KalmanResult
from qkalman.errors import InternalConsistencyError, PoleProximityError, ToleranceError
from qkalman.matrix_core import DEFAULT_TOLERANCE, StructureTolerance, block_slices, max_norm
from qkalman.subspaces import image, invariance_residual, kalman_subspaces
from qkalman.system_model import QLSystem, evaluate_transfer

BAE_DIRECTIONS = ("p_in->q_out", "q_in->p_out")

# Ξ is sampled here as a cross-check of the Markov verdict.
SAMPLE_POINTS = (1.0 + 0j, 2.0 + 1j, 10.0 + 0j)

# A sample counts as zero below this magnitude.
SAMPLE_ZERO = 1e-8


class ModeClassification(BaseModel):
    df_modes: List[Tuple[str, str]] = Field(default_factory=list)
    qnd_variables: List[str] = Field(default_factory=list)
    qmfs: List[str] = Field(default_factory=list)
    co_modes: List[Tuple[str, str]] = Field(default_factory=list)
    conjugate_pairing: Dict[str, str] = Field(default_factory=dict)
    df_decoupled: bool = True
    residuals: Dict[str, float] = Field(default_factory=dict)


class BAEReport(BaseModel):
    """Back-action evasion verdict for one input/output quadrature pair."""

    direction: str
    input_quadrature: str
    output_quadrature: str
    markov_residuals: List[float] = Field(default_factory=list)
    first_nonzero_order: Optional[int] = None
    samples: List[Dict[str, float]] = Field(default_factory=list)
    verdict: bool
    samples_agree: bool = True


class SpecialCaseFlags(BaseModel):
    omega_invariant: bool
    omega_invariance_residual: float
    a13_a31_residual: Optional[float] = None
    output_orthogonal: bool
    output_overlap: float
    bh_ch_residual: Optional[float] = None


class PassiveDFSReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    hurwitz: bool
    dfs_dim: int
    clusters: List[Dict[str, object]] = Field(default_factory=list)
    kernel_vs_eigen_sine: float
    hurwitz_consistent: bool


def _pairs(labels: List[str], prefix: str) -> List[Tuple[str, str]]:
    qs = [name for name in labels if name.startswith(f"q_{prefix}")]
    ps = [name for name in labels if name.startswith(f"p_{prefix}")]
    return list(zip(qs, ps))


def classify_modes(result: KalmanResult, tol: StructureTolerance = DEFAULT_TOLERANCE) -> ModeClassification:
    """
    Label the canonical real variables.

    x_c̄ō pairs are decoherence-free, every p_h component is a QND variable
    and together they span a QMFS. The QMFS signature is verified on the
    rearranged form: p_h rows of Ā vanish outside the p_h block and p_h rows
    of B̄ vanish.

    Raises:
        InternalConsistencyError: if the QMFS signature fails
    """
    real = result.real_form
    n3, n1, n2 = result.n3, result.n1, result.n2
    tail = slice(n3 + 2 * n1 + 2 * n2, 2 * result.n)
    head = slice(0, n3 + 2 * n1 + 2 * n2)
    residuals = {
        "qmfs_dynamics": max_norm(real.rearranged_A[tail, head]),
        "qmfs_inputs": max_norm(real.rearranged_B[tail]),
    }
    if max(residuals.values()) > tol.zero_tol:
        raise InternalConsistencyError("p_h dynamics are not closed and input-free", residuals=residuals)

    _, _, _, df = block_slices([n3, n3, 2 * n1, 2 * n2])
    residuals["df_inputs"] = max_norm(real.B_bar[df])
    residuals["df_outputs"] = max_norm(real.C_bar[:, df])

    qnd = [name for name in real.labels if name.startswith("p_h")]
    q_h = [name for name in real.labels if name.startswith("q_h")]
    return ModeClassification(
        df_modes=_pairs(real.labels, "df"),
        qnd_variables=qnd,
        qmfs=list(qnd),
        co_modes=_pairs(real.labels, "co"),
        conjugate_pairing=dict(zip(q_h, qnd)),
        df_decoupled=residuals["df_inputs"] <= tol.zero_tol and residuals["df_outputs"] <= tol.zero_tol,
        residuals=residuals,
    )


def _sample(A: np.ndarray, B: np.ndarray, C: np.ndarray, s: complex, tol: StructureTolerance) -> Tuple[complex, float]:
    """|C (sI - A)^-1 B| at s, nudged off any pole."""
    D = np.zeros((C.shape[0], B.shape[1]), dtype=complex)
    for _ in range(8):
        try:
            return s, max_norm(evaluate_transfer(A, B, C, D, s, tol))
        except PoleProximityError:
            s = s + 0.25 + 0.25j
    raise PoleProximityError("no pole-free sample point found", nearest_eigenvalue=s)


def bae_check(result: KalmanResult, direction: str = "p_in->q_out", tol: StructureTolerance = DEFAULT_TOLERANCE) -> BAEReport:
    """
    Decide whether the co subsystem realizes a BAE measurement.

    The transfer function from the chosen input quadrature to the chosen
    output quadrature vanishes identically iff C_out A_co^k B_in = 0 for
    k < 2 n1.

    Args:
        result: A decomposition with its real canonical form
        direction: "p_in->q_out" or "q_in->p_out"
        tol: zero_tol decides each Markov parameter

    Returns:
        BAEReport; an absent co subsystem gives a true verdict with no residuals
    """
    if direction not in BAE_DIRECTIONS:
        raise ValueError(f"direction must be one of {BAE_DIRECTIONS}, got {direction!r}")
    source, target = direction.split("->")
    if result.n1 == 0:
        return BAEReport(direction=direction, input_quadrature=source, output_quadrature=target, verdict=True)

    m = result.m
    blocks = result.real_form.blocks
    A_co, B_co, C_co = blocks["A_co"], blocks["B_co"], blocks["C_co"]
    cols = slice(m, 2 * m) if source == "p_in" else slice(0, m)
    rows = slice(0, m) if target == "q_out" else slice(m, 2 * m)
    B_in, C_out = B_co[:, cols], C_co[rows, :]

    residuals = []
    AkB = B_in
    for _ in range(2 * result.n1):
        residuals.append(max_norm(C_out @ AkB))
        AkB = A_co @ AkB
    nonzero = [k for k, r in enumerate(residuals) if r > tol.zero_tol]
    verdict = not nonzero

    samples = []
    for s in SAMPLE_POINTS:
        used, magnitude = _sample(A_co, B_in, C_out, s, tol)
        samples.append({"re": used.real, "im": used.imag, "magnitude": magnitude})
    samples_zero = all(sample["magnitude"] <= SAMPLE_ZERO for sample in samples)

    return BAEReport(
        direction=direction,
        input_quadrature=source,
        output_quadrature=target,
        markov_residuals=residuals,
        first_nonzero_order=nonzero[0] if nonzero else None,
        samples=samples,
        verdict=verdict,
        samples_agree=samples_zero == verdict,
    )


def special_case_flags(system: QLSystem, result: KalmanResult, tol: StructureTolerance = DEFAULT_TOLERANCE) -> SpecialCaseFlags:
    """
    Evaluate the two hypotheses under which the canonical form simplifies.

    omega_invariant: Ω·Ker(O_s) ⊆ Ker(O_s); then 𝒜13 and 𝒜31 vanish.
    output_orthogonal: Ker(𝒞)⊥ ⊥ Ker(O_s J_n); then ℬ_h and 𝒞_h vanish.

    Raises:
        ToleranceError: if a hypothesis holds but its conclusion fails
    """
    spaces = result.subspaces if result.subspaces is not None else kalman_subspaces(system, tol, cross_check=False)
    omega = system.omega.materialize()
    invariance = invariance_residual(omega, spaces.ker_Os)
    omega_invariant = invariance <= tol.angle_tol

    output_space = image(system.C.conj().T, tol)
    if output_space.dim and spaces.ker_OsJ.dim:
        overlap = float(np.linalg.norm(output_space.basis.conj().T @ spaces.ker_OsJ.basis, 2))
    else:
        overlap = 0.0
    output_orthogonal = overlap <= tol.angle_tol

    blocks = result.complex_form.blocks
    a_res = bh_res = None
    if omega_invariant:
        a_res = max(max_norm(blocks["A13"]), max_norm(blocks["A31"]))
        if a_res > tol.zero_tol:
            raise ToleranceError(
                "Ω leaves Ker(O_s) invariant but A13/A31 do not vanish",
                residuals={"A13_A31": a_res, "invariance_residual": invariance},
            )
    if output_orthogonal:
        bh_res = max(max_norm(blocks["B_h"]), max_norm(blocks["C_h"]))
        if bh_res > tol.zero_tol:
            raise ToleranceError(
                "Ker(C)⊥ is orthogonal to Ker(O_s J) but B_h/C_h do not vanish",
                residuals={"B_h_C_h": bh_res, "overlap": overlap},
            )
    return SpecialCaseFlags(
        omega_invariant=omega_invariant,
        omega_invariance_residual=invariance,
        a13_a31_residual=a_res,
        output_orthogonal=output_orthogonal,
        output_overlap=overlap,
        bh_ch_residual=bh_res,
    )


def passive_dfs_report(result: KalmanResult) -> Optional[PassiveDFSReport]:
    if result.passive_form is None:
        return None
    eigen = result.passive_form.eigen
    dfs_dim = result.passive_form.A_df.shape[0]
    return PassiveDFSReport(
        hurwitz=eigen.hurwitz,
        dfs_dim=dfs_dim,
        clusters=eigen.clusters,
        kernel_vs_eigen_sine=eigen.kernel_vs_eigen_sine,
        hurwitz_consistent=eigen.hurwitz == (dfs_dim == 0),
    )
