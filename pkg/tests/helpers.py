"""
Shared fixtures for the test suite: random system factories with planted
Kalman structure and an independent brute-force dimension oracle.
"""

import math
from pathlib import Path
from typing import Tuple

import numpy as np

from qkalman.matrix_core import v_matrix
from qkalman.system_model import QLSystem, build_general, build_passive, build_real, to_complex

CORPUS_DIR = Path(__file__).resolve().parent.parent / "qkalman" / "corpus"


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (G + G.conj().T) / 2


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n))
    return (G + G.T) / 2


def random_general_system(rng: np.random.Generator, n: int, m: int) -> QLSystem:
    """Unstructured system: Ω₋ Hermitian, Ω₊ complex symmetric, dense coupling."""
    omega_plus = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    omega_plus = (omega_plus + omega_plus.T) / 2
    c_minus = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    c_plus = 0.5 * (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))
    return build_general(random_hermitian(rng, n), omega_plus, c_minus, c_plus)


def passive_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random real orthogonal symplectic matrix V_n Δ(Z, 0) V_n†."""
    Z = random_unitary(rng, n)
    T = np.zeros((2 * n, 2 * n), dtype=complex)
    T[:n, :n], T[n:, n:] = Z, Z.conj()
    V = v_matrix(n)
    return (V @ T @ V.conj().T).real


def planted_real(rng: np.random.Generator, n1: int, n2: int, n3: int, m: int, rotate: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real (H, C) with n1 co modes, n2 decoherence-free modes and an n3-dimensional h-sector.

    In canonical coordinates H never involves q_h except through a q_h–p_h
    term, x_df only couples to itself, and C reads x_co only. A random
    passive rotation then hides the structure.
    """
    n = n1 + n2 + n3
    q_h = list(range(0, n3))
    q_co = list(range(n3, n3 + n1))
    q_df = list(range(n3 + n1, n))
    p_h = [n + i for i in q_h]
    x_co = q_co + [n + i for i in q_co]
    x_df = q_df + [n + i for i in q_df]

    H = np.zeros((2 * n, 2 * n))
    M = rng.standard_normal((n3, n3))
    H[np.ix_(q_h, p_h)] = M
    H[np.ix_(p_h, q_h)] = M.T
    H[np.ix_(p_h, p_h)] = random_symmetric(rng, n3)
    K = rng.standard_normal((n3, 2 * n1))
    H[np.ix_(p_h, x_co)] = K
    H[np.ix_(x_co, p_h)] = K.T
    H[np.ix_(x_co, x_co)] = random_symmetric(rng, 2 * n1)
    H[np.ix_(x_df, x_df)] = random_symmetric(rng, 2 * n2)

    C = np.zeros((2 * m, 2 * n))
    if n1:
        C[:, x_co] = rng.standard_normal((2 * m, 2 * n1))
    if rotate:
        S = passive_rotation(rng, n)
        H = S @ H @ S.T
        C = C @ S.T
    return (H + H.T) / 2, C


def planted_system(rng: np.random.Generator, n1: int, n2: int, n3: int, m: int) -> QLSystem:
    H, C = planted_real(rng, n1, n2, n3, m)
    return to_complex(build_real(H, C))


def random_split(rng: np.random.Generator, max_n: int = 4, max_m: int = 2) -> Tuple[int, int, int, int]:
    """Random (n1, n2, n3, m) with n1 + n2 + n3 <= max_n; an h-sector needs a co mode to talk to."""
    n = int(rng.integers(1, max_n + 1))
    n1 = int(rng.integers(0, n + 1))
    n3 = int(rng.integers(0, n - n1 + 1)) if n1 else 0
    m = int(rng.integers(1, max_m + 1))
    return n1, n - n1 - n3, n3, m


def planted_passive(rng: np.random.Generator, n_co: int, n_df: int, m: int):
    """Passive system whose decoherence-free subspace has dimension n_df."""
    n = n_co + n_df
    omega = np.zeros((n, n), dtype=complex)
    omega[:n_co, :n_co] = random_hermitian(rng, n_co)
    omega[n_co:, n_co:] = random_hermitian(rng, n_df)
    c_minus = np.zeros((m, n), dtype=complex)
    c_minus[:, :n_co] = rng.standard_normal((m, n_co)) + 1j * rng.standard_normal((m, n_co))
    Z = random_unitary(rng, n)
    return build_passive(Z @ omega @ Z.conj().T, c_minus @ Z.conj().T)


def _fsum_product(X, Y) -> np.ndarray:
    """Complex matrix product with every entry summed by math.fsum."""
    X, Y = np.asarray(X, dtype=complex), np.asarray(Y, dtype=complex)
    out = np.zeros((X.shape[0], Y.shape[1]), dtype=complex)
    for i in range(X.shape[0]):
        for j in range(Y.shape[1]):
            terms = X[i, :] * Y[:, j]
            out[i, j] = complex(math.fsum(terms.real), math.fsum(terms.imag))
    return out


def gap_rank(X: np.ndarray, floor: float = 1e6) -> int:
    """
    Rank at the largest relative gap in the singular values.

    A matrix whose largest gap ratio is below `floor` is taken as full rank
    (or zero when its norm vanishes).
    """
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0:
        return 0
    s = np.maximum(s / s[0], 1e-300)
    if s.size == 1:
        return 1
    ratios = s[:-1] / s[1:]
    k = int(np.argmax(ratios))
    if ratios[k] < floor:
        return s.size
    return k + 1


def oracle_dims(system: QLSystem) -> Tuple[int, int, int]:
    """
    (n1, n2, n3) from the full Krylov expansion: rank C_G = 2n1 + n3, rank O_G C_G = 2n1.
    """
    n = system.n
    A, B, C = system.A, system.B, system.C
    scale = np.linalg.norm(A, 2)
    if scale > 0:
        A = A / scale
    blocks, AkB = [], B
    for _ in range(2 * n):
        blocks.append(AkB)
        AkB = _fsum_product(A, AkB)
    ctrb = np.hstack(blocks)
    rows, CAk = [], C
    for _ in range(2 * n):
        rows.append(CAk)
        CAk = _fsum_product(CAk, A)
    obsv = np.vstack(rows)
    hankel = _fsum_product(obsv, ctrb)
    controllable = gap_rank(ctrb)
    minimal = gap_rank(hankel)
    n1 = minimal // 2
    n3 = controllable - minimal
    return n1, n - n1 - n3, n3
