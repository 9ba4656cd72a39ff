"""Balanced state-space realization from impulse-response blocks.

A clipped block-Hankel matrix H (L/2 block rows, L/2 + 1 block columns,
block (i, j) = C A^{i+j} B) is factored through the rank-n SVD of its
left clip H^- into observability and controllability factors O, Q, from
which (A, B, C) are read off up to an orthogonal change of state
coordinates.  Companion routines align two realizations by orthogonal
Procrustes and evaluate explicit perturbation bounds on the aligned
errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateRealizationError, ParameterError
from .sysmodel import MarkovParams

DEGENERATE_RATIO = 1e-10


def _as_markov_matrix(G) -> np.ndarray:
    if isinstance(G, MarkovParams):
        return np.asarray(G.G, dtype=float)
    return np.atleast_2d(np.asarray(G, dtype=float))


@dataclass(frozen=True, eq=False)
class HankelSet:
    """Hankel structures derived from a p x pL Markov matrix.

    H_minus / H_plus drop the last / first p columns of H; L_hat is the
    best rank-n approximation of H_minus (by SVD truncation) and
    sigma_min_L its n-th singular value.
    """

    H: np.ndarray
    H_minus: np.ndarray
    H_plus: np.ndarray
    L_hat: np.ndarray
    sigma_min_L: float
    singular_values: np.ndarray
    n: int
    p: int
    L: int


@dataclass(frozen=True, eq=False)
class Realization:
    """Recovered (A, B, C) with the factors they came from (O Q = L_hat)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    O: np.ndarray
    Q: np.ndarray
    n: int
    p: int


@dataclass(frozen=True)
class Alignment:
    """Orthogonal change of coordinates and the aligned parameter errors."""

    T: np.ndarray
    dA: float
    dB: float
    dC: float


@dataclass(frozen=True)
class RealizationBounds:
    """Perturbation bounds on the aligned realization errors."""

    bound_BC: float
    bound_A: float
    robustness_ok: bool


def build_hankel(G, n: int) -> HankelSet:
    """Assemble H, its clips, and the rank-n truncation.

    G is a MarkovParams or a raw p x pL block matrix; L must be even,
    at least 2, and at least 2n.
    """
    Gm = _as_markov_matrix(G)
    p = Gm.shape[0]
    if Gm.shape[1] % p != 0:
        raise ParameterError("Markov matrix width must be a multiple of p")
    L = Gm.shape[1] // p
    if L % 2 != 0 or L < 2:
        raise ParameterError(f"L must be even and >= 2, got {L}")
    if n < 1 or L < 2 * n:
        raise ParameterError(f"need L >= 2n, got L={L}, n={n}")
    half = L // 2
    H = np.zeros((p * half, p * (half + 1)))
    for i in range(half):
        for j in range(half + 1):
            H[i * p:(i + 1) * p, j * p:(j + 1) * p] = Gm[:, (i + j) * p:(i + j + 1) * p]
    H_minus = H[:, :-p]
    H_plus = H[:, p:]
    U, s, Vt = np.linalg.svd(H_minus, full_matrices=False)
    L_hat = (U[:, :n] * s[:n]) @ Vt[:n]
    return HankelSet(H=H, H_minus=H_minus, H_plus=H_plus, L_hat=L_hat,
                     sigma_min_L=float(s[n - 1]), singular_values=s,
                     n=n, p=p, L=L)


def _signed_svd(M: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank-n SVD factors with a fixed sign convention: the largest-magnitude
    entry of each left singular vector is positive."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, s, Vt = U[:, :n].copy(), s[:n].copy(), Vt[:n].copy()
    for k in range(n):
        idx = int(np.argmax(np.abs(U[:, k])))
        if U[idx, k] < 0.0:
            U[:, k] = -U[:, k]
            Vt[k] = -Vt[k]
    return U, s, Vt


def ho_kalman(G, n: int) -> Realization:
    """Recover a balanced realization of order n from Markov blocks.

    O = U sqrt(S) and Q = sqrt(S) V^T come from the rank-n SVD of H^-;
    C is the first block row of O, B the first block column of Q, and
    A = pinv(O) H^+ pinv(Q).  Refuses near-degenerate truncations
    (sigma_n below 1e-10 of sigma_1), which would poison every
    downstream bound.
    """
    hankel = build_hankel(G, n)
    s = hankel.singular_values
    if s[0] == 0.0:
        # identically zero Markov blocks realize the zero system
        p = hankel.p
        return Realization(A=np.zeros((n, n)), B=np.zeros((n, p)), C=np.zeros((p, n)),
                           O=np.zeros((hankel.H_minus.shape[0], n)),
                           Q=np.zeros((n, hankel.H_minus.shape[1])), n=n, p=p)
    if s[n - 1] / s[0] < DEGENERATE_RATIO:
        raise DegenerateRealizationError(
            f"rank-{n} truncation refused: sigma_{n} = {s[n - 1]:.3e} "
            f"(ratio {s[n - 1] / s[0]:.3e} to sigma_1)")
    U, sn, Vt = _signed_svd(hankel.H_minus, n)
    root = np.sqrt(sn)
    O = U * root
    Q = root[:, None] * Vt
    A = np.linalg.pinv(O) @ hankel.H_plus @ np.linalg.pinv(Q)
    p = hankel.p
    return Realization(A=A, B=Q[:, :p].copy(), C=O[:p].copy(), O=O, Q=Q, n=n, p=p)


def align_realizations(ref: Realization, other: Realization) -> Alignment:
    """Best orthogonal change of coordinates from `other` to `ref`.

    T solves the orthogonal Procrustes problem
    min_T ||O_ref - O_other T||_F via the SVD of O_other^T O_ref, and the
    reported errors are the aligned parameter distances
    dA = ||A_ref - T^T A_other T||, dB = ||B_ref - T^T B_other||,
    dC = ||C_ref - C_other T|| (Frobenius).
    """
    if ref.n != other.n or ref.p != other.p:
        raise ParameterError("realizations must share state and input dimensions")
    U, _, Vt = np.linalg.svd(other.O.T @ ref.O)
    T = U @ Vt
    dA = float(np.linalg.norm(ref.A - T.T @ other.A @ T))
    dB = float(np.linalg.norm(ref.B - T.T @ other.B))
    dC = float(np.linalg.norm(ref.C - other.C @ T))
    return Alignment(T=T, dA=dA, dB=dB, dC=dC)


def realization_error_bounds(H: np.ndarray, H_hat: np.ndarray, sigma_min_L: float,
                             G_err_fro: float, L: int) -> RealizationBounds:
    """Explicit perturbation bounds on Procrustes-aligned errors.

        bound_BC = sqrt(10 L / sigma_min) * ||G - G_hat||_F,
        bound_A  = (9 sqrt(L) (||H|| + ||H_hat||) / sigma_min^2
                    + sqrt(2 L) / sigma_min) * ||G - G_hat||_F,

    valid whenever the perturbation respects the robustness condition
    ||G - G_hat||_F <= sigma_min / (2 sqrt(2 L)) (boundary inclusive).
    """
    if sigma_min_L <= 0.0:
        raise ParameterError("sigma_min of the rank-n truncation must be positive")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=float))
    h_norm = float(np.linalg.norm(H, 2))
    h_hat_norm = float(np.linalg.norm(H_hat, 2))
    bound_BC = math.sqrt(10.0 * L / sigma_min_L) * G_err_fro
    bound_A = (9.0 * math.sqrt(L) * (h_norm + h_hat_norm) / sigma_min_L**2
               + math.sqrt(2.0 * L) / sigma_min_L) * G_err_fro
    robustness_ok = G_err_fro <= sigma_min_L / (2.0 * math.sqrt(2.0 * L))
    return RealizationBounds(bound_BC=bound_BC, bound_A=bound_A,
                             robustness_ok=bool(robustness_ok))
