"""Dense linear-algebra kernels used by the analytics.

Four operations: matrix exponential, the Gram-type integral

    D_t = int_0^t exp(s B) D exp(s B^T) ds,

eigenvalues sorted by (real, imaginary) part, and the controllability
(Kalman) rank test for degenerate diffusions.  The Gram integral is computed
exactly (up to expm accuracy) through the block-matrix exponential

    exp(t [[B, D], [0, -B^T]]) = [[F11, F12], [0, F22]],  D_t = F12 @ F11^T,

combined with the doubling identity D_{2t} = e^{tB} D_t e^{tB^T} + D_t so
long horizons stay well conditioned.  Quadrature never enters the main path;
the test suite keeps an adaptive-quadrature oracle for cross-checking.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, MatrixOverflow, NonSPDMatrix, ShapeMismatch

# controllability rank threshold, relative to the largest singular value
RANK_RTOL = 1e-10


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ShapeMismatch(f"{name} has non-finite entries")
    return M


def is_symmetric(M: np.ndarray, tol: float = 1e-10) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(np.max(np.abs(M - M.T)) <= tol * max(1.0, float(np.max(np.abs(M)))))


def check_psd(D, name: str = "D", tol: float = 1e-10) -> np.ndarray:
    """Validate symmetric positive semidefiniteness; returns the symmetrized matrix."""
    D = _as_square(D, name)
    if not is_symmetric(D, tol):
        raise NonSPDMatrix(f"{name} is not symmetric")
    D = 0.5 * (D + D.T)
    w = np.linalg.eigvalsh(D)
    if w[0] < -tol * max(1.0, float(w[-1])):
        raise NonSPDMatrix(f"{name} has negative eigenvalue {w[0]}")
    return D


def psd_sqrt(D: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition (tiny negatives clipped)."""
    D = check_psd(D)
    w, V = np.linalg.eigh(D)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def expm(M) -> np.ndarray:
    """Matrix exponential e^M (scaling-and-squaring Pade).

    Raises :class:`MatrixOverflow` when the result leaves floating range.
    """
    M = _as_square(M, "M")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(M)
    if not np.all(np.isfinite(E)):
        raise MatrixOverflow("matrix exponential overflowed floating-point range")
    return E


def gram_integral(B, D, t: float) -> np.ndarray:
    """Integrated noise propagation int_0^t e^{sB} D e^{sB^T} ds.

    D must be symmetric PSD and t >= 0; the result is symmetric PSD up to
    rounding.  For ||tB|| beyond order one the integral is assembled by
    interval doubling, which keeps stable drifts accurate at large t.
    """
    B = _as_square(B, "B")
    D = check_psd(D, "D")
    if B.shape != D.shape:
        raise ShapeMismatch(f"B and D must have equal shapes, got {B.shape} vs {D.shape}")
    if t < 0:
        raise ShapeMismatch(f"t must be nonnegative, got {t}")
    n = B.shape[0]
    if t == 0.0:
        return np.zeros((n, n))

    # choose 2^k subdivisions so the block exponential stays well scaled
    norm = float(np.linalg.norm(B, 2))
    k = max(0, int(np.ceil(np.log2(max(norm * t, 1e-300))))) if norm * t > 1.0 else 0
    s = t / (1 << k)

    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = B
    H[:n, n:] = D
    H[n:, n:] = -B.T
    F = expm(s * H)
    G = F[:n, n:] @ F[:n, :n].T
    G = 0.5 * (G + G.T)
    E = F[:n, :n]  # e^{sB}
    for _ in range(k):
        G = E @ G @ E.T + G
        G = 0.5 * (G + G.T)
        E = E @ E
    return G


def eig(M) -> np.ndarray:
    """Eigenvalues of M (with multiplicity), sorted by (real, imaginary) part."""
    M = _as_square(M, "M")
    try:
        w = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # QR iteration hit its cap
        raise ConvergenceFailure(str(exc)) from exc
    return w[np.lexsort((w.imag, w.real))]


def kalman_rank(B, D, rtol: float = RANK_RTOL) -> tuple[int, bool]:
    """Rank of the controllability matrix [D^1/2, B D^1/2, ..., B^{n-1} D^1/2].

    Returns ``(rank, hypoelliptic)`` where ``hypoelliptic`` means full rank:
    the noise directions, pushed around by the drift, span the whole space.
    The rank is read off a singular value decomposition with threshold
    ``rtol`` relative to the largest singular value.
    """
    B = _as_square(B, "B")
    S = psd_sqrt(D)
    if B.shape != S.shape:
        raise ShapeMismatch(f"B and D must have equal shapes, got {B.shape} vs {S.shape}")
    n = B.shape[0]
    blocks = [S]
    for _ in range(n - 1):
        blocks.append(B @ blocks[-1])
    C = np.hstack(blocks)
    sv = np.linalg.svd(C, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, n == 0
    rank = int(np.sum(sv > rtol * sv[0]))
    return rank, rank == n
