"""Dense complex linear-algebra kernels.

LAPACK (through numpy/scipy) does the heavy factorizations; this module adds
the conventions the rest of the package relies on: rank truncation by tail
energy, reproducible ordering and phase of singular and eigen vectors, and a
scaling-and-squaring matrix exponential.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonConvergenceError, ZeroMatrixError

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SvdFactors:
    """Truncated SVD ``Z ~ U @ diag(sigma) @ V.conj().T``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    frobenius_norm: float

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    @property
    def sigma_hat(self) -> np.ndarray:
        """Singular values of the Frobenius-normalized matrix."""
        return self.sigma / self.frobenius_norm

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.conj().T


def as_cmatrix(Z) -> np.ndarray:
    Z = np.array(Z, dtype=complex)
    if Z.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("matrix has non-finite entries")
    return Z


def phase_of_largest(vectors: np.ndarray) -> np.ndarray:
    """Per-column unit phase of the largest-magnitude entry.

    Near-ties in magnitude go to the lowest index so the choice is stable.
    """
    mags = np.abs(vectors)
    top = mags.max(axis=0)
    idx = np.argmax(mags >= top * (1 - 1e-9), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    return pivots / np.abs(pivots)


def _lex_key(u: np.ndarray) -> tuple:
    rounded = np.round(u, 12)
    return tuple(v for z in rounded for v in (-z.real, -z.imag))


def _order_ties(U: np.ndarray, s: np.ndarray, Vh: np.ndarray):
    order = list(range(s.size))
    start = 0
    while start < s.size:
        stop = start + 1
        while stop < s.size and s[start] - s[stop] <= _TIE_RTOL * s[0]:
            stop += 1
        if stop - start > 1:
            order[start:stop] = sorted(order[start:stop], key=lambda k: _lex_key(U[:, k]))
        start = stop
    return U[:, order], s[order], Vh[order]


def svd_truncated(Z, tol: float) -> SvdFactors:
    """SVD keeping the smallest rank whose discarded tail is below ``tol * ||Z||_F``."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    Z = as_cmatrix(Z)
    norm = float(np.linalg.norm(Z))
    if norm == 0:
        raise ZeroMatrixError("cannot factor an all-zero matrix")
    try:
        U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(str(exc)) from exc
    U, s, Vh = _order_ties(U, s, Vh)

    # tail[R] = energy of sigma[R:]
    tail = np.sqrt(np.concatenate([np.cumsum((s**2)[::-1])[::-1], [0.0]]))
    rank = int(np.argmax(tail < tol * norm))
    rank = max(rank, 1)

    U, s, V = U[:, :rank], s[:rank], Vh[:rank].conj().T
    phase = phase_of_largest(U)
    return SvdFactors(U=U / phase, sigma=s.copy(), V=V / phase, frobenius_norm=norm)


def pinv_truncated(factors: SvdFactors) -> np.ndarray:
    return (factors.V / factors.sigma) @ factors.U.conj().T


def eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs with unit eigenvectors whose largest entry is real positive.

    Eigenvalues are sorted by decreasing modulus, then by argument.
    """
    M = as_cmatrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("eig needs a square matrix")
    try:
        vals, vecs = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(str(exc)) from exc
    order = np.lexsort((np.round(np.angle(vals), 12), -np.round(np.abs(vals), 12)))
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return vals, vecs / phase_of_largest(vecs)


def schur(M) -> tuple[np.ndarray, np.ndarray]:
    """Complex Schur form ``M = W S W^dagger`` with ``S`` upper triangular."""
    M = as_cmatrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("schur needs a square matrix")
    try:
        S, W = scipy.linalg.schur(M, output="complex")
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(str(exc)) from exc
    return W, np.triu(S)


def expm(A, t: float = 1.0) -> np.ndarray:
    """``exp(t A)`` by scaling and squaring around a Taylor series.

    The argument is halved until its 1-norm is at most 1/2, the series is
    summed until terms drop below machine precision, then squared back.
    """
    B = t * as_cmatrix(A)
    n = B.shape[0]
    norm = np.linalg.norm(B, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0 else 0
    B = B / 2.0**squarings

    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 60):
        term = term @ B / k
        result = result + term
        if np.linalg.norm(term, 1) <= np.finfo(float).eps * np.linalg.norm(result, 1):
            break
    for _ in range(squarings):
        result = result @ result
    return result
