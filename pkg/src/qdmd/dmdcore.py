"""Classical DMD: the projected operator, its eigen- and Schur-decompositions."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import SnapshotData
from .errors import IllConditionedWarning, ZeroEigenvalueError
from .kprime import fix_left_phases
from .numerics import eig, pinv_truncated, schur, svd_truncated

COND_WARN = 1e6


@dataclass(frozen=True, eq=False)
class DmdResult:
    R: int
    Q: np.ndarray
    kprime: np.ndarray
    eigenvalues: np.ndarray
    modes_small: np.ndarray
    modes_full: np.ndarray
    cont_exponents: np.ndarray
    eigvec_condition: float


@dataclass(frozen=True, eq=False)
class SchurDmdResult:
    W_small: np.ndarray
    S: np.ndarray
    W_full: np.ndarray


def projected_operator(data: SnapshotData, tol: float, phase_ref=None,
                       truncate_xprime: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q, Q^dagger X' X^+ Q)`` with Q spanning the dominant [X X'] space.

    ``truncate_xprime`` replaces X' by its rank-truncated SVD, which is all the
    quantum route ever sees. The two differ by up to ``tol ||X'|| / sigma_min(X)``,
    which is O(1) when X itself sits near the truncation threshold.
    """
    joint = svd_truncated(data.joint, tol)
    if phase_ref is not None:
        joint = fix_left_phases(joint, phase_ref, "Joint")
    Q = joint.U
    x_pinv = pinv_truncated(svd_truncated(data.X, tol))
    xp = data.Xprime
    if truncate_xprime:
        f = svd_truncated(xp, tol)
        xp = (f.U * f.sigma) @ f.V.conj().T
    return Q, Q.conj().T @ xp @ x_pinv @ Q


def continuous_exponents(eigenvalues, dt: float) -> np.ndarray:
    """Principal-branch ``log(lambda) / dt``."""
    lam = np.asarray(eigenvalues, dtype=complex)
    if np.any(lam == 0):
        raise ZeroEigenvalueError("log of a zero eigenvalue")
    return np.log(lam) / dt


def exact_dmd(data: SnapshotData, tol: float, phase_ref=None) -> DmdResult:
    """Exact DMD with projection onto the leading singular vectors of [X X'].

    ``phase_ref`` (a vector or state on the row space) fixes the phase of
    each column of Q so that its overlap with the reference is real positive.
    """
    Q, kp = projected_operator(data, tol, phase_ref)
    vals, vecs = eig(kp)
    cond = float(np.linalg.cond(vecs))
    if not cond < COND_WARN:
        warnings.warn(
            f"eigenvector matrix condition number {cond:.3g} exceeds {COND_WARN:g}; "
            "the operator may be (nearly) defective, consider schur_dmd",
            IllConditionedWarning, stacklevel=2)
    return DmdResult(
        R=Q.shape[1], Q=Q, kprime=kp, eigenvalues=vals, modes_small=vecs,
        modes_full=Q @ vecs,
        cont_exponents=continuous_exponents(vals, data.dt) if np.all(vals != 0) else
        np.full(vals.shape, np.nan, dtype=complex),
        eigvec_condition=cond,
    )


def schur_dmd(data: SnapshotData, tol: float) -> SchurDmdResult:
    Q, kp = projected_operator(data, tol)
    W, S = schur(kp)
    return SchurDmdResult(W_small=W, S=S, W_full=Q @ W)
