"""Snapshot generation for linear systems and encoding into data states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepTooLargeError
from .numerics import as_cmatrix, expm
from .qstate import PureState, RegisterLayout, qubits_for

WHICH = ("X", "Xprime", "Joint")


@dataclass(frozen=True, eq=False)
class SnapshotData:
    """Snapshot matrices with column ``k*T + t`` holding trajectory k at step t."""

    X: np.ndarray
    Xprime: np.ndarray
    dt: float
    L: int
    T: int

    def __post_init__(self):
        X, Xp = as_cmatrix(self.X), as_cmatrix(self.Xprime)
        if X.shape != Xp.shape:
            raise ValueError(f"X {X.shape} and X' {Xp.shape} differ in shape")
        if X.shape[1] != self.L * self.T:
            raise ValueError(f"{X.shape[1]} columns but L*T = {self.L * self.T}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for arr in (X, Xp):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Xprime", Xp)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]

    @property
    def joint(self) -> np.ndarray:
        return np.hstack([self.X, self.Xprime])

    def matrix(self, which: str) -> np.ndarray:
        return {"X": self.X, "Xprime": self.Xprime, "Joint": self.joint}[which]

    def row_layout(self) -> RegisterLayout:
        return RegisterLayout.of(("1", qubits_for(self.N)))

    def column_layout(self, joint: bool = False) -> RegisterLayout:
        regs = [("2", qubits_for(self.L)), ("3", qubits_for(self.T))]
        if joint:
            regs.append(("4", 1))
        return RegisterLayout.of(*regs)

    def column_positions(self, joint: bool = False) -> np.ndarray:
        """Basis index in the column registers of every matrix column."""
        d3 = 2 ** qubits_for(self.T)
        j = np.arange(self.M)
        pos = (j // self.T) * d3 + j % self.T
        if joint:
            pos = np.concatenate([2 * pos, 2 * pos + 1])
        return pos


def simulate_snapshots(A, initial_states, T: int, dt: float,
                       check_step: bool = True) -> SnapshotData:
    """Integrate x' = A x exactly from each initial state for T steps.

    With ``check_step`` the step must satisfy ``dt * ||A||_2 <= 1``.
    """
    A = as_cmatrix(A)
    x0 = as_cmatrix(initial_states)
    if A.shape[0] != A.shape[1] or x0.shape[0] != A.shape[0]:
        raise ValueError("A must be N x N and initial_states N x L")
    if T < 1 or x0.shape[1] < 1:
        raise ValueError("need T >= 1 and at least one initial state")
    if check_step and dt * np.linalg.norm(A, 2) > 1:
        raise StepTooLargeError(f"dt*||A||_2 = {dt * np.linalg.norm(A, 2):.6g} exceeds 1")

    K = expm(A, dt)
    L = x0.shape[1]
    N = A.shape[0]
    traj = np.empty((L, T + 1, N), dtype=complex)
    traj[:, 0] = x0.T
    for t in range(T):
        traj[:, t + 1] = traj[:, t] @ K.T
    X = traj[:, :T].reshape(L * T, N).T
    Xprime = traj[:, 1:].reshape(L * T, N).T
    return SnapshotData(X=X, Xprime=Xprime, dt=float(dt), L=L, T=T)


def embed_matrix(Z: np.ndarray, row_layout: RegisterLayout, col_layout: RegisterLayout,
                 col_positions: np.ndarray) -> np.ndarray:
    """Unnormalized ket amplitudes of a matrix over row and column registers."""
    out = np.zeros((row_layout.dim, col_layout.dim), dtype=complex)
    out[:Z.shape[0], col_positions] = Z
    return out.reshape(-1)


def encode_data_state(data: SnapshotData, which: str) -> PureState:
    """Amplitude-encode X, X' or [X X'] (the latter with register 4 flagging X')."""
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    joint = which == "Joint"
    layout = data.row_layout() + data.column_layout(joint)
    Z = data.matrix(which)
    amps = embed_matrix(Z, data.row_layout(), data.column_layout(joint),
                        data.column_positions(joint))
    return PureState(layout, amps / np.linalg.norm(Z))
