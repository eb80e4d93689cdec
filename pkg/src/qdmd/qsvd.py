"""Ideal quantum-SVD oracle state and singular-triple sampling.

The oracle holds ``sum_r s_r |u_r>|v_r*>|q_r>_5`` where ``s_r`` are the
normalized singular values and register 5 stores either a fixed-point code
of ``s_r**2`` or, in the idealized mode, the index ``r + 1`` itself.
Code 0 is reserved: other protocol branches park register 5 there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SnapshotData
from .errors import SingularValueCollisionError
from .numerics import SvdFactors, as_cmatrix, phase_of_largest, svd_truncated
from .qstate import PureState, RegisterLayout, measure_register, qubits_for

REG5 = "5"


@dataclass(frozen=True, eq=False)
class SvdOracle:
    """Oracle state plus what is needed to decode its value register."""

    state: PureState
    factors: SvdFactors
    bits: int | None
    codes: np.ndarray
    row_layout: RegisterLayout
    col_layout: RegisterLayout
    col_positions: np.ndarray

    @property
    def exact_register(self) -> bool:
        return self.bits is None

    @property
    def rank(self) -> int:
        return self.factors.rank

    def decode(self, code: int) -> float:
        """Squared normalized singular value carried by a register-5 code."""
        if self.bits is None:
            return float(self.factors.sigma_hat[code - 1] ** 2)
        return code / 2.0**self.bits

    def index_of(self, code: int) -> int:
        return int(np.flatnonzero(self.codes == code)[0])

    def u_state(self, r: int) -> PureState:
        return PureState.from_vector(self.row_layout, self.factors.U[:, r])

    def v_conj_state(self, r: int) -> PureState:
        amps = np.zeros(self.col_layout.dim, dtype=complex)
        amps[self.col_positions] = self.factors.V[:, r].conj()
        return PureState(self.col_layout, amps)


@dataclass(frozen=True, eq=False)
class SingularTriple:
    r: int
    sigma_hat: float
    u_state: PureState
    v_conj_state: PureState
    register5: int


def encode_register5(sigma_hat: np.ndarray, bits: int | None) -> tuple[np.ndarray, int]:
    """Register-5 codes and qubit count.

    Fixed point uses one integer bit above ``bits`` fractional bits, so a
    rank-1 matrix (value exactly 1) is representable without clamping.
    """
    if bits is None:
        return np.arange(1, sigma_hat.size + 1), qubits_for(sigma_hat.size + 1)
    if bits < 4:
        raise ValueError("register 5 needs at least 4 fractional bits")
    codes = np.rint(sigma_hat**2 * 2.0**bits).astype(np.int64)
    if np.any(codes == 0):
        raise SingularValueCollisionError(
            f"a singular value squared rounds to zero with {bits} bits")
    if np.unique(codes).size != codes.size:
        raise SingularValueCollisionError(
            f"distinct singular values share a {bits}-bit code; raise the bit count")
    return codes, bits + 1


def build_oracle(Z, tol: float, bits: int | None, row_layout: RegisterLayout,
                 col_layout: RegisterLayout, col_positions: np.ndarray) -> SvdOracle:
    factors = svd_truncated(Z, tol)
    codes, q5 = encode_register5(factors.sigma_hat, bits)
    reg5 = RegisterLayout.of((REG5, q5))
    layout = row_layout + col_layout + reg5

    weights = factors.sigma_hat / np.linalg.norm(factors.sigma_hat)
    amps = np.zeros((row_layout.dim, col_layout.dim, reg5.dim), dtype=complex)
    for r in range(factors.rank):
        v_conj = np.zeros(col_layout.dim, dtype=complex)
        v_conj[col_positions] = factors.V[:, r].conj()
        u = np.zeros(row_layout.dim, dtype=complex)
        u[:factors.U.shape[0]] = factors.U[:, r]
        amps[:, :, codes[r]] += weights[r] * np.outer(u, v_conj)
    return SvdOracle(PureState(layout, amps), factors, bits, codes,
                     row_layout, col_layout, np.asarray(col_positions))


def svd_oracle_state(Z, tol: float, b: int = 12, exact_register: bool = False) -> SvdOracle:
    """Oracle for a bare matrix: rows on register "1", columns on register "2"."""
    Z = as_cmatrix(Z)
    rows = RegisterLayout.of(("1", qubits_for(Z.shape[0])))
    cols = RegisterLayout.of(("2", qubits_for(Z.shape[1])))
    return build_oracle(Z, tol, None if exact_register else b, rows, cols,
                        np.arange(Z.shape[1]))


def data_oracle(data: SnapshotData, which: str, tol: float, b: int | None) -> SvdOracle:
    """Oracle for X, X' or [X X'] with the data-state register layout."""
    joint = which == "Joint"
    return build_oracle(data.matrix(which), tol, b, data.row_layout(),
                        data.column_layout(joint), data.column_positions(joint))


def sample_triple(oracle: SvdOracle, rng: np.random.Generator) -> SingularTriple:
    """Measure register 5 and split the collapsed remainder into u and v*."""
    code, collapsed, _ = measure_register(oracle.state, REG5, rng)
    block = collapsed.tensor()[:, :, code]
    col = int(np.argmax(np.linalg.norm(block, axis=0)))
    u = block[:, col] / np.linalg.norm(block[:, col])
    u = u / phase_of_largest(u[:, None])[0]
    v_conj = u.conj() @ block
    v_conj = v_conj / np.linalg.norm(v_conj)
    return SingularTriple(
        r=oracle.index_of(code),
        sigma_hat=float(np.sqrt(oracle.decode(code))),
        u_state=PureState(oracle.row_layout, u),
        v_conj_state=PureState(oracle.col_layout, v_conj),
        register5=code,
    )
