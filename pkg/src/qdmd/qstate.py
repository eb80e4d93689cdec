"""Statevectors over named registers.

Registers are laid out big-endian: the first register in the layout is the
most significant part of the basis index. A register may have zero qubits,
in which case it has a single basis value 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatchError, RegisterOverflowError, UnknownRegisterError

MAX_QUBITS = 24


def qubits_for(size: int) -> int:
    """Qubits needed to index ``size`` values (zero for a single value)."""
    return max(0, int(np.ceil(np.log2(size)))) if size > 1 else 0


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.registers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        if any(n < 0 for _, n in self.registers):
            raise ValueError("qubit counts must be non-negative")
        if self.total_qubits > MAX_QUBITS:
            raise RegisterOverflowError(
                f"{self.total_qubits} qubits exceeds the {MAX_QUBITS}-qubit cap")

    @classmethod
    def of(cls, *registers: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple((str(name), int(n)) for name, n in registers))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    @property
    def total_qubits(self) -> int:
        return sum(n for _, n in self.registers)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2**n for _, n in self.registers)

    @property
    def dim(self) -> int:
        return 2**self.total_qubits

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownRegisterError(f"no register named {name!r}") from None

    def size(self, name: str) -> int:
        return self.shape[self.axis(name)]

    def __add__(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.registers + other.registers)


@dataclass(frozen=True, eq=False)
class PureState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise ValueError(f"expected {self.layout.dim} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, layout: RegisterLayout, vector, normalize: bool = False) -> "PureState":
        """Embed ``vector`` into ``layout``, zero-padding the tail."""
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        if vec.size > layout.dim:
            raise ValueError(f"vector of length {vec.size} does not fit in {layout.dim}")
        amps = np.zeros(layout.dim, dtype=complex)
        amps[:vec.size] = vec
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps /= norm
        return cls(layout, amps)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped with one axis per register."""
        return self.amplitudes.reshape(self.layout.shape)

    def __repr__(self) -> str:
        return f"PureState({self.layout.registers}, dim={self.layout.dim})"


def register_distribution(s: PureState, reg: str) -> np.ndarray:
    """Marginal outcome probabilities of one register."""
    axis = s.layout.axis(reg)
    probs = np.abs(s.tensor()) ** 2
    others = tuple(a for a in range(probs.ndim) if a != axis)
    return probs.sum(axis=others)


def measure_register(s: PureState, reg: str, rng: np.random.Generator
                     ) -> tuple[int, PureState, float]:
    """Projective measurement of ``reg``; returns (outcome, collapsed state, probability)."""
    probs = register_distribution(s, reg)
    probs = probs / probs.sum()
    outcome = int(rng.choice(probs.size, p=probs))
    collapsed = np.zeros(s.layout.shape, dtype=complex)
    index = [slice(None)] * len(s.layout.shape)
    index[s.layout.axis(reg)] = outcome
    collapsed[tuple(index)] = s.tensor()[tuple(index)]
    collapsed /= np.sqrt(probs[outcome])
    return outcome, PureState(s.layout, collapsed), float(probs[outcome])


def overlap(a: PureState, b: PureState) -> complex:
    """Inner product <a|b>."""
    if a.layout != b.layout:
        raise LayoutMismatchError(f"{a.layout.registers} vs {b.layout.registers}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))
