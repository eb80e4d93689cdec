"""SWAP-test and Hadamard-test estimators.

Each circuit is evaluated through its ancilla outcome probabilities. With
``shots == 0`` the exact expectation is returned; otherwise the outcome
counts are drawn from those probabilities and the estimate carries a
plug-in standard error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import BadBasisLabelsError
from .qstate import PureState, overlap

PARTS = ("Re", "Im")


@dataclass(frozen=True)
class EstimatorResult:
    value: float
    shots: int
    std_error: float
    site_label: str


def _check_part(part: str) -> None:
    if part not in PARTS:
        raise ValueError(f"part must be 'Re' or 'Im', got {part!r}")


def _rng_for(shots: int, rng: np.random.Generator | None) -> np.random.Generator | None:
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if shots and rng is None:
        raise ValueError("sampled mode needs an rng stream")
    return rng


def _bernoulli_difference(target: float, shots: int, rng, site: str) -> EstimatorResult:
    """Estimate Pr[0] - Pr[1] = target from a single ancilla qubit."""
    target = float(np.clip(target, -1.0, 1.0))
    if shots == 0:
        return EstimatorResult(target, 0, 0.0, site)
    p0 = (1.0 + target) / 2.0
    n0 = int(rng.binomial(shots, p0))
    p_hat = n0 / shots
    se = 2.0 * np.sqrt(p_hat * (1.0 - p_hat) / shots)
    return EstimatorResult(2.0 * p_hat - 1.0, shots, float(se), site)


def swap2(psi0: PureState, psi1: PureState, shots: int = 0,
          rng: np.random.Generator | None = None, site: str = "swap2") -> EstimatorResult:
    """Estimate ``|<psi0|psi1>|**2``."""
    rng = _rng_for(shots, rng)
    return _bernoulli_difference(abs(overlap(psi0, psi1)) ** 2, shots, rng, site)


def triple_product(psi0: PureState, psi1: PureState, psi2: PureState) -> complex:
    return overlap(psi0, psi1) * overlap(psi1, psi2) * overlap(psi2, psi0)


def swap3(psi0: PureState, psi1: PureState, psi2: PureState, part: str = "Re",
          shots: int = 0, rng: np.random.Generator | None = None,
          site: str = "swap3") -> EstimatorResult:
    """Estimate one part of ``<psi0|psi1><psi1|psi2><psi2|psi0>``."""
    _check_part(part)
    rng = _rng_for(shots, rng)
    t = triple_product(psi0, psi1, psi2)
    return _bernoulli_difference(t.real if part == "Re" else t.imag, shots, rng, site)


def branch_component(s: PureState, label: Mapping[str, int]) -> np.ndarray:
    """Unnormalized amplitudes of the remaining registers at a basis label."""
    tensor = s.tensor()
    index = [slice(None)] * tensor.ndim
    for name, value in label.items():
        index[s.layout.axis(name)] = int(value)
    return tensor[tuple(index)].reshape(-1)


def hadamard_test(s: PureState, i: Mapping[str, int], j: Mapping[str, int],
                  part: str = "Re", shots: int = 0,
                  rng: np.random.Generator | None = None,
                  site: str = "hadamard") -> EstimatorResult:
    """Estimate ``2 Re<psi_i|psi_j>`` (or ``2 Im``) as ``Pr[i] - Pr[j]``.

    ``i`` and ``j`` map index-register names to basis values; the other
    registers carry the branch components. The two-level Hadamard mixes
    only the i and j values and leaves every other index value alone.
    """
    _check_part(part)
    rng = _rng_for(shots, rng)
    if set(i) != set(j) or not i:
        raise BadBasisLabelsError("i and j must label the same index registers")
    if all(i[k] == j[k] for k in i):
        raise BadBasisLabelsError(f"basis labels coincide: {dict(i)}")
    for name in i:
        s.layout.axis(name)

    psi_i = branch_component(s, i)
    psi_j = branch_component(s, j)
    if part == "Im":
        psi_j = -1j * psi_j
    # Pr[i] - Pr[j] = 2 Re<psi_i|psi_j>; taken from the inner product
    # directly to avoid cancellation between the two probabilities
    diff = 2.0 * float(np.vdot(psi_i, psi_j).real)
    if shots == 0:
        return EstimatorResult(diff, 0, 0.0, site)

    mean = float(np.vdot(psi_i, psi_i).real + np.vdot(psi_j, psi_j).real) / 2.0
    p_i, p_j = max(mean + diff / 2.0, 0.0), max(mean - diff / 2.0, 0.0)
    rest = max(0.0, 1.0 - p_i - p_j)
    probs = np.array([p_i, p_j, rest]) / (p_i + p_j + rest)
    n_i, n_j, _ = rng.multinomial(shots, probs)
    f_i, f_j = n_i / shots, n_j / shots
    var = (f_i + f_j - (f_i - f_j) ** 2) / shots
    return EstimatorResult(f_i - f_j, shots, float(np.sqrt(max(var, 0.0))), site)

