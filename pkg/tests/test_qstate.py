import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_system, random_unit
from qdmd.dynamics import encode_data_state
from qdmd.errors import LayoutMismatchError, RegisterOverflowError, UnknownRegisterError
from qdmd.qstate import (PureState, RegisterLayout, measure_register, overlap, qubits_for,
                         register_distribution)

ONE = RegisterLayout.of(("a", 1))
TWO = RegisterLayout.of(("a", 1), ("b", 1))


def test_qubits_for():
    assert [qubits_for(n) for n in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]


def test_register_cap():
    with pytest.raises(RegisterOverflowError):
        RegisterLayout.of(("a", 20), ("b", 5))


def test_unknown_register():
    s = PureState.from_vector(ONE, [1, 0])
    with pytest.raises(UnknownRegisterError):
        register_distribution(s, "z")


def test_distribution_basics():
    np.testing.assert_allclose(register_distribution(PureState.from_vector(ONE, [1, 0]), "a"), [1, 0])
    plus = PureState.from_vector(ONE, [1, 1], normalize=True)
    np.testing.assert_allclose(register_distribution(plus, "a"), [0.5, 0.5])


def test_joint_register4_marginal():
    data, _ = random_system(1)
    s = encode_data_state(data, "Joint")
    nx, nxp = np.linalg.norm(data.X) ** 2, np.linalg.norm(data.Xprime) ** 2
    np.testing.assert_allclose(register_distribution(s, "4"), [nx, nxp] / (nx + nxp), rtol=1e-12)


def test_deterministic_measurement():
    s = PureState.from_vector(TWO, [0, 0, 1, 0])
    rng = np.random.default_rng(0)
    for _ in range(5):
        outcome, collapsed, p = measure_register(s, "a", rng)
        assert (outcome, p) == (1, 1.0)
        np.testing.assert_allclose(collapsed.amplitudes, s.amplitudes)


def test_collapse_to_branch():
    a, b = np.array([0.6, 0.8]), np.array([0.8j, -0.6])
    s = PureState(TWO, np.concatenate([a, b]) / np.sqrt(2))
    rng = np.random.default_rng(2)
    seen = set()
    for _ in range(20):
        outcome, collapsed, p = measure_register(s, "a", rng)
        seen.add(outcome)
        assert p == pytest.approx(0.5)
        expected = np.concatenate([a, 0 * a]) if outcome == 0 else np.concatenate([0 * b, b])
        np.testing.assert_allclose(collapsed.amplitudes, expected, atol=1e-15)
    assert seen == {0, 1}


def test_joint_sampling_ratio():
    data, _ = random_system(7)
    s = encode_data_state(data, "Joint")
    p1 = register_distribution(s, "4")[1]
    shots = 10**6
    ones = np.random.default_rng(9).binomial(shots, p1)
    sigma = np.sqrt(shots * p1 * (1 - p1))
    assert abs(ones - shots * p1) < 5 * sigma
    # the per-shot path draws from the same distribution
    rng = np.random.default_rng(10)
    outcomes = [measure_register(s, "4", rng)[0] for _ in range(2000)]
    assert abs(np.mean(outcomes) - p1) < 5 * np.sqrt(p1 * (1 - p1) / 2000)


def test_overlap():
    rng = np.random.default_rng(3)
    a, b = random_unit(rng, 4), random_unit(rng, 4)
    sa, sb = PureState(TWO, a), PureState(TWO, b)
    assert overlap(sa, sa) == pytest.approx(1)
    assert overlap(PureState(TWO, np.eye(4)[0]), PureState(TWO, np.eye(4)[1])) == 0
    assert abs(overlap(sa, sb) - np.conj(a) @ b) < 1e-14
    with pytest.raises(LayoutMismatchError):
        overlap(sa, PureState(RegisterLayout.of(("c", 2)), a))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
def test_total_probability(seed, qa, qb):
    rng = np.random.default_rng(seed)
    layout = RegisterLayout.of(("a", qa), ("b", qb))
    s = PureState(layout, random_unit(rng, layout.dim))
    pa = register_distribution(s, "a")
    assert pa.sum() == pytest.approx(1, abs=1e-10)
    # marginal of b equals the pa-weighted sum of conditional marginals
    tensor = s.tensor()
    conditional = sum(
        pa[o] * register_distribution(PureState(layout, np.where(
            np.arange(layout.dim) // layout.size("b") == o, s.amplitudes, 0) / np.sqrt(pa[o])), "b")
        for o in range(pa.size) if pa[o] > 0)
    np.testing.assert_allclose(conditional, register_distribution(s, "b"), atol=1e-10)
    assert tensor.shape == (2**qa, 2**qb)


def test_sampling_reproducible():
    s = PureState.from_vector(TWO, [1, 1, 1, 1], normalize=True)
    draw = lambda: [measure_register(s, "b", np.random.default_rng(42))[0] for _ in range(3)]
    assert draw() == draw()
