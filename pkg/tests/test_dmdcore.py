import warnings

import numpy as np
import pytest

from conftest import random_system
from qdmd.dmdcore import continuous_exponents, exact_dmd, projected_operator, schur_dmd
from qdmd.dynamics import SnapshotData, simulate_snapshots
from qdmd.errors import IllConditionedWarning, ZeroEigenvalueError, ZeroMatrixError


def test_identity_dynamics():
    d = simulate_snapshots(np.zeros((3, 3)), np.eye(3), 2, 0.1)
    res = exact_dmd(d, 1e-8)
    np.testing.assert_allclose(res.eigenvalues, 1)
    s = schur_dmd(d, 1e-8)
    np.testing.assert_allclose(s.S, np.eye(s.S.shape[0]), atol=1e-12)


def test_rotation_spectrum():
    d = simulate_snapshots([[0, 1], [-1, 0]], np.eye(2), 3, 0.5)
    vals = exact_dmd(d, 1e-10).eigenvalues
    assert np.sort_complex(vals) == pytest.approx(np.sort_complex(np.exp([0.5j, -0.5j])), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_constructed_generator_recovered(seed):
    d, A = random_system(seed, N=4, L=4, T=2)
    res = exact_dmd(d, 1e-12)
    assert res.R == 4
    for lam in np.linalg.eigvals(A):
        assert np.min(np.abs(res.cont_exponents - lam)) < 1e-8


def test_zero_matrix():
    d = SnapshotData(np.zeros((2, 2)), np.zeros((2, 2)), 0.1, 1, 2)
    with pytest.raises(ZeroMatrixError):
        exact_dmd(d, 1e-8)


def test_continuous_exponents():
    assert continuous_exponents([1.0], 0.7)[0] == 0
    assert continuous_exponents([np.exp(0.3j)], 1.0)[0] == pytest.approx(0.3j)
    z = -0.1 + 2j
    assert continuous_exponents([np.exp(z * 0.4)], 0.4)[0] == pytest.approx(z)
    with pytest.raises(ZeroEigenvalueError):
        continuous_exponents([0.0], 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_schur_matches_eig(seed):
    d, _ = random_system(seed)
    vals = exact_dmd(d, 1e-8).eigenvalues
    s = schur_dmd(d, 1e-8)
    for lam in np.diag(s.S):
        assert np.min(np.abs(vals - lam)) < 1e-8
    np.testing.assert_allclose(s.W_small @ s.S @ s.W_small.conj().T,
                               projected_operator(d, 1e-8)[1], atol=1e-10)


def test_gauge_invariance_of_eigenvalues():
    d, _ = random_system(3)
    Q, k = projected_operator(d, 1e-8)
    phases = np.exp(1j * np.random.default_rng(0).uniform(0, 2 * np.pi, k.shape[0]))
    k2 = np.diag(phases.conj()) @ k @ np.diag(phases)
    a = np.sort_complex(np.linalg.eigvals(k))
    b = np.sort_complex(np.linalg.eigvals(k2))
    assert np.max(np.abs(a - b)) < 1e-9


def test_jordan_block_warns_and_schur_stays_stable():
    lam, dt = -0.2, 0.5
    d = simulate_snapshots([[lam, 1.0], [0.0, lam]], np.eye(2), 2, dt)
    with pytest.warns(IllConditionedWarning):
        exact_dmd(d, 1e-12)
    s = schur_dmd(d, 1e-12)
    np.testing.assert_allclose(np.diag(s.S), np.exp(dt * lam), atol=1e-8)
    _, k = projected_operator(d, 1e-12)
    assert np.linalg.norm(s.W_small @ s.S @ s.W_small.conj().T - k) <= 1e-8


def test_well_conditioned_data_is_silent():
    d, _ = random_system(1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", IllConditionedWarning)
        exact_dmd(d, 1e-8)


def test_truncated_xprime_matches_on_full_rank_data():
    d, _ = random_system(4)
    np.testing.assert_allclose(projected_operator(d, 1e-8, truncate_xprime=True)[1],
                               projected_operator(d, 1e-8)[1], atol=1e-12)


def test_truncated_xprime_near_threshold():
    # X keeps a singular value at ~1e-8 of its norm while X' drops its last one
    d, _ = random_system(1007, N=8, T=4)
    full = projected_operator(d, 1e-8)[1]
    trunc = projected_operator(d, 1e-8, truncate_xprime=True)[1]
    assert np.max(np.abs(full - trunc)) > 0.1
