import numpy as np
import pytest

from qdmd.dynamics import simulate_snapshots


def random_system(seed, N=4, L=2, T=2, step=0.9):
    """Random diagonalizable A with eigenvalues in a damped band, and its snapshots."""
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    D = rng.uniform(-0.5, 0.1, N) + 1j * rng.uniform(-2, 2, N)
    A = P @ np.diag(D) @ np.linalg.inv(P)
    dt = step / np.linalg.norm(A, 2)
    x0 = rng.normal(size=(N, L)) + 1j * rng.normal(size=(N, L))
    return simulate_snapshots(A, x0, T, dt), A


def random_unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def jacobi_singular_values(Z, sweeps=60):
    """One-sided Jacobi SVD written out with plain rotations (no LAPACK)."""
    A = np.array(Z, dtype=complex)
    if A.shape[0] < A.shape[1]:
        A = A.conj().T
    n = A.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = np.vdot(A[:, p], A[:, p]).real
                beta = np.vdot(A[:, q], A[:, q]).real
                gamma = np.vdot(A[:, p], A[:, q])
                if abs(gamma) < 1e-300:
                    continue
                off = max(off, abs(gamma) / np.sqrt(alpha * beta))
                phase = gamma / abs(gamma)
                zeta = (beta - alpha) / (2 * abs(gamma))
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta**2)) if zeta != 0 else 1.0
                c = 1 / np.sqrt(1 + t**2)
                s = c * t
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * np.conj(phase) * aq
                A[:, q] = s * phase * ap + c * aq
        if off < 1e-15:
            break
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
