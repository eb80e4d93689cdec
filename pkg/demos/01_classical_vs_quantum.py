"""Damped oscillator: classical exact DMD next to the simulated quantum estimate of K'.

Run with ``python3 demos/01_classical_vs_quantum.py``.
"""
import numpy as np

from qdmd.dmdcore import continuous_exponents, exact_dmd, projected_operator
from qdmd.dynamics import simulate_snapshots
from qdmd.kprime import estimate_kprime

A = np.array([[-0.1, 1.0], [-1.0, -0.1]])
dt = 0.5
data = simulate_snapshots(A, np.eye(2), T=4, dt=dt)
print(f"snapshots: N={data.N}, M={data.M}")

classical = exact_dmd(data, 1e-8)
print("classical exponents:", np.round(np.sort_complex(classical.cont_exponents), 12))

# exact mode: every swap/Hadamard probability is evaluated analytically
est, inputs = estimate_kprime(data, 1e-8, shots=0)
_, oracle = projected_operator(data, 1e-8, phase_ref=inputs.refs.chi1, truncate_xprime=True)
print(f"exact mode   |K'_q - K'_c|max = {np.abs(est.kprime - oracle).max():.2e}")

for shots in (10**3, 10**5):
    noisy, _ = estimate_kprime(data, 1e-8, shots=shots, seed=1)
    lam = np.linalg.eigvals(noisy.kprime)
    exps = np.sort_complex(continuous_exponents(lam, dt))
    print(f"shots={shots:>6}  |K'_q - K'_c|max = {np.abs(noisy.kprime - oracle).max():.2e}"
          f"  exponents {np.round(exps, 4)}  total shots {sum(noisy.shot_ledger.values())}")
