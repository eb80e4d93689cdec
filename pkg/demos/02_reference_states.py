"""How the phase references chi1 and chi2 are built, and the overlaps they guarantee."""
import numpy as np

from qdmd.dynamics import simulate_snapshots
from qdmd.kprime import prepare_inputs
from qdmd.refstates import bound_thresholds, verify_bounds

rng = np.random.default_rng(5)
N = 6
P = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))[0]
A = P @ np.diag(rng.uniform(-0.4, 0.0, N) + 1j * rng.uniform(-1, 1, N)) @ P.conj().T
data = simulate_snapshots(A, rng.normal(size=(N, 2)), T=3, dt=0.8 / np.linalg.norm(A, 2))

refs = prepare_inputs(data, 1e-8, None, 0, 0).refs
print(f"R = {refs.R}")
print("correction sets:", refs.sets)
print("normalizing constants:", {k: round(v, 4) for k, v in refs.constants.items()})

bounds = bound_thresholds(refs.R)
for key, overlaps in refs.chi1_overlaps().items():
    print(f"min |<chi1|u^{key}>| = {overlaps.min():.4f}   proven >= {bounds['chi1/' + key]:.4f}")
for key, overlaps in refs.chi2_overlaps().items():
    print(f"min |<chi2|v^{key}*>| = {overlaps.min():.4f}   proven >= {bounds['chi2/' + key]:.4f}")
print(f"zeta = {refs.zeta:.4f}, zeta1 = {refs.zeta1:.4f}, zeta2 = {refs.zeta2:.4f}")
print("smallest margin:", min(verify_bounds(refs).values()))
