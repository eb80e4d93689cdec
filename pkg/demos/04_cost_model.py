"""Sampling budgets for one dataset and the coupon-collector estimate behind them."""
import numpy as np

from qdmd.costmodel import brayton_expected_trials, cost_report, coupon_collector_mc
from qdmd.dynamics import simulate_snapshots
from qdmd.errors import DomainError
from qdmd.kprime import prepare_inputs

A = np.array([[-0.1, 1.0, 0.0], [-1.0, -0.1, 0.2], [0.0, 0.0, -0.4]])
data = simulate_snapshots(A, np.eye(3)[:, [0, 2]], T=3, dt=0.5)
report = cost_report(prepare_inputs(data, 1e-8, None, 0, 0), epsilon=0.05)

print(f"kappa = {report.kappa:.3f}, eta = {report.eta:.3f}, zeta = {report.zeta:.4f}")
print("norm-ratio shots:", report.table1_budgets["norm_ratio"])
print("left Gram shots (Q^dag U'):\n", report.table1_budgets["left_gram"]["QUp"])
print("total quantum SVDs for all SWAP tests:", report.total_qsvd)
print("1/min sigma^2 <= R kappa^2:", report.sigma_min_check)

# the asymptotic formula is sharp only for many, equally likely items
rng = np.random.default_rng(0)
for n in (4, 8, 64):
    for m in (1, 3):
        p = np.full(n, 1 / n)
        mc = coupon_collector_mc(p, m, 10**4, rng)
        try:
            formula = f"{brayton_expected_trials(n, m, p):8.2f}"
        except DomainError:
            formula = "   undef"
        print(f"n={n:>2} m={m}  formula {formula}  simulation {mc.mean:8.2f} +- {mc.std_error:.2f}")
