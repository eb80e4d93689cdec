"""Sampling-cost estimates for the quantum pipeline.

Every big-O expression is evaluated with constant factor 1, so the numbers are
relative budgets for comparing instances, not guaranteed shot counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDistributionError, DomainError, ZeroReferenceOverlapError
from .refstates import ReferenceStates

EULER_GAMMA = 0.5772156649015329


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-9))


# ---------------------------------------------------------------- coupon collecting

def _check_probabilities(probabilities) -> np.ndarray:
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty vector")
    if np.any(p <= 0):
        raise DegenerateDistributionError("every probability must be positive")
    if abs(p.sum() - 1) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    return p


def brayton_expected_trials(n: int, m: int, probabilities) -> float:
    """Asymptotic number of draws to see every one of ``n`` items ``m`` times.

    Uses the large-n form with the o(1) term dropped, ``delta = n p_min`` and
    ``l`` the fraction of items at the minimum probability.
    """
    p = _check_probabilities(probabilities)
    if p.size != n:
        raise ValueError(f"{p.size} probabilities for n = {n}")
    if m < 1:
        raise ValueError("m must be at least 1")
    p_min = float(p.min())
    delta = n * p_min
    l = float(np.count_nonzero(np.isclose(p, p_min, rtol=1e-12, atol=0))) / n
    log_gamma_n = math.log(l) + (m - 1) * math.log(delta) - math.lgamma(m) + math.log(n)
    bracket = log_gamma_n + EULER_GAMMA
    if m > 1:
        if log_gamma_n <= 0:
            raise DomainError(f"log(Gamma n) = {log_gamma_n:.3g} leaves log log undefined")
        bracket += (m - 1) * (math.log(log_gamma_n) + math.log(1 / delta))
    return n / delta * bracket


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int


def coupon_collector_mc(probabilities, m: int, trials: int,
                        rng: np.random.Generator) -> McEstimate:
    """Direct simulation of the number of draws needed to see every item ``m`` times."""
    p = _check_probabilities(probabilities)
    if trials < 100:
        raise ValueError("trials must be at least 100")
    n = p.size
    horizon = max(64, _ceil(4 * m / p.min()))
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    results = np.empty(trials)
    pending = np.arange(trials)
    while pending.size:
        draws = np.searchsorted(cdf, rng.random((pending.size, horizon)), side="right")
        done_at = np.zeros(pending.size, dtype=np.int64)
        complete = np.ones(pending.size, dtype=bool)
        for item in range(n):
            counts = np.cumsum(draws == item, axis=1)
            hit = counts[:, -1] >= m
            complete &= hit
            first = np.argmax(counts >= m, axis=1) + 1
            done_at = np.maximum(done_at, np.where(hit, first, 0))
        results[pending[complete]] = done_at[complete]
        pending = pending[~complete]
        horizon *= 2
    return McEstimate(float(results.mean()), float(results.std(ddof=1) / np.sqrt(trials)), trials)


# ---------------------------------------------------------------- per-site budgets

def _need_nonzero(values: np.ndarray, what: str) -> np.ndarray:
    if np.any(values <= 0):
        raise ZeroReferenceOverlapError(f"{what} has a vanishing overlap")
    return values


def table1_budgets(epsilon: float, refs: ReferenceStates, spectra: dict[str, np.ndarray],
                   p_z: dict[str, float]) -> dict:
    """Repetitions per elemental estimate for precision ``epsilon``.

    ``spectra`` holds the normalized singular values of X and Xprime and
    ``p_z`` the probabilities of landing on each block of [X X'].
    """
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    base = 1 / epsilon**2
    c1 = {w: _need_nonzero(o, f"chi1/{w}") for w, o in refs.chi1_overlaps().items()}
    c2 = {w: _need_nonzero(o, f"chi2/{w}") for w, o in refs.chi2_overlaps().items()}

    # ill-conditioned data can push budgets past int64, so keep Python ints
    def pairs(a, b):
        return np.vectorize(_ceil, otypes=[object])(base / np.outer(a**2, b**2))

    return {
        "norm_ratio": _ceil(base),
        "sigma_readout": 1,
        "chi1_u": {w: np.full(o.size, _ceil(base), dtype=object) for w, o in c1.items()},
        "left_gram": {"QUp": pairs(c1["Joint"], c1["Xprime"]), "UQ": pairs(c1["X"], c1["Joint"])},
        "right_gram": {"VpV": pairs(c2["Xprime"], c2["X"])},
        "chi2_v": {
            w: np.array([_ceil(base / (p_z[w] * s**2 * c**2))
                         for s, c in zip(spectra[w], c1[w])], dtype=object)
            for w in ("X", "Xprime")
        },
    }


def _log_factor(kappa: float, R: int) -> float:
    if R < 2:
        raise DomainError("R must be at least 2 for the log log factor")
    return max(1.0, math.log(kappa**2 * math.log(R)))


def total_qsvd_count(kappa: float, R: int, zeta: float, epsilon: float) -> int:
    """Quantum SVDs needed for all SWAP tests, ``(kappa R/(zeta eps))^2 log(kappa^2 log R)``."""
    return _ceil((kappa * R / (zeta * epsilon)) ** 2 * _log_factor(kappa, R))


def mode_count(kappa: float, R: int, zeta4: float) -> int:
    """Quantum SVDs for one recursive mode construction."""
    return _ceil(kappa**2 / zeta4 * R ** (2 + math.log2(1 / zeta4)) * _log_factor(kappa, R))


def chi2_process_count(eta: float, zeta1: float, kappa: float, R: int, epsilon: float) -> int:
    """Repetitions of the conditional-preparation process for all <chi2|v*> values."""
    return _ceil(eta / zeta1 * (kappa * R / epsilon) ** 2)


# ---------------------------------------------------------------- instance report

@dataclass(frozen=True, eq=False)
class CostReport:
    kappa: float
    kappa_per_matrix: dict[str, float]
    eta: float
    p_z: dict[str, float]
    zeta: float
    zeta1: float
    zeta2: float
    zeta3: float | None
    zeta4: float | None
    table1_budgets: dict
    brayton: dict[str, float]
    total_qsvd: int | None
    chi2_process: int | None
    mode_qsvd: int | None
    sigma_min_check: dict[str, bool]
    mode_phase_budget: dict[str, int] = field(default_factory=dict)


def cost_report(inputs, epsilon: float, zeta3: float | None = None, zeta4: float | None = None,
                mode_phase_budget: dict[str, int] | None = None) -> CostReport:
    """Evaluate every budget for one dataset prepared by ``kprime.prepare_inputs``.

    The singular-value sampling probabilities are the normalized squares of
    the retained values, so ``1/min sigma_hat^2 <= R kappa^2`` is checked on
    those.
    """
    data, refs = inputs.data, inputs.refs
    norms = {w: float(np.linalg.norm(data.matrix(w))) for w in ("X", "Xprime")}
    total = norms["X"] ** 2 + norms["Xprime"] ** 2
    p_z = {w: norms[w] ** 2 / total for w in norms}
    eta = 1 / min(p_z.values())

    kappa_z, brayton, check = {}, {}, {}
    for w, s in inputs.sigma_hat.items():
        s = np.asarray(s, dtype=float)
        kappa_z[w] = float(s.max() / s.min())
        probs = s**2 / np.sum(s**2)
        brayton[w] = brayton_expected_trials(s.size, 1, probs)
        check[w] = bool(1 / probs.min() <= s.size * kappa_z[w] ** 2 * (1 + 1e-12))
    kappa = max(kappa_z.values())
    R = refs.R

    return CostReport(
        kappa=kappa,
        kappa_per_matrix=kappa_z,
        eta=eta,
        p_z=p_z,
        zeta=refs.zeta,
        zeta1=refs.zeta1,
        zeta2=refs.zeta2,
        zeta3=zeta3,
        zeta4=zeta4,
        table1_budgets=table1_budgets(epsilon, refs, inputs.sigma_hat, p_z),
        brayton=brayton,
        total_qsvd=total_qsvd_count(kappa, R, refs.zeta, epsilon) if R >= 2 else None,
        chi2_process=chi2_process_count(eta, refs.zeta1, kappa, R, epsilon),
        mode_qsvd=mode_count(kappa, R, zeta4) if (R >= 2 and zeta4) else None,
        sigma_min_check=check,
        mode_phase_budget=dict(mode_phase_budget or {}),
    )
