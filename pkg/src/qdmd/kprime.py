"""Estimate the projected operator K' from SWAP and Hadamard tests.

K' factors as ``f (Q^dag U') S' (V'^dag V) S^-1 (U^dag Q)`` where f is the
norm ratio of X' to X and S, S' hold normalized singular values. Every
factor is measured:

* f from register 4 of the joint data state,
* singular values from register 5 of the SVD oracles,
* left Gram entries from three-state SWAP tests against chi1, divided by the
  (real positive, after phase fixing) two-state SWAP overlaps,
* <chi2|v*> from a Hadamard test on a six-register state,
* right Gram entries from three-state SWAP tests against chi2.

Sites are labelled; each draws from its own random stream, so the result is
independent of execution order and worker count. In sampled mode the
standard error of every K' entry is propagated from the site standard errors
by a finite-difference delta method.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import SnapshotData, embed_matrix, encode_data_state
from .errors import (DegenerateBranchError, DimensionMismatchError, MissingIndexError,
                     ZeroReferenceOverlapError)
from .estimators import EstimatorResult, hadamard_test, swap2, swap3
from .numerics import SvdFactors
from .qsvd import REG5, SvdOracle, data_oracle, svd_oracle_state
from .qstate import PureState, RegisterLayout, register_distribution
from .refstates import ReferenceStates, build_reference_states
from .rng import site_rng

ZERO_OVERLAP = 1e-13


def fix_left_phases(factors: SvdFactors, chi1, name: str = "Z") -> SvdFactors:
    """Rotate each (u_r, v_r) pair so that <chi1|u_r> is real positive."""
    ref = chi1.amplitudes if isinstance(chi1, PureState) else np.asarray(chi1, dtype=complex)
    ov = ref[:factors.U.shape[0]].conj() @ factors.U
    small = np.flatnonzero(np.abs(ov) < ZERO_OVERLAP)
    if small.size:
        raise ZeroReferenceOverlapError(f"<chi1|u> vanishes for {name}, r={int(small[0])}")
    phase = ov / np.abs(ov)
    return replace(factors, U=factors.U / phase, V=factors.V / phase)


def estimate_norm_ratio(joint: PureState, shots: int = 0,
                        rng: np.random.Generator | None = None,
                        site: str = "norm_ratio") -> EstimatorResult:
    """sqrt(Pr[1]/Pr[0]) on register 4 of the joint data state."""
    p1 = float(register_distribution(joint, "4")[1])
    if shots:
        p1 = rng.binomial(shots, p1) / shots
    if p1 >= 1.0:
        raise DegenerateBranchError("register 4 never reads 0 (X is empty)")
    f = np.sqrt(p1 / (1.0 - p1))
    se = 0.0
    if shots:
        slope = 1.0 / (2.0 * f * (1.0 - p1) ** 2) if f > 0 else 0.0
        se = slope * np.sqrt(p1 * (1.0 - p1) / shots)
    return EstimatorResult(float(f), shots, float(se), site)


@dataclass(frozen=True)
class SingularValueReadout:
    values: dict[int, float]
    draws: int
    missing: tuple[int, ...]


def read_from_oracle(oracle: SvdOracle, samples: int | None,
                     rng: np.random.Generator | None) -> SingularValueReadout:
    """Decode normalized singular values from register-5 measurements.

    ``samples=None`` reads every code once (exact mode). Otherwise ``samples``
    draws are taken, or with ``samples=0`` draws continue until every index
    has been seen.
    """
    R = oracle.rank
    if samples is None:
        seen, draws = set(range(R)), 0
    else:
        probs = register_distribution(oracle.state, REG5)
        probs = probs / probs.sum()
        lookup = np.full(probs.size, -1, dtype=np.int64)
        lookup[oracle.codes] = np.arange(R)
        if samples:
            seen, draws = set(lookup[rng.choice(probs.size, size=samples, p=probs)].tolist()), samples
        else:
            # draw in growing batches until the last unseen index shows up
            first = np.full(R, -1, dtype=np.int64)
            draws, batch = 0, 4 * R
            while np.any(first < 0):
                idx = lookup[rng.choice(probs.size, size=batch, p=probs)]
                for r in np.flatnonzero(first < 0):
                    hits = np.flatnonzero(idx == r)
                    if hits.size:
                        first[r] = draws + hits[0]
                draws += batch
                batch *= 2
            draws = int(first.max()) + 1
            seen = set(range(R))
    values = {r: float(np.sqrt(oracle.decode(int(oracle.codes[r])))) for r in sorted(seen)}
    missing = tuple(r for r in range(R) if r not in seen)
    return SingularValueReadout(values, draws, missing)


def read_singular_values(Z, tol: float, b: int, samples: int,
                         rng: np.random.Generator,
                         exact_register: bool = False) -> SingularValueReadout:
    return read_from_oracle(svd_oracle_state(Z, tol, b, exact_register), samples, rng)


@dataclass(frozen=True, eq=False)
class KPrimeEstimate:
    kprime: np.ndarray
    norm_ratio: float
    sigma_hat_X: np.ndarray
    sigma_hat_Xp: np.ndarray
    left_gram_QUp: np.ndarray
    left_gram_UQ: np.ndarray
    right_gram_VpV: np.ndarray
    chi1_u_overlaps: dict[tuple[str, int], complex]
    chi2_v_overlaps: dict[tuple[str, int], complex]
    shot_ledger: dict[str, int]
    kprime_std: np.ndarray
    sites: dict[str, EstimatorResult] = field(repr=False)


def assemble_kprime(norm_ratio: float, left_gram_QUp, sigma_hat_Xp, right_gram_VpV,
                    sigma_hat_X, left_gram_UQ) -> np.ndarray:
    """``f (Q^dag U') diag(s') (V'^dag V) diag(1/s) (U^dag Q)``."""
    a, b, c = (np.asarray(m) for m in (left_gram_QUp, right_gram_VpV, left_gram_UQ))
    sp, s = np.asarray(sigma_hat_Xp), np.asarray(sigma_hat_X)
    if not (a.shape[1] == sp.size == b.shape[0] and b.shape[1] == s.size == c.shape[0]
            and a.shape[0] == c.shape[1]):
        raise DimensionMismatchError(
            f"factor shapes {a.shape}, {sp.shape}, {b.shape}, {s.shape}, {c.shape} do not chain")
    return norm_ratio * (a * sp) @ b @ (c / s[:, None])


# ---------------------------------------------------------------- sites

@dataclass(frozen=True)
class _Site:
    label: str
    run: Callable[[int, np.random.Generator | None], EstimatorResult]


def _run_sites(sites: list[_Site], shots: int, seed: int, workers: int) -> dict[str, EstimatorResult]:
    def go(site: _Site) -> EstimatorResult:
        rng = site_rng(seed, site.label) if shots else None
        return site.run(shots, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(go, sites))
    else:
        results = [go(s) for s in sites]
    return {s.label: r for s, r in zip(sites, results)}


def protocol_state(data: SnapshotData, which: str, oracle: SvdOracle,
                   refs: ReferenceStates) -> PureState:
    """Six-register state for the <chi2|v*> Hadamard test.

    Registers 1-3 hold data, 4 flags X', 5 is the oracle value register and
    6 selects the reference branch chi1 (x) chi2. The SVD is applied to the
    branch of ``which`` only; the other data branch stays as a plain ket.
    """
    rows, cols = data.row_layout(), data.column_layout()
    q5 = oracle.state.layout.registers[-1][1]
    layout = rows + cols + RegisterLayout.of(("4", 1), (REG5, q5), ("6", 1))
    tensor = np.zeros((rows.dim, cols.dim, 2, 2**q5, 2), dtype=complex)
    norm_joint = np.linalg.norm(data.joint)
    pos = data.column_positions()

    flag = 0 if which == "X" else 1
    other = data.Xprime if which == "X" else data.X
    Z = data.matrix(which)
    f = oracle.factors
    weights = f.sigma_hat / np.linalg.norm(f.sigma_hat)
    scale = np.linalg.norm(Z) / (np.sqrt(2) * norm_joint)
    for r in range(f.rank):
        u = np.zeros(rows.dim, dtype=complex)
        u[:f.U.shape[0]] = f.U[:, r]
        v_conj = np.zeros(cols.dim, dtype=complex)
        v_conj[pos] = f.V[:, r].conj()
        tensor[:, :, flag, oracle.codes[r], 0] = scale * weights[r] * np.outer(u, v_conj)
    tensor[:, :, 1 - flag, 0, 0] = (embed_matrix(other, rows, cols, pos).reshape(rows.dim, cols.dim)
                                    / (np.sqrt(2) * norm_joint))
    tensor[:, :, 0, 0, 1] = np.outer(refs.chi1.amplitudes, refs.chi2.amplitudes) / np.sqrt(2)
    return PureState(layout, tensor)


def _v_conj_matrix(data: SnapshotData, f: SvdFactors) -> np.ndarray:
    out = np.zeros((data.column_layout().dim, f.rank), dtype=complex)
    out[data.column_positions()] = f.V.conj()
    return out


def _states(matrix: np.ndarray, layout: RegisterLayout) -> list[PureState]:
    return [PureState.from_vector(layout, matrix[:, r]) for r in range(matrix.shape[1])]


@dataclass(frozen=True, eq=False)
class QuantumInputs:
    """Everything the estimation sites need, built once per dataset."""

    data: SnapshotData
    oracles: dict[str, SvdOracle]
    factors: dict[str, SvdFactors]
    refs: ReferenceStates
    sigma_hat: dict[str, np.ndarray]
    readout_draws: dict[str, int]


def prepare_inputs(data: SnapshotData, tol: float, bits: int | None, shots: int,
                   seed: int) -> QuantumInputs:
    """Oracles, singular-value readout, references and phase-fixed factors."""
    oracles = {w: data_oracle(data, w, tol, bits) for w in ("Joint", "X", "Xprime")}
    sigma_hat, draws = {}, {}
    for w, oracle in oracles.items():
        rng = site_rng(seed, f"qsvd_readout/{w}") if shots else None
        readout = read_from_oracle(oracle, 0 if shots else None, rng)
        if readout.missing:
            raise MissingIndexError(f"{w}: singular indices {readout.missing} never observed")
        sigma_hat[w] = np.array([readout.values[r] for r in range(oracle.rank)])
        draws[w] = readout.draws

    raw = {w: o.factors for w, o in oracles.items()}
    refs = build_reference_states(
        raw["Joint"].U, raw["X"].U, raw["Xprime"].U,
        _v_conj_matrix(data, raw["X"]), _v_conj_matrix(data, raw["Xprime"]),
        chi1_layout=data.row_layout(), chi2_layout=data.column_layout())
    fixed = {w: fix_left_phases(f, refs.chi1, w) for w, f in raw.items()}
    return QuantumInputs(data, oracles, fixed, refs, sigma_hat, draws)


class _Primitives:
    """Flat vector of measured site values with named slices."""

    def __init__(self):
        self.labels: list[str] = []
        self.slices: dict[str, tuple[slice, tuple[int, ...]]] = {}

    def add(self, key: str, labels: list[str], shape: tuple[int, ...]) -> None:
        start = len(self.labels)
        self.labels.extend(labels)
        self.slices[key] = (slice(start, len(self.labels)), shape)

    def get(self, x: np.ndarray, key: str) -> np.ndarray:
        sl, shape = self.slices[key]
        return x[sl].reshape(shape)


def _build_sites(inp: QuantumInputs, shots: int) -> tuple[list[_Site], _Primitives]:
    data, f, refs = inp.data, inp.factors, inp.refs
    rows = data.row_layout()
    cols = data.column_layout()
    u = {w: _states(f[w].U, rows) for w in f}
    v = {w: _states(_v_conj_matrix(data, f[w]), cols) for w in ("X", "Xprime")}
    chi1, chi2 = refs.chi1, refs.chi2
    joint_state = encode_data_state(data, "Joint")
    prims = _Primitives()
    sites: list[_Site] = []

    def add_site(label, fn):
        sites.append(_Site(label, lambda s, rng, fn=fn, label=label: fn(s, rng, label)))
        return label

    prims.add("norm_ratio", [add_site("norm_ratio", lambda s, rng, lab:
                                      estimate_norm_ratio(joint_state, s, rng, lab))], ())

    for w in ("Joint", "X", "Xprime"):
        labels = [add_site(f"swap2/chi1/{w}/{r}",
                           lambda s, rng, lab, st=st: swap2(chi1, st, s, rng, lab))
                  for r, st in enumerate(u[w])]
        prims.add(f"c1/{w}", labels, (len(labels),))

    def gram(key, ref, left, right):
        for part in ("Re", "Im"):
            labels = [add_site(f"swap3/{key}/{a}/{b}/{part}",
                               lambda s, rng, lab, x=x, y=y, part=part:
                               swap3(ref, x, y, part, s, rng, lab))
                      for a, x in enumerate(left) for b, y in enumerate(right)]
            prims.add(f"{key}/{part}", labels, (len(left), len(right)))

    gram("QUp", chi1, u["Joint"], u["Xprime"])
    gram("UQ", chi1, u["X"], u["Joint"])

    for w in ("X", "Xprime"):
        state = protocol_state(data, w, inp.oracles[w], refs)
        flag = 0 if w == "X" else 1
        for part in ("Re", "Im"):
            labels = []
            for r in range(f[w].rank):
                i = {"4": 0, REG5: 0, "6": 1}
                j = {"4": flag, REG5: int(inp.oracles[w].codes[r]), "6": 0}
                labels.append(add_site(f"hadamard/chi2/{w}/{r}/{part}",
                                       lambda s, rng, lab, i=i, j=j, part=part, state=state:
                                       hadamard_test(state, i, j, part, s, rng, lab)))
            prims.add(f"h/{w}/{part}", labels, (len(labels),))

    # entry [r, r'] = <v'_r|v_r'> from the cycle chi2 -> v*_r' -> v'*_r
    for part in ("Re", "Im"):
        labels = [add_site(f"swap3/VpV/{a}/{b}/{part}",
                           lambda s, rng, lab, x=x, y=y, part=part:
                           swap3(chi2, y, x, part, s, rng, lab))
                  for a, x in enumerate(v["Xprime"]) for b, y in enumerate(v["X"])]
        prims.add(f"VpV/{part}", labels, (len(v["Xprime"]), len(v["X"])))
    return sites, prims


def _derive(x: np.ndarray, prims: _Primitives, sigma_hat: dict[str, np.ndarray]) -> dict:
    """Turn raw site values into the K' factors."""
    f = float(prims.get(x, "norm_ratio"))
    a = {w: np.sqrt(np.clip(prims.get(x, f"c1/{w}"), 0, None)) for w in ("Joint", "X", "Xprime")}
    qup = (prims.get(x, "QUp/Re") + 1j * prims.get(x, "QUp/Im")) / np.outer(a["Joint"], a["Xprime"])
    uq = (prims.get(x, "UQ/Re") + 1j * prims.get(x, "UQ/Im")) / np.outer(a["X"], a["Joint"])

    p = {"X": 1.0 / (1.0 + f**2), "Xprime": f**2 / (1.0 + f**2)}
    chi2 = {}
    for w in ("X", "Xprime"):
        s = sigma_hat[w]
        weight = s / np.linalg.norm(s)
        h = prims.get(x, f"h/{w}/Re") + 1j * prims.get(x, f"h/{w}/Im")
        chi2[w] = h / (np.sqrt(p[w]) * weight * a[w])
    vpv = ((prims.get(x, "VpV/Re") + 1j * prims.get(x, "VpV/Im"))
           / np.outer(chi2["Xprime"].conj(), chi2["X"]))
    k = assemble_kprime(f, qup, sigma_hat["Xprime"], vpv, sigma_hat["X"], uq)
    return {"f": f, "a": a, "QUp": qup, "UQ": uq, "chi2": chi2, "VpV": vpv, "kprime": k}


def _propagate(x: np.ndarray, se: np.ndarray, prims: _Primitives,
               sigma_hat: dict[str, np.ndarray]) -> np.ndarray:
    """Delta-method standard error of |K'| entries (real and imaginary parts combined)."""
    var = np.zeros(_derive(x, prims, sigma_hat)["kprime"].shape)
    for idx in np.flatnonzero(se > 0):
        h = 1e-6 * max(1.0, abs(x[idx]))
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        dk = (_derive(xp, prims, sigma_hat)["kprime"] - _derive(xm, prims, sigma_hat)["kprime"]) / (2 * h)
        var += np.abs(dk) ** 2 * se[idx] ** 2
    return np.sqrt(var)


def estimate_kprime(data: SnapshotData, tol: float = 1e-8, shots: int = 0, seed: int = 0,
                    bits: int | None = None, workers: int = 1,
                    propagate: bool = True) -> tuple[KPrimeEstimate, QuantumInputs]:
    """Run every estimation site and assemble K'.

    ``bits=None`` uses the idealized register 5 that stores the index, so
    singular values are read exactly; otherwise they carry fixed-point
    rounding. ``shots=0`` evaluates every site exactly.
    """
    inp = prepare_inputs(data, tol, bits, shots, seed)
    sites, prims = _build_sites(inp, shots)
    results = _run_sites(sites, shots, seed, workers)
    x = np.array([results[lab].value for lab in prims.labels])
    se = np.array([results[lab].std_error for lab in prims.labels])

    if shots:
        for w in ("Joint", "X", "Xprime"):
            c = prims.get(x, f"c1/{w}")
            c_se = prims.get(se, f"c1/{w}")
            # |<chi1|u>| below ten standard errors: division would blow up
            bad = np.flatnonzero(c < 5 * c_se)
            if bad.size:
                raise ZeroReferenceOverlapError(
                    f"swap2/chi1/{w}/{int(bad[0])}: overlap indistinguishable from zero; "
                    "rebuild the reference or raise shots")

    parts = _derive(x, prims, inp.sigma_hat)
    for w, arr in parts["chi2"].items():
        if np.any(np.abs(arr) < ZERO_OVERLAP):
            raise ZeroReferenceOverlapError(f"<chi2|v*> vanishes for {w}")
    std = (_propagate(x, se, prims, inp.sigma_hat) if shots and propagate
           else np.zeros(parts["kprime"].shape))

    ledger = {lab: results[lab].shots for lab in sorted(results)}
    ledger |= {f"qsvd_readout/{w}": n for w, n in inp.readout_draws.items()}
    estimate = KPrimeEstimate(
        kprime=parts["kprime"],
        norm_ratio=parts["f"],
        sigma_hat_X=inp.sigma_hat["X"],
        sigma_hat_Xp=inp.sigma_hat["Xprime"],
        left_gram_QUp=parts["QUp"],
        left_gram_UQ=parts["UQ"],
        right_gram_VpV=parts["VpV"],
        chi1_u_overlaps={(w, r): complex(v) for w, arr in parts["a"].items() for r, v in enumerate(arr)},
        chi2_v_overlaps={(w, r): complex(v) for w, arr in parts["chi2"].items() for r, v in enumerate(arr)},
        shot_ledger=dict(sorted(ledger.items())),
        kprime_std=std,
        sites=results,
    )
    return estimate, inp
