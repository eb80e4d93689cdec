"""Reference states that pin the phases of singular vectors.

``chi1`` must overlap every left singular vector of [X X'], X and X'; it is
built in three stages, each adding a small correction along the vectors the
previous stage nearly missed. ``chi2`` does the same in two stages for the
conjugated right singular vectors of X and X'. Every stage carries a proven
lower bound on the overlaps, checked by :func:`verify_bounds`.

Vectors are passed as matrices whose columns are the singular vectors, all
expressed in the same ambient space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolationError, EmptySpectrumError
from .qstate import PureState, RegisterLayout, qubits_for


@dataclass(frozen=True, eq=False)
class ReferenceStates:
    chi1: PureState
    chi2: PureState
    R: int
    u_joint: np.ndarray
    u_x: np.ndarray
    u_xp: np.ndarray
    v_x_conj: np.ndarray
    v_xp_conj: np.ndarray
    constants: dict[str, float]
    sets: dict[str, tuple[int, ...]]
    stages: dict[str, np.ndarray] = field(repr=False)

    @property
    def chi1_vector(self) -> np.ndarray:
        return self.chi1.amplitudes[:self.u_joint.shape[0]]

    @property
    def chi2_vector(self) -> np.ndarray:
        return self.chi2.amplitudes[:self.v_x_conj.shape[0]]

    def chi1_overlaps(self) -> dict[str, np.ndarray]:
        """|<chi1|u_r>| for each of Joint, X, Xprime."""
        c = self.chi1_vector
        return {name: np.abs(c.conj() @ U)
                for name, U in (("Joint", self.u_joint), ("X", self.u_x), ("Xprime", self.u_xp))}

    def chi2_overlaps(self) -> dict[str, np.ndarray]:
        c = self.chi2_vector
        return {name: np.abs(c.conj() @ V)
                for name, V in (("X", self.v_x_conj), ("Xprime", self.v_xp_conj))}

    @property
    def zeta1(self) -> float:
        return float(min(np.min(o) for o in self.chi1_overlaps().values()) ** 2)

    @property
    def zeta2(self) -> float:
        return float(min(np.min(o) for o in self.chi2_overlaps().values()) ** 2)

    @property
    def zeta(self) -> float:
        return min(self.zeta1, self.zeta2)


def _inject(vectors: np.ndarray, phase_rng: np.random.Generator | None) -> np.ndarray:
    if phase_rng is None:
        return vectors
    return vectors * np.exp(1j * phase_rng.uniform(0, 2 * np.pi, vectors.shape[1]))


def _correction(base: np.ndarray, vectors: np.ndarray, threshold: float,
                weight: float) -> tuple[np.ndarray, float, tuple[int, ...]]:
    """Add ``weight`` times the normalized sum of poorly covered vectors.

    Returns the normalized state, its normalizing constant and the member set.
    Ties with the threshold count as poorly covered.
    """
    members = tuple(int(r) for r in np.flatnonzero(np.abs(base.conj() @ vectors) <= threshold))
    if not members:
        return base, 1.0, members
    phi = vectors[:, members].sum(axis=1) / np.sqrt(len(members))
    raw = base + weight * phi
    const = 1.0 / np.linalg.norm(raw)
    return const * raw, float(const), members


def _as_state(vec: np.ndarray, layout: RegisterLayout | None, name: str) -> PureState:
    if layout is None:
        layout = RegisterLayout.of((name, qubits_for(vec.size)))
    return PureState.from_vector(layout, vec)


def build_chi1(u_joint, u_x, u_xp, R: int | None = None,
               phase_rng: np.random.Generator | None = None):
    """Three-stage construction; returns (vector, constants, sets, stage vectors)."""
    u_joint, u_x, u_xp = (_inject(np.asarray(a, dtype=complex), phase_rng)
                          for a in (u_joint, u_x, u_xp))
    if min(u_joint.shape[1], u_x.shape[1], u_xp.shape[1]) == 0:
        raise EmptySpectrumError("every matrix needs at least one singular vector")
    R = R or max(u_joint.shape[1], u_x.shape[1], u_xp.shape[1])
    rj = u_joint.shape[1]

    chi0 = u_joint.sum(axis=1) / np.sqrt(rj)
    chi_a, c11, s11 = _correction(chi0, u_x, 1 / (4 * R), 1 / (2 * np.sqrt(R)))
    chi_b, c12, s12 = _correction(chi_a, u_xp,
                                  1 / (14 * R * np.sqrt(R)), 1 / (7 * R))
    constants = {"C1_1": c11, "C1_2": c12}
    sets = {"S1_1": s11, "S1_2": s12}
    return chi_b, constants, sets, {"chi1_0": chi0, "chi1_1": chi_a}


def build_chi2(v_x_conj, v_xp_conj, R: int | None = None,
               phase_rng: np.random.Generator | None = None):
    """Two-stage construction mirroring the first stage of chi1."""
    v_x_conj, v_xp_conj = (_inject(np.asarray(a, dtype=complex), phase_rng)
                           for a in (v_x_conj, v_xp_conj))
    if min(v_x_conj.shape[1], v_xp_conj.shape[1]) == 0:
        raise EmptySpectrumError("every matrix needs at least one singular vector")
    R = R or max(v_x_conj.shape[1], v_xp_conj.shape[1])

    chi0 = v_x_conj.sum(axis=1) / np.sqrt(v_x_conj.shape[1])
    chi, c21, s21 = _correction(chi0, v_xp_conj, 1 / (4 * R), 1 / (2 * np.sqrt(R)))
    return chi, {"C2_1": c21}, {"S2_1": s21}, {"chi2_0": chi0}


def build_reference_states(u_joint, u_x, u_xp, v_x_conj, v_xp_conj,
                           chi1_layout: RegisterLayout | None = None,
                           chi2_layout: RegisterLayout | None = None,
                           phase_rng: np.random.Generator | None = None) -> ReferenceStates:
    """Build both references with a shared rank R = the largest kept rank.

    With ``phase_rng`` every input vector first gets a random phase, standing
    in for the unknown global phase left by tomography; the stored vectors
    are the phased ones.
    """
    arrays = [_inject(np.asarray(a, dtype=complex), phase_rng)
              for a in (u_joint, u_x, u_xp, v_x_conj, v_xp_conj)]
    R = max(a.shape[1] for a in arrays)
    chi1, k1, s1, st1 = build_chi1(*arrays[:3], R=R)
    chi2, k2, s2, st2 = build_chi2(*arrays[3:], R=R)
    return ReferenceStates(
        chi1=_as_state(chi1, chi1_layout, "1"),
        chi2=_as_state(chi2, chi2_layout, "2"),
        R=R, u_joint=arrays[0], u_x=arrays[1], u_xp=arrays[2],
        v_x_conj=arrays[3], v_xp_conj=arrays[4],
        constants={**k1, **k2}, sets={**s1, **s2}, stages={**st1, **st2},
    )


def bound_thresholds(R: int) -> dict[str, float]:
    """Proven lower bounds on overlap moduli and normalizing constants."""
    sr = np.sqrt(R)
    return {
        "chi1/Joint": 1 / (6 * sr),
        "chi1/X": 1 / (48 * R),
        "chi1/Xprime": 1 / (16 * R * sr),
        "chi2/X": 1 / (3 * sr),
        "chi2/Xprime": 1 / (6 * R),
        "C1_1": 2 / 3,
        "C1_2": 7 / 8,
        "C2_1": 1 / (1 + 1 / (2 * sr)),
    }


def verify_bounds(refs: ReferenceStates, raise_on_violation: bool = True) -> dict[str, float]:
    """Margins (observed minus bound) for every proven inequality."""
    bounds = bound_thresholds(refs.R)
    observed = {f"chi1/{k}": float(np.min(v)) for k, v in refs.chi1_overlaps().items()}
    observed |= {f"chi2/{k}": float(np.min(v)) for k, v in refs.chi2_overlaps().items()}
    observed |= {k: refs.constants[k] for k in ("C1_1", "C1_2", "C2_1")}
    margins = {k: observed[k] - bounds[k] for k in bounds}
    # exact-arithmetic bounds; allow rounding noise only
    failed = {k: m for k, m in margins.items() if m < -1e-12}
    if failed and raise_on_violation:
        raise BoundViolationError(f"reference bounds violated: {failed}")
    return margins


@dataclass(frozen=True)
class PrepReport:
    a0: dict[str, float]
    a1: dict[str, float]
    a2: dict[str, float]
    success: dict[str, float]
    success_direct: dict[str, float]
    checks: dict[str, bool]


def _min_over(values: np.ndarray, members, scale: float = 1.0) -> float:
    """``scale * min(values[members])``, or infinity for an empty set."""
    return scale * float(np.min(values[list(members)])) if members else np.inf


def _chi1_direct(refs: ReferenceStates, s_joint, s_x, s_xp, p_x, p_xp,
                 a0: float, a1: float, a2: float, stage: int) -> float:
    """Post-selected norm built branch by branch from rotation amplitudes."""
    rj = refs.u_joint.shape[1]
    rot0 = a0 / (np.sqrt(rj) * s_joint)
    branch_a = refs.u_joint @ (s_joint * rot0) / np.sqrt(2)
    s11, s12 = refs.sets["S1_1"], refs.sets["S1_2"] if stage == 2 else ()
    branch_b = np.zeros_like(branch_a)
    branch_c = np.zeros_like(branch_a)
    if s11:
        rot1 = a1 / (np.sqrt(len(s11)) * s_x[list(s11)])
        assert np.all(rot1 <= 1 + 1e-12)
        branch_b = np.sqrt(p_x) * refs.u_x[:, list(s11)] @ (s_x[list(s11)] * rot1) / np.sqrt(2)
    if s12:
        rot2 = a2 / (np.sqrt(len(s12)) * s_xp[list(s12)])
        assert np.all(rot2 <= 1 + 1e-12)
        branch_c = np.sqrt(p_xp) * refs.u_xp[:, list(s12)] @ (s_xp[list(s12)] * rot2) / np.sqrt(2)
    if stage == 1:
        out = (branch_a + branch_b) / np.sqrt(2)
    else:
        out = (branch_a + (branch_b + branch_c) / np.sqrt(2)) / np.sqrt(2)
    return float(np.linalg.norm(out) ** 2)


def prep_success_probabilities(refs: ReferenceStates, sigma_hat_joint, sigma_hat_x,
                               sigma_hat_xp, p_x: float) -> PrepReport:
    """Success probabilities of the reference-state preparation circuits.

    ``p_x`` is the probability of the X branch of the joint data state.
    Each probability is computed from the closed form and again from the
    post-selected branch amplitudes.
    """
    s_joint, s_x, s_xp = (np.asarray(s, dtype=float) for s in (sigma_hat_joint, sigma_hat_x, sigma_hat_xp))
    p_xp = 1.0 - p_x
    R = refs.R
    rj = s_joint.size
    c11, c12, c21 = refs.constants["C1_1"], refs.constants["C1_2"], refs.constants["C2_1"]
    s11, s12, s21 = refs.sets["S1_1"], refs.sets["S1_2"], refs.sets["S2_1"]
    base = np.sqrt(rj) * s_joint.min()

    a0, a1, a2, success, direct = {}, {}, {}, {}, {}
    a0["chi1_0"] = base
    success["chi1_0"] = base**2
    direct["chi1_0"] = float(np.linalg.norm(refs.u_joint @ (s_joint * base / (np.sqrt(rj) * s_joint))) ** 2)

    x0 = min(base, _min_over(s_x, s11, 2 * np.sqrt(p_x * R * len(s11))))
    a0["chi1_1"] = x0
    a1["chi1_1"] = x0 / (2 * np.sqrt(p_x * R))
    success["chi1_1"] = (x0 / (2 * c11)) ** 2 if s11 else x0**2
    direct["chi1_1"] = (_chi1_direct(refs, s_joint, s_x, s_xp, p_x, p_xp, x0, a1["chi1_1"], 0.0, 1)
                        if s11 else direct["chi1_0"])

    y0 = min(base,
             _min_over(s_x, s11, np.sqrt(2 * p_x * R * len(s11))),
             _min_over(s_xp, s12, np.sqrt((7 * c11) ** 2 * p_xp * R**2 * len(s12) / 2)))
    a0["chi1"] = y0
    a1["chi1"] = y0 * np.sqrt(1 / (2 * p_x * R))
    a2["chi1"] = y0 * np.sqrt(2 / ((7 * c11) ** 2 * p_xp * R**2))
    if s11 or s12:
        success["chi1"] = (y0 / (2 * c12 * c11)) ** 2
        direct["chi1"] = _chi1_direct(refs, s_joint, s_x, s_xp, p_x, p_xp,
                                      y0, a1["chi1"], a2["chi1"], 2)
    else:
        success["chi1"] = direct["chi1"] = y0**2

    if s21:
        success["chi2"] = 1 / ((2 + 1 / (2 * R)) * c21**2)
        stage0 = refs.v_x_conj.sum(axis=1) / np.sqrt(refs.v_x_conj.shape[1])
        phi = refs.v_xp_conj[:, list(s21)].sum(axis=1) / np.sqrt(len(s21))
        prepared_norm = np.sqrt(1 + 1 / (4 * R))
        post = (stage0 + phi / (2 * np.sqrt(R))) / (np.sqrt(2) * prepared_norm)
        direct["chi2"] = float(np.linalg.norm(post) ** 2)
    else:
        success["chi2"] = direct["chi2"] = 1.0

    min_all = min(s_joint.min(), s_x.min(), s_xp.min())
    checks = {
        "chi1_0": success["chi1_0"] >= rj * s_joint.min() ** 2 * (1 - 1e-12),
        "chi1_1": success["chi1_1"] >= p_x * R * min_all**2 / 4 * (1 - 1 / (2 * np.sqrt(R))) ** 2 * (1 - 1e-12),
        "formulas_agree": all(abs(success[k] - direct[k]) <= 1e-12 for k in success),
    }
    return PrepReport(a0, a1, a2, success, direct, checks)
