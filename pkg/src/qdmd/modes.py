"""Rebuild DMD mode states by coherent addition of singular-vector states.

A mode ``sum_r w_r u_r`` is assembled over a balanced binary tree. Each node
adds its two children with the post-selected coherent-addition circuit; the
circuit needs a reference state ``chi_add`` overlapping both children and the
phases ``theta_j = arg<chi_add|psi_j>``, which are estimated from SWAP and
Hadamard tests against chi1.

The ``u_r`` used here are in the gauge where ``<chi1|u_r>`` is real positive,
which is the gauge the mode coefficients ``w`` refer to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolationError, GridTooCoarseError, ZeroReferenceOverlapError
from .estimators import hadamard_test, swap2, swap3
from .qstate import PureState, RegisterLayout, overlap, qubits_for
from .rng import site_rng

ZERO_OVERLAP = 1e-13


# ---------------------------------------------------------------- coherent addition

@dataclass(frozen=True, eq=False)
class AdditionResult:
    state: PureState
    success_prob: float
    accepted: int | None = None
    shots: int = 0


def coherent_add(psi0: PureState, psi1: PureState, alpha: complex, beta: complex,
                 chi: PureState, shots: int = 0,
                 rng: np.random.Generator | None = None) -> AdditionResult:
    """Post-selected superposition of two states with unknown global phases.

    The control qubit is prepared with weights sqrt(c_j / (c0 + c1)), a
    controlled SWAP exchanges the two inputs, the second register is
    projected on ``chi`` and the control on ``conj(alpha)|0> + conj(beta)|1>``.
    The surviving state is
    ``alpha <chi|psi1>/|.| psi0 + beta <chi|psi0>/|.| psi1``.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-10:
        raise ValueError("|alpha|^2 + |beta|^2 must be 1")
    o0, o1 = overlap(chi, psi0), overlap(chi, psi1)
    if min(abs(o0), abs(o1)) < ZERO_OVERLAP:
        raise ZeroReferenceOverlapError("reference is orthogonal to an input state")
    c0, c1 = abs(o0) ** 2, abs(o1) ** 2
    xi0, xi1 = np.sqrt(c0 / (c0 + c1)), np.sqrt(c1 / (c0 + c1))
    out = alpha * xi0 * o1 * psi0.amplitudes + beta * xi1 * o0 * psi1.amplitudes
    prob = float(np.vdot(out, out).real)
    accepted = int(rng.binomial(shots, prob)) if shots else None
    return AdditionResult(PureState(psi0.layout, out / np.sqrt(prob)), prob, accepted, shots)


# ---------------------------------------------------------------- tree plan

@dataclass(eq=False)
class TreeNode:
    members: tuple[int, ...]
    children: tuple["TreeNode", "TreeNode"] | None = None
    alpha: float = 1.0
    beta: float = 0.0
    theta: tuple[float, float] | None = None
    reference: "AdditionReference | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def internal_nodes(self) -> list["TreeNode"]:
        """Internal nodes in bottom-up (post-) order."""
        if self.is_leaf:
            return []
        left, right = self.children
        return left.internal_nodes() + right.internal_nodes() + [self]

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(c.depth() for c in self.children)


@dataclass(eq=False)
class AdditionPlan:
    weights: np.ndarray
    root: TreeNode
    hidden_phases: np.ndarray | None = None
    shot_ledger: dict[str, int] = field(default_factory=dict)

    @property
    def R(self) -> int:
        return int(self.weights.size)

    @property
    def depth(self) -> int:
        return self.root.depth()

    def nodes(self) -> list[TreeNode]:
        return self.root.internal_nodes()

    def partial_state(self, members, U: np.ndarray) -> np.ndarray:
        """Normalized ideal sum of ``w_r u_r`` over ``members``."""
        members = list(members)
        vec = U[:, members] @ self.weights[members]
        return vec / np.linalg.norm(self.weights[members])


def _split(members: tuple[int, ...], weights: np.ndarray) -> TreeNode:
    if len(members) == 1:
        return TreeNode(members)
    half = math.ceil(len(members) / 2)
    left, right = _split(members[:half], weights), _split(members[half:], weights)
    w0 = float(np.sum(np.abs(weights[list(left.members)]) ** 2))
    w1 = float(np.sum(np.abs(weights[list(right.members)]) ** 2))
    return TreeNode(members, (left, right), np.sqrt(w0 / (w0 + w1)), np.sqrt(w1 / (w0 + w1)))


def plan_tree(weights) -> AdditionPlan:
    """Balanced binary partition of the indices carrying nonzero weight."""
    w = np.asarray(weights, dtype=complex)
    w = w / np.linalg.norm(w)
    support = tuple(int(r) for r in np.flatnonzero(np.abs(w) > 1e-15))
    return AdditionPlan(w, _split(support, w))


def ceil_log2(R: int) -> int:
    return max(1, math.ceil(math.log2(R))) if R > 1 else 0


# ---------------------------------------------------------------- out-of-phase preparation

@dataclass(frozen=True)
class OutOfPhaseResult:
    vector: np.ndarray
    success_prob: float
    success_direct: float
    bound_holds: bool


def out_of_phase_superposition(alphas, U: np.ndarray, sigma_hat, hidden_phases) -> OutOfPhaseResult:
    """Prepare ``sum_r alpha_r e^{i phi_r} u_r`` from the SVD oracle of [X X'].

    The oracle branch of ``u_r`` carries amplitude ``sigma_hat_r``; a
    controlled rotation scales it to ``a alpha_r`` with
    ``a = min |sigma_hat_r / alpha_r|``, so the post-selection succeeds with
    probability ``|a|^2``. ``hidden_phases`` are the tomography phases of the
    oracle's vectors relative to ``U``; the caller never reads them back.
    """
    alphas = np.asarray(alphas, dtype=complex)
    s = np.asarray(sigma_hat, dtype=float)
    s = s / np.linalg.norm(s)
    live = np.abs(alphas) > 0
    a = float(np.min(s[live] / np.abs(alphas[live])))
    phases = np.exp(1j * np.asarray(hidden_phases, dtype=float))

    rotation = np.zeros_like(alphas)
    rotation[live] = a * alphas[live] / s[live]
    branch = U @ (s * rotation * phases)
    return OutOfPhaseResult(
        vector=(U @ (alphas * phases)),
        success_prob=a**2,
        success_direct=float(np.vdot(branch, branch).real),
        bound_holds=a**2 >= float(np.min(s**2)) * (1 - 1e-12),
    )


# ---------------------------------------------------------------- addition references

@dataclass(frozen=True, eq=False)
class AdditionReference:
    chi_add: np.ndarray
    modified: bool
    chi1_overlap: float
    child_overlaps: tuple[float, float]
    vartheta: float
    peak_fidelity: float
    node_vector: np.ndarray


def _leaf_vector(r: int, weights: np.ndarray) -> np.ndarray:
    vec = np.zeros(weights.size, dtype=complex)
    vec[r] = weights[r] / abs(weights[r])
    return vec


def _grid_peak(values: np.ndarray) -> tuple[int, float]:
    """Index of the maximum and a parabolic offset in grid units."""
    k = int(np.argmax(values))
    g = values.size
    left, mid, right = values[(k - 1) % g], values[k], values[(k + 1) % g]
    denom = left - 2 * mid + right
    offset = 0.5 * (left - right) / denom if denom < 0 else 0.0
    return k, float(np.clip(offset, -0.5, 0.5))


def modification_bounds(b: float) -> tuple[float, float]:
    """Guaranteed overlaps of a tilted reference with chi1 and with each child."""
    return b / (2 * (1 + b)), (1 / np.sqrt(2) - b) / (1 + b)


def build_addition_reference(plan: AdditionPlan, node: TreeNode, child_vectors,
                             U: np.ndarray, sigma_hat, hidden_phases, chi1,
                             grid_points: int = 64, b: float = 0.5) -> AdditionReference:
    """Reference ``(e^{i phi0} psi0 + e^{i phi1} psi1)/sqrt(2)`` for one node.

    ``child_vectors`` are the oracle amplitude vectors that prepare each child
    up to an unknown phase. A grid search over the relative phase between
    the two children then yields the amplitude vector for this node itself,
    which its parent uses in turn. If the reference barely overlaps chi1 it
    is tilted towards chi1 by ``b``.
    """
    if grid_points < 8:
        raise ValueError("grid_points must be at least 8")
    if not 0 < b < 1 / np.sqrt(2):
        raise ValueError("b must lie in (0, 1/sqrt(2))")
    chi1 = np.asarray(chi1.amplitudes if isinstance(chi1, PureState) else chi1)[:U.shape[0]]
    a0, a1 = child_vectors
    left, right = node.children
    chi_add = out_of_phase_superposition((a0 + a1) / np.sqrt(2), U, sigma_hat, hidden_phases).vector

    modified = abs(np.vdot(chi1, chi_add)) <= b / 2
    if modified:
        chi_add = chi_add + b * chi1
        chi_add = chi_add / np.linalg.norm(chi_add)

    target = plan.partial_state(node.members, U)
    thetas = 2 * np.pi * np.arange(grid_points) / grid_points

    def fidelity(theta: float) -> float:
        vec = node.alpha * a0 + np.exp(1j * theta) * node.beta * a1
        built = out_of_phase_superposition(vec, U, sigma_hat, hidden_phases).vector
        return abs(np.vdot(target, built)) ** 2

    values = np.array([fidelity(t) for t in thetas])
    k, offset = _grid_peak(values)
    if values[k] < 1 - (2 * np.pi / grid_points) ** 2:
        raise GridTooCoarseError(f"fidelity peak {values[k]:.6f} on a {grid_points}-point grid")
    vartheta = float((thetas[k] + offset * 2 * np.pi / grid_points) % (2 * np.pi))
    if fidelity(vartheta) < values[k]:
        vartheta = float(thetas[k])

    psi0 = plan.partial_state(left.members, U)
    psi1 = plan.partial_state(right.members, U)
    if modified:
        low_chi1, low_child = modification_bounds(b)
        if abs(np.vdot(chi1, chi_add)) < low_chi1 - 1e-12 or \
                min(abs(np.vdot(chi_add, psi0)), abs(np.vdot(chi_add, psi1))) < low_child - 1e-12:
            raise BoundViolationError("modified addition reference misses its overlap bounds")
    return AdditionReference(
        chi_add=chi_add,
        modified=bool(modified),
        chi1_overlap=float(abs(np.vdot(chi1, chi_add))),
        child_overlaps=(float(abs(np.vdot(chi_add, psi0))), float(abs(np.vdot(chi_add, psi1)))),
        vartheta=vartheta,
        peak_fidelity=float(fidelity(vartheta)),
        node_vector=node.alpha * a0 + np.exp(1j * vartheta) * node.beta * a1,
    )


def build_references(plan: AdditionPlan, U: np.ndarray, sigma_hat, chi1,
                     hidden_phases=None, grid_points: int = 64, b: float = 0.5) -> AdditionPlan:
    """Attach a reference to every internal node, bottom-up."""
    if hidden_phases is None:
        hidden_phases = np.zeros(plan.R)
    plan.hidden_phases = np.asarray(hidden_phases, dtype=float)
    vectors: dict[int, np.ndarray] = {}

    def vector_of(n: TreeNode) -> np.ndarray:
        return _leaf_vector(n.members[0], plan.weights) if n.is_leaf else vectors[id(n)]

    for node in plan.nodes():
        kids = tuple(vector_of(c) for c in node.children)
        node.reference = build_addition_reference(plan, node, kids, U, sigma_hat,
                                                  plan.hidden_phases, chi1, grid_points, b)
        vectors[id(node)] = node.reference.node_vector
    return plan


# ---------------------------------------------------------------- phase estimation

def phase_budget(epsilon: float, R: int, child_overlap: float) -> float:
    """Precision needed on each term of <chi_add|psi_j> for a total phase error epsilon."""
    return (2 / np.pi) * child_overlap * epsilon / (np.sqrt(R) * ceil_log2(R))


def _shots_for(precision: float) -> int:
    return int(math.ceil(1.0 / precision**2 - 1e-9))


def estimate_addition_phases(plan: AdditionPlan, chi1: PureState, U: np.ndarray,
                             shots: int = 0, epsilon: float = 0.05,
                             seed: int = 0, label: str = "mode") -> AdditionPlan:
    """Fill ``theta`` on every node from SWAP/Hadamard-test estimates.

    ``<chi_add|u_r> = T / (<u_r|chi1> <chi1|chi_add>)`` where T is the
    three-state SWAP triple on (chi_add, u_r, chi1); the two denominators come
    from a two-state SWAP test and a Hadamard test on
    ``(|chi1>|0> + |chi_add>|1>)/sqrt(2)``. With ``shots > 0`` each site uses
    the shot count implied by the phase budget for ``epsilon`` (``shots``
    then only switches sampling on).
    """
    layout = chi1.layout
    ancilla = layout + RegisterLayout.of(("anc", 1))
    R = plan.R
    u_states = [PureState.from_vector(layout, U[:, r]) for r in range(U.shape[1])]
    sampled = shots > 0

    def rng_for(site: str):
        return site_rng(seed, f"{label}/{site}") if sampled else None

    ref_overlap: dict[int, float] = {}
    for node in plan.nodes():
        for r in node.members:
            if r in ref_overlap:
                continue
            budget = phase_budget(epsilon, R, 1 / np.sqrt(2)) if sampled else 0
            n = _shots_for(budget) if sampled else 0
            site = f"swap2/chi1/u/{r}"
            est = swap2(chi1, u_states[r], n, rng_for(site), site)
            plan.shot_ledger[f"{label}/{site}"] = n
            ref_overlap[r] = float(np.sqrt(max(est.value, 0.0)))
            if ref_overlap[r] < ZERO_OVERLAP:
                raise ZeroReferenceOverlapError(f"<chi1|u_{r}> estimated as zero")

    for k, node in enumerate(plan.nodes()):
        ref = node.reference
        chi_add = PureState.from_vector(layout, ref.chi_add)
        g_true = abs(overlap(chi1, chi_add))
        joint = PureState(ancilla, np.stack([chi1.amplitudes, chi_add.amplitudes], axis=1).reshape(-1)
                          / np.sqrt(2))
        budget = min(phase_budget(epsilon, R, c) for c in ref.child_overlaps)
        g_parts = []
        for part in ("Re", "Im"):
            site = f"node{k}/hadamard/chi1_chi_add/{part}"
            n = _shots_for(budget * g_true) if sampled else 0
            g_parts.append(hadamard_test(joint, {"anc": 0}, {"anc": 1}, part, n,
                                         rng_for(site), site).value)
            plan.shot_ledger[f"{label}/{site}"] = n
        g = complex(g_parts[0], g_parts[1])
        if abs(g) < ZERO_OVERLAP:
            raise ZeroReferenceOverlapError(f"node {k}: <chi1|chi_add> estimated as zero")

        term: dict[int, complex] = {}
        for r in node.members:
            parts = []
            for part in ("Re", "Im"):
                site = f"node{k}/swap3/{r}/{part}"
                n = _shots_for(budget * ref_overlap[r] * g_true) if sampled else 0
                parts.append(swap3(chi_add, u_states[r], chi1, part, n, rng_for(site), site).value)
                plan.shot_ledger[f"{label}/{site}"] = n
            term[r] = complex(parts[0], parts[1]) / (ref_overlap[r] * g)

        thetas = []
        for child in node.children:
            members = list(child.members)
            w = plan.weights[members] / np.linalg.norm(plan.weights[members])
            thetas.append(float(np.angle(sum(wr * term[r] for wr, r in zip(w, members)))))
        node.theta = (thetas[0], thetas[1])
    return plan


def exact_addition_phases(plan: AdditionPlan, U: np.ndarray) -> list[tuple[float, float]]:
    """True ``arg<chi_add|psi_j>`` per node, for checking estimates."""
    out = []
    for node in plan.nodes():
        out.append(tuple(float(np.angle(np.vdot(node.reference.chi_add,
                                                plan.partial_state(c.members, U))))
                         for c in node.children))
    return out


# ---------------------------------------------------------------- mode assembly

@dataclass(frozen=True, eq=False)
class ModeBuild:
    state: PureState
    fidelity: float
    success_prob: float
    node_probs: tuple[float, ...]
    single_step_fidelity: float
    single_step_success: float
    zeta3: float
    zeta4: float


def build_mode(plan: AdditionPlan, U: np.ndarray, sigma_hat, layout: RegisterLayout | None = None
               ) -> ModeBuild:
    """Assemble the mode bottom-up and compare with the direct superposition.

    Also reports the single-step variant: both children of the root are
    prepared directly by out-of-phase superposition and added once.
    """
    if layout is None:
        layout = RegisterLayout.of(("1", qubits_for(U.shape[0])))
    target = PureState.from_vector(layout, U @ plan.weights)
    built: dict[int, PureState] = {}

    def state_of(n: TreeNode) -> PureState:
        if n.is_leaf:
            return PureState.from_vector(layout, U[:, n.members[0]])
        return built[id(n)]

    probs = []
    for node in plan.nodes():
        left, right = node.children
        chi_add = PureState.from_vector(layout, node.reference.chi_add)
        th0, th1 = node.theta
        res = coherent_add(state_of(left), state_of(right), node.alpha * np.exp(1j * th0),
                           node.beta * np.exp(1j * th1), chi_add)
        built[id(node)] = res.state
        probs.append(res.success_prob)

    if plan.root.is_leaf:
        return ModeBuild(state_of(plan.root), abs(overlap(target, state_of(plan.root))) ** 2,
                         1.0, (), 1.0, 1.0, 1.0, 1.0)

    final = built[id(plan.root)]
    refs = [n.reference for n in plan.nodes()]
    zeta3 = min(r.chi1_overlap for r in refs) ** 2
    zeta4 = min(min(r.child_overlaps) for r in refs) ** 2

    # single step: prepare root children directly from the oracle
    root = plan.root
    kid_vectors = []
    for child in root.children:
        kid_vectors.append(_leaf_vector(child.members[0], plan.weights) if child.is_leaf
                           else child.reference.node_vector)
    preps = [out_of_phase_superposition(v, U, sigma_hat, plan.hidden_phases) for v in kid_vectors]
    th0, th1 = root.theta
    single = coherent_add(PureState.from_vector(layout, preps[0].vector),
                          PureState.from_vector(layout, preps[1].vector),
                          root.alpha * np.exp(1j * th0), root.beta * np.exp(1j * th1),
                          PureState.from_vector(layout, root.reference.chi_add))
    return ModeBuild(
        state=final,
        fidelity=float(abs(overlap(target, final)) ** 2),
        success_prob=float(np.prod(probs)),
        node_probs=tuple(probs),
        single_step_fidelity=float(abs(overlap(target, single.state)) ** 2),
        single_step_success=float(preps[0].success_prob * preps[1].success_prob * single.success_prob),
        zeta3=float(zeta3),
        zeta4=float(zeta4),
    )


def reconstruct_mode(weights, U: np.ndarray, sigma_hat, chi1: PureState, shots: int = 0,
                     epsilon: float = 0.05, seed: int = 0, grid_points: int = 64,
                     b: float = 0.5, label: str = "mode") -> tuple[ModeBuild, AdditionPlan]:
    """Plan, reference construction, phase estimation and assembly for one mode.

    Hidden oracle phases are drawn from their own stream and are only used
    inside the simulated oracle.
    """
    plan = plan_tree(weights)
    hidden = site_rng(seed, f"{label}/hidden_phases").uniform(0, 2 * np.pi, plan.R)
    build_references(plan, U, sigma_hat, chi1, hidden, grid_points, b)
    estimate_addition_phases(plan, chi1, U, shots, epsilon, seed, label)
    return build_mode(plan, U, sigma_hat, chi1.layout), plan
