"""Command-line driver and file formats.

Matrix file: first line ``rows cols``, then one line per row holding ``cols``
complex literals such as ``0.5-1.25i``. Blank lines and lines starting with
``#`` are skipped. Snapshot file: a header line ``N M dt`` followed by the X
block and the X' block, each in matrix-file format.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .costmodel import cost_report
from .dmdcore import exact_dmd, projected_operator
from .dynamics import SnapshotData, simulate_snapshots
from .errors import (DomainError, GridTooCoarseError, IllConditionedWarning, MissingIndexError,
                     ParseError, QdmdError, StepTooLargeError, ValidationError,
                     ZeroMatrixError, ZeroReferenceOverlapError)
from .kprime import estimate_kprime
from .modes import reconstruct_mode
from .numerics import eig

SCHEMA_VERSION = 1
MODES = ("classical", "quantum", "modes", "cost", "all")

EXIT_CODES: tuple[tuple[type[BaseException], int], ...] = (
    (ParseError, 3),
    (ValidationError, 4),
    (StepTooLargeError, 5),
    (ZeroMatrixError, 6),
    (MissingIndexError, 7),
    (ZeroReferenceOverlapError, 8),
    (GridTooCoarseError, 9),
    (DomainError, 10),
    (QdmdError, 11),
    (OSError, 12),
)

_REAL = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX = re.compile(rf"^([+-]?{_REAL})(?:([+-]{_REAL})i)?$")


# ---------------------------------------------------------------- text formats

def parse_complex(token: str) -> complex:
    m = _COMPLEX.match(token.replace("−", "-"))
    if not m:
        raise ValueError(f"not a complex literal: {token!r}")
    return complex(float(m.group(1)), float(m.group(2) or 0.0))


def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


def _content_lines(lines, start: int = 1):
    for number, line in enumerate(lines, start):
        text = line.strip()
        if text and not text.startswith("#"):
            yield number, text


def _read_matrix(lines) -> np.ndarray:
    """Consume one matrix block from an iterator of ``(line number, text)``."""
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("missing matrix header") from None
    parts = header.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ParseError(f"header must be 'rows cols', got {header!r}", number)
    rows, cols = int(parts[0]), int(parts[1])
    if rows < 1 or cols < 1:
        raise ParseError("matrix dimensions must be positive", number)
    out = np.empty((rows, cols), dtype=complex)
    last = number
    for i in range(rows):
        try:
            number, text = next(lines)
        except StopIteration:
            raise ParseError(f"row {i} missing: expected {rows} rows", last + 1) from None
        tokens = text.split()
        if len(tokens) != cols:
            raise ParseError(f"row {i} has {len(tokens)} entries, expected {cols}", number)
        for j, tok in enumerate(tokens):
            try:
                out[i, j] = parse_complex(tok)
            except ValueError as exc:
                raise ParseError(f"row {i} column {j}: {exc}", number) from None
        last = number
    return out


def parse_matrix_text(text: str) -> np.ndarray:
    lines = _content_lines(text.splitlines())
    out = _read_matrix(lines)
    extra = next(lines, None)
    if extra is not None:
        raise ParseError("unexpected content after the last row", extra[0])
    return out


def parse_matrix_file(path) -> np.ndarray:
    return parse_matrix_text(Path(path).read_text(encoding="utf-8"))


def format_matrix(Z) -> str:
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    rows = [" ".join(format_complex(z) for z in row) for row in Z]
    return "\n".join([f"{Z.shape[0]} {Z.shape[1]}", *rows]) + "\n"


def write_matrix_file(path, Z) -> None:
    Path(path).write_text(format_matrix(Z), encoding="utf-8")


def write_snapshot_file(path, data: SnapshotData) -> None:
    header = f"{data.N} {data.M} {data.dt:.17g}\n"
    Path(path).write_text(header + format_matrix(data.X) + format_matrix(data.Xprime),
                          encoding="utf-8")


def parse_snapshot_file(path) -> SnapshotData:
    """Load snapshots as one trajectory segment (L = 1, T = M)."""
    lines = _content_lines(Path(path).read_text(encoding="utf-8").splitlines())
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("empty snapshot file", 1) from None
    parts = header.split()
    try:
        N, M, dt = int(parts[0]), int(parts[1]), float(parts[2])
        if len(parts) != 3:
            raise ValueError
    except (ValueError, IndexError):
        raise ParseError(f"header must be 'N M dt', got {header!r}", number) from None
    X = _read_matrix(lines)
    Xp = _read_matrix(lines)
    for name, Z in (("X", X), ("X'", Xp)):
        if Z.shape != (N, M):
            raise ParseError(f"{name} block is {Z.shape[0]}x{Z.shape[1]}, header says {N}x{M}")
    if not dt > 0:
        raise ParseError("dt must be positive", number)
    return SnapshotData(X=X, Xprime=Xp, dt=dt, L=1, T=M)


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class RunConfig:
    matrix: str | None = None
    initial: str | None = None
    snapshots: str | None = None
    T: int = 4
    dt: float = 0.1
    rank_tol: float = 1e-8
    shots: int = 0
    seed: int = 0
    bits: int | None = None
    epsilon: float = 0.05
    b: float = 0.5
    grid_points: int = 64
    check_step: bool = True
    workers: int = 1
    out: str | None = None

    def validate(self) -> "RunConfig":
        def bad(field_name: str, why: str):
            raise ValidationError(f"{field_name}: {why}")

        if self.snapshots is None and (self.matrix is None or self.initial is None):
            bad("matrix", "give --snapshots, or both --matrix and --initial")
        if self.snapshots is not None and (self.matrix or self.initial):
            bad("snapshots", "cannot be combined with --matrix/--initial")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            bad("dt", "must be positive")
        if self.T < 1:
            bad("T", "must be at least 1")
        if not 0 < self.rank_tol < 1:
            bad("rank_tol", "must lie in (0, 1)")
        if self.shots < 0:
            bad("shots", "must be non-negative")
        if not 0 <= self.seed < 2**64:
            bad("seed", "must fit in 64 unsigned bits")
        if self.bits is not None and not 1 <= self.bits <= 20:
            bad("bits", "must lie in 1..20 (or 0 for the exact register)")
        if not 0 < self.epsilon < 1:
            bad("epsilon", "must lie in (0, 1)")
        if not 0 < self.b < 1 / math.sqrt(2):
            bad("b", "must lie in (0, 0.7071)")
        if self.grid_points < 8:
            bad("grid_points", "must be at least 8")
        if self.workers < 1:
            bad("workers", "must be at least 1")
        return self

    def document(self) -> dict:
        """Settings that determine the output; thread count and paths excluded."""
        d = asdict(self)
        for key in ("workers", "out", "matrix", "initial", "snapshots"):
            d.pop(key)
        return d


def load_data(config: RunConfig) -> SnapshotData:
    if config.snapshots is not None:
        return parse_snapshot_file(config.snapshots)
    A = parse_matrix_file(config.matrix)
    x0 = parse_matrix_file(config.initial)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"matrix: must be square, got {A.shape[0]}x{A.shape[1]}")
    if x0.shape[0] != A.shape[0]:
        raise ValidationError(f"initial: needs {A.shape[0]} rows, got {x0.shape[0]}")
    return simulate_snapshots(A, x0, config.T, config.dt, check_step=config.check_step)


# ---------------------------------------------------------------- JSON encoding

def to_jsonable(obj):
    """Complex numbers become ``[re, im]``; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- pipeline

def _matched_deviation(a, b) -> float:
    """Largest distance between two eigenvalue multisets under the best pairing."""
    a, b = np.asarray(a), np.asarray(b)
    if a.size != b.size:
        return math.inf
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if a.size else 0.0


def _exponents(vals, dt):
    vals = np.asarray(vals, dtype=complex)
    out = np.full(vals.shape, np.nan, dtype=complex)
    nz = vals != 0
    out[nz] = np.log(vals[nz]) / dt
    return out


def run_pipeline(config: RunConfig, mode: str = "all", data: SnapshotData | None = None) -> dict:
    """Run the requested stages and return the result document."""
    if mode not in MODES:
        raise ValidationError(f"mode: must be one of {MODES}")
    config.validate()
    if data is None:
        data = load_data(config)
    doc: dict = {"schema_version": SCHEMA_VERSION, "version": __version__, "mode": mode,
                 "config": config.document(),
                 "data": {"N": data.N, "M": data.M, "L": data.L, "T": data.T, "dt": data.dt}}
    want = {mode} if mode != "all" else set(MODES)
    if "quantum" in want:
        want.add("classical")

    estimate = inputs = None
    if want & {"quantum", "modes", "cost"}:
        estimate, inputs = estimate_kprime(data, config.rank_tol, config.shots, config.seed,
                                           config.bits, config.workers)
    phase_ref = inputs.refs.chi1 if inputs is not None else None

    if want & {"classical", "quantum"}:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IllConditionedWarning)
            classical = exact_dmd(data, config.rank_tol, phase_ref=phase_ref)
        doc["classical"] = {
            "R": classical.R,
            "kprime": classical.kprime,
            "eigenvalues": classical.eigenvalues,
            "continuous_exponents": classical.cont_exponents,
            "eigvec_condition": classical.eigvec_condition,
            "warnings": [str(w.message) for w in caught],
        }

    if estimate is not None and want & {"quantum", "modes"}:
        q_vals, q_vecs = eig(estimate.kprime)
        q_doc = {
            "R": int(estimate.kprime.shape[0]),
            "kprime": estimate.kprime,
            "kprime_std": estimate.kprime_std,
            "norm_ratio": estimate.norm_ratio,
            "eigenvalues": q_vals,
            "continuous_exponents": _exponents(q_vals, data.dt),
            "shots_total": int(sum(estimate.shot_ledger.values())),
            "shot_ledger": estimate.shot_ledger,
        }
        if "classical" in doc:
            # deviation is measured against the same truncation of X'
            _, ck = projected_operator(data, config.rank_tol, phase_ref, truncate_xprime=True)
            q_doc["kprime_max_deviation"] = (
                float(np.max(np.abs(estimate.kprime - ck)))
                if ck.shape == estimate.kprime.shape else None)
            q_doc["eigenvalue_max_deviation"] = _matched_deviation(q_vals, np.linalg.eigvals(ck))
        if want & {"quantum"}:
            doc["quantum"] = q_doc

    zeta3 = zeta4 = None
    phase_budget: dict[str, int] = {}
    if estimate is not None and "modes" in want:
        U = inputs.factors["Joint"].U
        sigma = inputs.sigma_hat["Joint"]
        modes = []
        for r in range(q_vecs.shape[1]):
            label = f"mode{r}"
            build, plan = reconstruct_mode(q_vecs[:, r], U, sigma, inputs.refs.chi1,
                                           config.shots, config.epsilon, config.seed,
                                           config.grid_points, config.b, label)
            phase_budget |= plan.shot_ledger
            if plan.nodes():
                zeta3 = build.zeta3 if zeta3 is None else min(zeta3, build.zeta3)
                zeta4 = build.zeta4 if zeta4 is None else min(zeta4, build.zeta4)
            modes.append({
                "index": r,
                "eigenvalue": q_vals[r],
                "weights": plan.weights,
                "depth": plan.depth,
                "fidelity": build.fidelity,
                "success_prob": build.success_prob,
                "node_probs": list(build.node_probs),
                "single_step_fidelity": build.single_step_fidelity,
                "single_step_success": build.single_step_success,
                "modified_references": sum(bool(n.reference.modified) for n in plan.nodes()),
                "phase_shots": int(sum(plan.shot_ledger.values())),
            })
        doc["modes"] = modes

    if inputs is not None and "cost" in want:
        report = cost_report(inputs, config.epsilon, zeta3, zeta4, phase_budget)
        doc["cost"] = {k: v for k, v in report.__dict__.items()}
    return doc


# ---------------------------------------------------------------- command line

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", help="system matrix A (matrix file)")
    p.add_argument("--initial", help="initial states, one per column (matrix file)")
    p.add_argument("--snapshots", help="snapshot file instead of --matrix/--initial")
    p.add_argument("--T", type=int, default=4, help="steps per trajectory")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--no-step-check", action="store_true",
                   help="allow dt*||A||_2 > 1")
    p.add_argument("--out", help="output path (default: stdout)")


def _add_quantum(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shots", type=int, default=0, help="shots per site; 0 = exact mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank-tol", type=float, default=1e-8)
    p.add_argument("--bits", type=int, default=0,
                   help="fractional bits of the singular-value register; 0 = exact index register")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--b", type=float, default=0.5, help="reference tilt for weak chi1 overlap")
    p.add_argument("--grid-points", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--all", action="store_true", help="(dmd) also build modes and costs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdmd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qdmd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="integrate x' = Ax and write a snapshot file")
    _add_common(sim)
    for name, help_text in (("dmd", "classical and quantum K' and spectra"),
                            ("modes", "rebuild mode states by coherent addition"),
                            ("cost", "sampling-cost report")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_quantum(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    quantum = getattr(args, "shots", None) is not None
    return RunConfig(
        matrix=args.matrix, initial=args.initial, snapshots=args.snapshots,
        T=args.T, dt=args.dt, check_step=not args.no_step_check, out=args.out,
        **({} if not quantum else dict(
            rank_tol=args.rank_tol, shots=args.shots, seed=args.seed,
            bits=args.bits or None, epsilon=args.epsilon, b=args.b,
            grid_points=args.grid_points, workers=args.workers)),
    )


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    raise exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "simulate":
            if config.matrix is None or config.initial is None:
                raise ValidationError("matrix: simulate needs --matrix and --initial")
            config.validate()
            data = load_data(config)
            if config.out:
                write_snapshot_file(config.out, data)
            else:
                sys.stdout.write(f"{data.N} {data.M} {data.dt:.17g}\n"
                                 + format_matrix(data.X) + format_matrix(data.Xprime))
            return 0
        mode = {"dmd": "all" if args.all else "quantum", "modes": "modes", "cost": "cost"}[args.command]
        doc = run_pipeline(config, mode)
        _emit(dumps(doc), config.out)
        return 0
    except (QdmdError, OSError) as exc:
        code = exit_code_for(exc)
        print(f"qdmd: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
