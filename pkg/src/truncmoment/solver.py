"""End-to-end construction of an atomic representing measure.

The ten steps are: fix the indexation, test the necessary conditions, assemble
the Hilbert space, handle ``s_0 = 0``, orthonormalise, build (or extend and
constrain) the multiplication operators, diagonalise them jointly and read
off the measure.  Every stop is reported through :class:`SolverReport`; only
malformed input raises.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import gram, hilbert, operators, spectral
from .gram import ConditionReport, GramSystem, MomentSequence, build_gram, check_conditions
from .hilbert import OrthonormalBasis, check_dimensional_stability, gram_schmidt
from .measure import verify_solution
from .multi_index import AdmissibleIndexSet
from .operators import (CommutativityError, HermiticityError, IllDefinedOperatorError, OperatorError,
                        OperatorSet, parametrize_extension, solve_commutativity, solve_hermiticity,
                        stable_matrices)
from .spectral import AtomicMeasure, JointEigenstructure, SpectralError, extract_measure, joint_diagonalize

log = logging.getLogger(__name__)

TOL_VERIFY = 1e-7

_STRATEGIES = {"auto": "auto", "stable": "stable", "stable_only": "stable",
               "extension": "extension", "extension_only": "extension"}


class Status(str, enum.Enum):
    SOLVED = "solved"
    ZERO_MEASURE = "zero_measure"
    REJECTED_POSITIVITY = "rejected_positivity"
    REJECTED_KERNEL = "rejected_kernel"
    REJECTED_DEGENERATE = "rejected_degenerate"
    REJECTED_ILL_DEFINED = "rejected_ill_defined"
    COMMUTATIVITY_UNRESOLVED = "commutativity_unresolved"
    STABILITY_FAILED_AND_EXTENSION_FAILED = "stability_failed_and_extension_failed"
    VERIFICATION_FAILED = "verification_failed"


@dataclass
class SolverConfig:
    tol_psd: float = gram.TOL_PSD
    tol_ker: float = gram.TOL_KER
    tol_rank: float = hilbert.TOL_RANK
    tol_herm: float = operators.TOL_HERM
    tol_comm: float = operators.TOL_COMM
    tol_eig: float = spectral.TOL_EIG
    tol_cluster: float = spectral.TOL_CLUSTER
    tol_atom: float = spectral.TOL_ATOM
    tol_verify: float = TOL_VERIFY
    params: dict[str, float] = field(default_factory=dict)
    strategy: str = "auto"
    max_iters: int = 50
    seed: int = 0
    starts: int = 8
    param_range: tuple[float, float] = (-10.0, 10.0)
    verify: bool = True

    def __post_init__(self):
        for name in ("tol_psd", "tol_ker", "tol_rank", "tol_herm", "tol_comm", "tol_eig",
                     "tol_cluster", "tol_atom", "tol_verify"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.strategy not in _STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.strategy = _STRATEGIES[self.strategy]
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class StepRecord:
    step: int
    name: str
    outcome: str
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class SolverReport:
    status: Status
    measure: Optional[AtomicMeasure] = None
    dimension_H: int = 0
    dimension_H0: int = 0
    stable: bool = False
    path: Optional[str] = None
    message: str = ""
    condition_report: Optional[ConditionReport] = None
    residuals: dict[str, Any] = field(default_factory=dict)
    chosen_params: dict[str, float] = field(default_factory=dict)
    ignored_params: list[str] = field(default_factory=list)
    verification_max_error: Optional[float] = None
    verification_worst_index: Optional[tuple[int, ...]] = None
    trace: list[StepRecord] = field(default_factory=list)
    # intermediate objects, kept for diagnostics and tests
    gram: Optional[GramSystem] = None
    basis: Optional[OrthonormalBasis] = None
    operators: Optional[OperatorSet] = None
    eigen: Optional[JointEigenstructure] = None

    @property
    def solved(self) -> bool:
        return self.status in (Status.SOLVED, Status.ZERO_MEASURE)

    @property
    def stopped_at(self) -> int:
        return self.trace[-1].step if self.trace else 0


def _stop(report: SolverReport, status: Status, step: int, name: str, message: str, **detail) -> SolverReport:
    report.status = status
    report.message = message
    report.trace.append(StepRecord(step, name, f"stopped: {status.value}", detail))
    log.info("stopped at step %d: %s", step, message)
    return report


def _extension_operators(K, G, B, cfg: SolverConfig, report: SolverReport) -> OperatorSet:
    om = G.omega
    reduced = []
    counts = {}
    for l in range(1, K.dimension + 1):
        P = parametrize_extension(K, om, B, G, l, cfg.tol_rank)
        counts[l] = P.num_params
        reduced.append(solve_hermiticity(P, cfg.tol_herm))
    free = {pid for P in reduced for pid in P.param_ids}
    report.ignored_params = sorted(pid for pid in cfg.params if pid not in free)
    user = {pid: v for pid, v in cfg.params.items() if pid in free}
    report.trace.append(StepRecord(6, "parametrize extensions", "ok", {"parameters_per_axis": counts}))
    report.trace.append(StepRecord(7, "matrices of the extensions", "ok",
                                   {"free_after_hermiticity": {P.axis: list(P.param_ids) for P in reduced}}))
    ops = solve_commutativity(reduced, user, strategy=cfg.strategy, tol_comm=cfg.tol_comm,
                              max_iters=cfg.max_iters, seed=cfg.seed, starts=cfg.starts,
                              param_range=cfg.param_range)
    return ops


def solve(K: AdmissibleIndexSet, S: MomentSequence, cfg: SolverConfig | None = None) -> SolverReport:
    """Run the full construction on moments ``S`` over the ordered truncation ``K``."""
    cfg = cfg or SolverConfig()
    if S.K != K:
        raise ValueError("moment sequence was built for a different truncation")
    report = SolverReport(status=Status.SOLVED)
    trace = report.trace

    trace.append(StepRecord(1, "indexation", "ok", {"ordering": [list(k) for k in K.members]}))

    G = build_gram(S)
    report.gram = G
    cond = check_conditions(G, cfg.tol_psd, cfg.tol_ker)
    report.condition_report = cond
    if not cond.psd_ok:
        return _stop(report, Status.REJECTED_POSITIVITY, 2, "necessary conditions",
                     f"Gram matrix is not positive semidefinite (min eigenvalue {cond.min_eigenvalue:.6g})",
                     min_eigenvalue=cond.min_eigenvalue)
    if not all(cond.kernel_ok.values()):
        bad = [l for l, ok in cond.kernel_ok.items() if not ok]
        return _stop(report, Status.REJECTED_KERNEL, 2, "necessary conditions",
                     f"kernel inclusion fails on axis {bad[0]}", axes=bad)
    trace.append(StepRecord(2, "necessary conditions", "ok", {"min_eigenvalue": cond.min_eigenvalue}))
    trace.append(StepRecord(3, "associated Hilbert space", "ok", {"generators": len(K)}))

    if abs(S.s0) <= cfg.tol_psd * S.scale():
        if S.is_zero():
            report.measure = AtomicMeasure.from_atoms([], K.dimension)
            report.verification_max_error = 0.0
            return _stop(report, Status.ZERO_MEASURE, 4, "zero total mass",
                         "all moments vanish; the zero measure is the solution")
        return _stop(report, Status.REJECTED_DEGENERATE, 4, "zero total mass",
                     "s_0 = 0 but some moment is nonzero; no solution exists")
    trace.append(StepRecord(4, "zero total mass", "ok", {"s0": S.s0}))

    try:
        B = gram_schmidt(G, range(len(K)), cfg.tol_rank, cfg.tol_psd)
        stable, B0, stab_res = check_dimensional_stability(G, cfg.tol_rank, cfg.tol_psd)
    except hilbert.IndefiniteGramError as exc:
        return _stop(report, Status.REJECTED_POSITIVITY, 5, "orthonormal basis", str(exc))
    report.dimension_H, report.dimension_H0, report.stable = B.dim, B0.dim, stable
    report.residuals["stability"] = {int(j): float(r) for j, r in stab_res.items()}
    trace.append(StepRecord(5, "orthonormal basis", "ok",
                            {"dim_H": B.dim, "dim_H0": B0.dim, "stable": stable, "kept": list(B.kept)}))

    ops, basis = None, None
    if stable and cfg.strategy in ("auto", "stable"):
        try:
            ops = stable_matrices(K, G.omega, B0, G, cfg.tol_herm, cfg.tol_comm)
            basis = B0
            report.path = "stable"
            trace.append(StepRecord(8, "self-adjointness and commutativity", "ok",
                                    {"path": "stable", "commutators": _pairs(ops.commutator_residuals)}))
        except OperatorError as exc:
            best = getattr(exc, "best", None)
            if best is not None:
                report.residuals["stable_commutators"] = _pairs(best.commutator_residuals)
            if cfg.strategy == "stable":
                report.operators = best
                return _stop(report, Status.COMMUTATIVITY_UNRESOLVED, 8,
                             "self-adjointness and commutativity", str(exc))
            log.info("stable path failed (%s); trying extensions", exc)
    elif not stable and cfg.strategy == "stable":
        return _stop(report, Status.STABILITY_FAILED_AND_EXTENSION_FAILED, 5, "orthonormal basis",
                     "moments are not dimensionally stable and extensions are disabled")

    if ops is None:
        report.path = "extension"
        try:
            ops = _extension_operators(K, G, B, cfg, report)
        except IllDefinedOperatorError as exc:
            return _stop(report, Status.REJECTED_ILL_DEFINED, 6, "parametrize extensions", str(exc),
                         axis=exc.axis, generator=exc.generator)
        except HermiticityError as exc:
            return _stop(report, Status.STABILITY_FAILED_AND_EXTENSION_FAILED, 8,
                         "self-adjointness and commutativity", str(exc), axis=exc.axis)
        except CommutativityError as exc:
            report.operators = exc.best
            report.chosen_params = exc.best.chosen_params
            report.residuals["commutators"] = _pairs(exc.best.commutator_residuals)
            report.residuals["commutator_history"] = list(exc.best.history)
            return _stop(report, Status.COMMUTATIVITY_UNRESOLVED, 8,
                         "self-adjointness and commutativity", str(exc))
        except OperatorError as exc:
            return _stop(report, Status.STABILITY_FAILED_AND_EXTENSION_FAILED, 6,
                         "parametrize extensions", str(exc))
        basis = B
        report.chosen_params = ops.chosen_params
        trace.append(StepRecord(8, "self-adjointness and commutativity", "ok",
                                {"path": "extension", "method": ops.method,
                                 "commutators": _pairs(ops.commutator_residuals),
                                 "history": list(ops.history)}))

    report.operators = ops
    report.basis = basis
    report.residuals["hermiticity"] = list(ops.hermiticity_residuals)
    report.residuals["commutators"] = _pairs(ops.commutator_residuals)
    report.residuals["commutator_history"] = list(ops.history)

    try:
        J = joint_diagonalize(ops.matrices, cfg.tol_eig, cfg.tol_cluster)
    except SpectralError as exc:
        return _stop(report, Status.COMMUTATIVITY_UNRESOLVED, 9, "joint eigendecomposition", str(exc))
    report.eigen = J
    report.residuals["eigen"] = J.residual
    trace.append(StepRecord(9, "joint eigendecomposition", "ok",
                            {"eigentuples": [[float(x) for x in t] for t in J.eigentuples]}))

    mu = extract_measure(J, basis.coords(0), cfg.tol_atom)
    report.measure = mu
    trace.append(StepRecord(10, "atomic measure", "ok", {"atoms": len(mu)}))

    if cfg.verify:
        ok, err, worst = verify_solution(mu, S, cfg.tol_verify)
        report.verification_max_error = err
        report.verification_worst_index = worst
        if not ok:
            return _stop(report, Status.VERIFICATION_FAILED, 10, "atomic measure",
                         f"recovered measure misses moment {worst} by {err:.3e}")
    report.status = Status.SOLVED
    report.message = f"{len(mu)}-atomic solution via the {report.path} path"
    return report


def _pairs(d: dict[tuple[int, int], float]) -> dict[str, float]:
    return {f"{l},{r}": float(v) for (l, r), v in d.items()}
