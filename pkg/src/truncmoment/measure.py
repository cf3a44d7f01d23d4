"""Oracle side: integrate monomials against atomic measures and make test problems.

Nothing here touches Gram matrices or operators, so it can check the solver
independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gram import MomentSequence
from .multi_index import AdmissibleIndexSet, sumset
from .spectral import AtomicMeasure

MIN_SEPARATION = 1e-2
WEIGHT_RANGE = (0.1, 2.0)


def integrate_monomial(mu: AtomicMeasure, k: Sequence[int]) -> float:
    """``sum_i w_i prod_r t_{i,r}^{k_r}`` with ``0**0 == 1``, accumulated by ``math.fsum``."""
    if len(mu) and mu.points.shape[1] != len(k):
        raise ValueError(f"measure lives in R^{mu.points.shape[1]}, index {tuple(k)} has length {len(k)}")
    terms = []
    for p, w in zip(mu.points, mu.weights):
        term = float(w)
        for x, e in zip(p, k):
            if e:
                term *= float(x) ** int(e)
        terms.append(term)
    return math.fsum(terms)


def moments_of(mu: AtomicMeasure, K: AdmissibleIndexSet) -> MomentSequence:
    return MomentSequence(K, {k: integrate_monomial(mu, k) for k in sumset(K)})


def verify_solution(mu: AtomicMeasure, S: MomentSequence, tol: float = 1e-7):
    """Re-integrate every moment of ``K + K``.

    Returns ``(ok, max_abs_error, worst_index)``; ``ok`` means the error is at
    most ``tol * max(1, max |s_k|)``.
    """
    worst_k, worst = None, -1.0
    for k, s in S.values.items():
        err = abs(integrate_monomial(mu, k) - s)
        if err > worst:
            worst, worst_k = err, k
    return worst <= tol * S.scale(), worst, worst_k


@dataclass(frozen=True)
class GeneratedProblem:
    K: AdmissibleIndexSet
    moments: MomentSequence
    truth: AtomicMeasure
    seed: int


def generate_problem(n: int, K: AdmissibleIndexSet, num_atoms: int,
                     coordinate_range: tuple[float, float] = (-2.0, 2.0), seed: int = 0,
                     max_tries: int = 10_000) -> GeneratedProblem:
    """Random atomic measure on a box and its moments on ``K + K``.

    Points are uniform in ``coordinate_range`` per axis and kept at Euclidean
    distance at least ``MIN_SEPARATION``; weights are uniform in
    ``WEIGHT_RANGE``.  Reproducible from ``seed``.
    """
    if num_atoms < 0:
        raise ValueError("num_atoms must be non-negative")
    if K.dimension != n:
        raise ValueError(f"K has dimension {K.dimension}, expected {n}")
    rng = np.random.default_rng(seed)
    lo, hi = coordinate_range
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < num_atoms:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"cannot place {num_atoms} atoms {MIN_SEPARATION} apart in "
                             f"[{lo}, {hi}]^{n}")
        p = rng.uniform(lo, hi, size=n)
        if all(np.linalg.norm(p - q) >= MIN_SEPARATION for q in pts):
            pts.append(p)
    weights = rng.uniform(*WEIGHT_RANGE, size=num_atoms)
    truth = AtomicMeasure(np.array(pts).reshape(num_atoms, n), weights, n)
    return GeneratedProblem(K=K, moments=moments_of(truth, K), truth=truth, seed=seed)
