"""Moment data, Gram matrices and the two necessary solvability tests."""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .multi_index import AdmissibleIndexSet, MultiIndex, OmegaSets, add, omega_sets, sumset

TOL_PSD = 1e-9
TOL_KER = 1e-8


class MomentError(ValueError):
    """Raised when moment data does not match its truncation."""


@dataclass(frozen=True)
class MomentSequence:
    """Real moments ``s_k`` for every ``k`` in ``K + K``."""

    K: AdmissibleIndexSet
    values: Mapping[MultiIndex, float]

    def __post_init__(self):
        clean = {}
        n = self.K.dimension
        for k, v in self.values.items():
            k = tuple(int(c) for c in k)
            if len(k) != n:
                raise MomentError(f"moment index {k} has dimension {len(k)}, expected {n}")
            if isinstance(v, complex) or (isinstance(v, np.generic) and np.iscomplexobj(v)):
                raise MomentError(f"moment {k} is complex; only real moments are accepted")
            if not isinstance(v, (numbers.Real, np.floating, np.integer)):
                raise MomentError(f"moment {k} is not a real number: {v!r}")
            v = float(v)
            if not math.isfinite(v):
                raise MomentError(f"moment {k} is not finite: {v}")
            if k in clean:
                raise MomentError(f"moment {k} given twice")
            clean[k] = v
        required = sumset(self.K)
        missing = [k for k in required if k not in clean]
        if missing:
            raise MomentError(f"missing moment for index {missing[0]}"
                              + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
        req = set(required)
        extra = [k for k in clean if k not in req]
        if extra:
            raise MomentError(f"moment index {sorted(extra)[0]} is not in K+K")
        object.__setattr__(self, "values", clean)

    @classmethod
    def from_function(cls, K: AdmissibleIndexSet, f: Callable[[MultiIndex], float]):
        return cls(K, {k: f(k) for k in sumset(K)})

    def __getitem__(self, k) -> float:
        return self.values[tuple(k)]

    @property
    def s0(self) -> float:
        return self.values[(0,) * self.K.dimension]

    def scale(self) -> float:
        return max(1.0, max(abs(v) for v in self.values.values()))

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values.values())


@dataclass(frozen=True)
class GramSystem:
    """``gamma[m, j] = s_{k_j + k_m}`` plus the per-axis blocks on Omega_l."""

    K: AdmissibleIndexSet
    omega: OmegaSets
    gamma: np.ndarray
    gamma_l: dict[int, np.ndarray]
    gamma_hat_l: dict[int, np.ndarray]


def build_gram(S: MomentSequence) -> GramSystem:
    K = S.K
    size = len(K)
    gamma = np.empty((size, size))
    for m in range(size):
        for j in range(m, size):
            gamma[m, j] = gamma[j, m] = S[add(K.members[j], K.members[m])]
    om = omega_sets(K)
    gamma_l, gamma_hat_l = {}, {}
    for l, idx in om.omega.items():
        idx = list(idx)
        gamma_l[l] = gamma[np.ix_(idx, idx)]
        succ = [om.successor[(l, j)] for j in idx]
        # s_{k_j + e_l + k_m + e_l} is the Gram entry of the shifted generators
        gamma_hat_l[l] = gamma[np.ix_(succ, succ)]
    return GramSystem(K=K, omega=om, gamma=gamma, gamma_l=gamma_l, gamma_hat_l=gamma_hat_l)


def _eigh(a: np.ndarray):
    if not np.all(np.isfinite(a)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    return np.linalg.eigh(a)


def check_positivity(G: GramSystem, tol: float = TOL_PSD):
    """Test ``Gamma >= 0``.

    Returns
    -------
    ok : bool
    min_eigenvalue : float
    witness : ndarray or None
        Unit eigenvector of the most negative eigenvalue when the test fails.
    """
    gamma = G.gamma
    w, v = _eigh(gamma)
    scale = max(1.0, np.linalg.norm(gamma, 2)) if gamma.size else 1.0
    lam = float(w[0])
    if lam >= -tol * scale:
        return True, lam, None
    return False, lam, v[:, 0].copy()


@dataclass
class KernelWitness:
    axis: int
    vector: np.ndarray
    gamma_norm: float
    gamma_hat_norm: float


def check_kernel_inclusion(G: GramSystem, tol: float = TOL_KER):
    """Test ``Ker Gamma_l ⊆ Ker Gamma_hat_l`` for every axis.

    The numerical kernel of ``Gamma_l`` is spanned by eigenvectors with
    ``|lambda| <= tol * max(1, ||Gamma_l||)``.  A kernel vector ``x`` violates
    the inclusion when ``x* Gamma_hat_l x > tol * (1 + ||Gamma_hat_l||)`` or
    ``||Gamma_hat_l x|| > sqrt(tol) * max(1, ||Gamma_hat_l||)``.  For PSD data
    the quadratic form is the sharp test (it scales like the eigenvalue, while
    ``||Gamma_hat_l x||`` only scales like its square root); the second test
    catches indefinite input.

    Returns ``{axis: (ok, witness)}``; the witness is the offending kernel
    vector with the largest image.
    """
    out = {}
    for l, gl in G.gamma_l.items():
        gh = G.gamma_hat_l[l]
        if gl.size == 0:
            out[l] = (True, None)
            continue
        w, v = _eigh(gl)
        nl = np.linalg.norm(gl, 2)
        nh = np.linalg.norm(gh, 2)
        ker = v[:, np.abs(w) <= tol * max(1.0, nl)]
        if ker.shape[1] == 0:
            out[l] = (True, None)
            continue
        images = np.linalg.norm(gh @ ker, axis=0)
        quad = np.abs(np.einsum("ij,ij->j", ker, gh @ ker))
        bad = (quad > tol * (1.0 + nh)) | (images > np.sqrt(tol) * max(1.0, nh))
        if not bad.any():
            out[l] = (True, None)
        else:
            worst = int(np.argmax(np.where(bad, images, -1.0)))
            out[l] = (False, KernelWitness(l, ker[:, worst].copy(), nl, nh))
    return out


@dataclass
class ConditionReport:
    psd_ok: bool
    min_eigenvalue: float
    psd_witness: Optional[np.ndarray] = None
    kernel_ok: dict[int, bool] = field(default_factory=dict)
    kernel_witness: Optional[KernelWitness] = None
    spectrum: Sequence[float] = ()

    @property
    def ok(self) -> bool:
        return self.psd_ok and all(self.kernel_ok.values())


def check_conditions(G: GramSystem, tol_psd: float = TOL_PSD, tol_ker: float = TOL_KER) -> ConditionReport:
    ok, lam, wit = check_positivity(G, tol_psd)
    spectrum = np.linalg.eigvalsh(G.gamma)
    ker = check_kernel_inclusion(G, tol_ker)
    witness = next((w for _, w in ker.values() if w is not None), None)
    return ConditionReport(
        psd_ok=ok,
        min_eigenvalue=lam,
        psd_witness=wit,
        kernel_ok={l: r[0] for l, r in ker.items()},
        kernel_witness=witness,
        spectrum=tuple(float(x) for x in spectrum),
    )
