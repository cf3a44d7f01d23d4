"""The finite-dimensional Hilbert space spanned by the monomial classes.

Generators ``g_j`` are never materialised.  Every inner product is read off
the Gram matrix, ``(g_j, g_m) = gamma[m, j]``, and vectors are carried either
as coefficient vectors over generators or as coordinates in an orthonormal
basis ``f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gram import TOL_PSD, GramSystem

TOL_RANK = 1e-9
# absolute floor, relative to the largest diagonal Gram entry
_ABS_FLOOR = 1e-14


class IndefiniteGramError(ValueError):
    """A squared norm came out clearly negative: the data is not PSD."""


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal ``f_0..f_dim-1`` obtained from a subset of generators.

    ``C[i, k]`` gives ``f_i = sum_k C[i, k] g_k`` and ``D[j, i] = (g_j, f_i)``,
    so that ``g_j = sum_i D[j, i] f_i`` whenever ``g_j`` lies in the span.
    """

    kept: tuple[int, ...]
    C: np.ndarray
    D: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.kept)

    def coords(self, j: int) -> np.ndarray:
        """f-coordinates of the (projection of the) generator ``g_j``."""
        return self.D[j]


def _threshold(gamma: np.ndarray, j: int, tol_rank: float) -> float:
    scale = float(np.max(np.abs(np.diag(gamma)))) if gamma.size else 0.0
    return tol_rank * max(gamma[j, j], 0.0) + _ABS_FLOOR * scale


def _negative_slack(gamma: np.ndarray, v: np.ndarray, tol_psd: float) -> float:
    """How negative ``v* gamma v`` may be for a gamma that passed the PSD test.

    The PSD test admits eigenvalues down to ``-tol_psd * max(1, ||gamma||)``;
    on top of that comes the rounding error of the quadratic form itself.
    """
    gnorm = max(1.0, float(np.linalg.norm(gamma, 2)))
    av = np.abs(v)
    return tol_psd * gnorm * float(v @ v) + 64 * np.finfo(float).eps * float(av @ np.abs(gamma) @ av)


_SPLITTER = 134217729.0  # 2**27 + 1


def _two_prod(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Error-free products: ``a * b == p + e`` exactly (Dekker)."""
    p = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def orthonormality_residual(C: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """``C gamma C^T - I`` evaluated to nearly full working precision.

    ``gamma C^T`` is formed as an exact double-double, then each entry of the
    outer product is summed exactly, so the result does not inherit the
    ``eps * cond(gamma)`` rounding of a plain matrix product.
    """
    d, n = C.shape
    p, e = _two_prod(gamma[:, None, :], C[None, :, :])
    hi = np.empty((n, d))
    lo = np.empty((n, d))
    for k in range(n):
        for j in range(d):
            terms = np.concatenate([p[k, j], e[k, j]])
            hi[k, j] = math.fsum(terms)
            lo[k, j] = math.fsum(np.append(terms, -hi[k, j]))
    p, e = _two_prod(C[:, None, :], hi.T[None, :, :])
    q = C[:, None, :] * lo.T[None, :, :]
    E = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            E[i, j] = E[j, i] = math.fsum(np.concatenate([p[i, j], e[i, j], q[i, j], [-float(i == j)]]))
    return E


def _refine(C: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """One step towards ``C gamma C^T = I`` keeping ``C`` lower triangular in the generators.

    With ``C gamma C^T = I + E`` the Cholesky factor is ``I + F + O(E^2)``,
    ``F`` the lower part of ``E`` with its diagonal halved.
    """
    E = orthonormality_residual(C, gamma)
    F = np.tril(E, -1) + np.diag(np.diag(E)) / 2
    return C - F @ C


def _basis(gamma: np.ndarray, kept: list[int], rows: list[np.ndarray]) -> OrthonormalBasis:
    size = gamma.shape[0]
    C = np.array(rows).reshape(len(rows), size)
    if len(rows):
        # plain Gram-Schmidt leaves C gamma C^T - I near eps * cond(gamma)
        C = _refine(C, gamma)
    D = gamma @ C.T
    return OrthonormalBasis(kept=tuple(kept), C=C, D=D)


def gram_schmidt(G: GramSystem, ordinals: Sequence[int], tol_rank: float = TOL_RANK,
                 tol_psd: float = TOL_PSD) -> OrthonormalBasis:
    """Modified Gram-Schmidt in the Gram metric, dropping dependent generators.

    Generators are processed in the given order.  Each candidate is
    orthogonalised twice against the basis built so far; it is kept when its
    squared residual exceeds ``tol_rank * gamma[j, j]`` (plus a tiny absolute
    floor), otherwise it is recorded as dependent.
    """
    gamma = G.gamma
    size = gamma.shape[0]
    kept: list[int] = []
    rows: list[np.ndarray] = []
    for j in ordinals:
        v = np.zeros(size)
        v[j] = 1.0
        for _ in range(2):
            for c in rows:
                v -= (c @ gamma @ v) * c
        nrm2 = float(v @ gamma @ v)
        if nrm2 < -_negative_slack(gamma, v, tol_psd):
            raise IndefiniteGramError(f"generator {j} has negative squared residual {nrm2:.3e}")
        if nrm2 <= _threshold(gamma, j, tol_rank):
            continue
        rows.append(v / np.sqrt(nrm2))
        kept.append(j)
    return _basis(gamma, kept, rows)


def residual_norm_sq(G: GramSystem, B: OrthonormalBasis, j: int, tol_psd: float = TOL_PSD) -> float:
    """Squared distance from ``g_j`` to the span of ``B``, clamped at 0.

    Computed as ``gamma[j, j] - sum_i |(g_j, f_i)|^2``.
    """
    gamma = G.gamma
    d = gamma[j] @ B.C.T if B.dim else np.zeros(0)
    r = float(gamma[j, j] - d @ d)
    if r < 0.0:
        v = -(d @ B.C) if B.dim else np.zeros(gamma.shape[0])
        v[j] += 1.0
        if r < -_negative_slack(gamma, v, tol_psd) - 64 * np.finfo(float).eps * abs(gamma[j, j]):
            raise IndefiniteGramError(f"generator {j} has negative squared residual {r:.3e}")
        r = 0.0
    return r


def reconstruction_errors(G: GramSystem, B: OrthonormalBasis) -> np.ndarray:
    """``||g_j - sum_i D[j, i] f_i||^2`` for every generator, via the Gram matrix."""
    gamma = G.gamma
    out = np.empty(gamma.shape[0])
    for j in range(gamma.shape[0]):
        # coefficient vector of g_j - sum_i D[j,i] f_i over generators
        v = -(B.D[j] @ B.C) if B.dim else np.zeros(gamma.shape[0])
        v[j] += 1.0
        out[j] = float(v @ gamma @ v)
    return out


def check_dimensional_stability(G: GramSystem, tol_rank: float = TOL_RANK, tol_psd: float = TOL_PSD):
    """Whether ``dim H == dim H_0`` with ``H_0`` spanned by generators in Omega_0.

    Returns ``(stable, basis_on_omega0, residuals)`` where ``residuals`` maps
    every ordinal outside Omega_0 to its squared distance from ``H_0``.
    """
    gamma = G.gamma
    omega0 = G.omega.omega0
    B0 = gram_schmidt(G, omega0, tol_rank, tol_psd)
    inside = set(omega0)
    residuals = {}
    stable = True
    for j in range(gamma.shape[0]):
        if j in inside:
            continue
        r = residual_norm_sq(G, B0, j, tol_psd)
        residuals[j] = r
        if r > _threshold(gamma, j, tol_rank):
            stable = False
    return stable, B0, residuals
