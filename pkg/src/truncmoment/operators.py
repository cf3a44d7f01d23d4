"""Multiplication operators on the orthonormal basis and their extensions.

Matrices follow the column convention: entry ``(m, j)`` is ``(M f_j, f_m)``,
so column ``j`` holds the coordinates of ``M f_j``.

When the operator ``M_l`` is defined only on part of ``H``, its images on the
remaining generators are free vectors ``sum_j (alpha + i beta) f_j``.  The
real unknowns are named ``alpha:<l>:<k>,<j>`` / ``beta:<l>:<k>,<j>`` after the
axis ``l``, the generator ordinal ``k`` and the basis index ``j``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .gram import GramSystem
from .hilbert import TOL_RANK, OrthonormalBasis, _threshold
from .multi_index import AdmissibleIndexSet, OmegaSets

log = logging.getLogger(__name__)

TOL_HERM = 1e-9
TOL_COMM = 1e-8


class OperatorError(RuntimeError):
    """Base class for failures while building the operator tuple."""


class IllDefinedOperatorError(OperatorError):
    """The prescribed shift images contradict a linear dependence among generators."""

    def __init__(self, axis: int, generator: int, mismatch: float):
        super().__init__(f"M_{axis} is not well defined: image of g_{generator} "
                         f"disagrees with the induced one by {mismatch:.3e}")
        self.axis = axis
        self.generator = generator
        self.mismatch = mismatch


class HermiticityError(OperatorError):
    """No parameter choice makes the extension Hermitian."""

    def __init__(self, axis: int, residual: float):
        super().__init__(f"no self-adjoint extension of M_{axis} within H on this "
                         f"parametrization (residual {residual:.3e})")
        self.axis = axis
        self.residual = residual


class CommutativityError(OperatorError):
    """The operators (or every parameter choice tried) fail to commute."""

    def __init__(self, message: str, best: "OperatorSet"):
        super().__init__(message)
        self.best = best


def param_id(kind: str, axis: int, k: int, j: int) -> str:
    return f"{kind}:{axis}:{k},{j}"


@dataclass(frozen=True)
class ParamMeta:
    axis: int
    generator: int
    basis_index: int
    kind: str  # "alpha" (real part) or "beta" (imaginary part)


@dataclass
class ParametricHermitianMatrix:
    """``M(p) = const + sum_i p_i * coeffs[i]`` over real parameters ``p``.

    ``determined`` records parameters eliminated by a linear solve, each as an
    affine expression ``(offset, {free_id: weight})`` in the remaining ones.
    """

    axis: int
    const: np.ndarray
    param_ids: list[str] = field(default_factory=list)
    coeffs: list[np.ndarray] = field(default_factory=list)
    meta: dict[str, ParamMeta] = field(default_factory=dict)
    determined: dict[str, tuple[float, dict[str, float]]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.param_ids)) != len(self.param_ids):
            raise ValueError("parameter ids must be distinct")
        if len(self.coeffs) != len(self.param_ids):
            raise ValueError("one coefficient matrix per parameter")
        for c in self.coeffs:
            if c.shape != self.const.shape:
                raise ValueError(f"coefficient shape {c.shape} != {self.const.shape}")

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @property
    def num_params(self) -> int:
        return len(self.param_ids)

    def evaluate(self, values: Mapping[str, float] | Sequence[float] | None = None) -> np.ndarray:
        """Matrix at the given parameter values; missing ids default to 0."""
        out = self.const.astype(complex, copy=True)
        if values is None:
            return out
        if isinstance(values, Mapping):
            vec = [float(values.get(pid, 0.0)) for pid in self.param_ids]
        else:
            vec = [float(v) for v in values]
        for p, c in zip(vec, self.coeffs):
            if p:
                out += p * c
        return out

    def resolve(self, values: Mapping[str, float]) -> dict[str, float]:
        """Values for every parameter ever introduced, including eliminated ones."""
        out = {pid: float(values.get(pid, 0.0)) for pid in self.param_ids}
        for pid, (offset, weights) in self.determined.items():
            out[pid] = offset + sum(w * out.get(f, 0.0) for f, w in weights.items())
        return out


@dataclass
class OperatorSet:
    matrices: list[np.ndarray]
    hermiticity_residuals: list[float]
    commutator_residuals: dict[tuple[int, int], float]
    chosen_params: dict[str, float] = field(default_factory=dict)
    method: str = "stable"
    history: list[float] = field(default_factory=list)

    @property
    def max_commutator(self) -> float:
        return max(self.commutator_residuals.values(), default=0.0)


def _norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def hermiticity_residual(M: np.ndarray) -> float:
    """``||M - M*|| / max(1, ||M||)``."""
    return _norm(M - M.conj().T) / max(1.0, _norm(M))


def commutator_residual(A: np.ndarray, B: np.ndarray) -> float:
    """``||AB - BA|| / max(1, ||A|| ||B||)``."""
    return _norm(A @ B - B @ A) / max(1.0, _norm(A) * _norm(B))


def _commutators(mats: Sequence[np.ndarray]) -> dict[tuple[int, int], float]:
    n = len(mats)
    return {(l + 1, r + 1): commutator_residual(mats[l], mats[r])
            for l in range(n) for r in range(l + 1, n)}


def _hermitian_part(M: np.ndarray) -> np.ndarray:
    H = 0.5 * (M + M.conj().T)
    if np.all(H.imag == 0):
        return H.real.copy()
    return H


def build_defined_action(K: AdmissibleIndexSet, omega: OmegaSets, B: OrthonormalBasis, axis: int):
    """``{j: (coords of g_j, coords of g_eta(axis; j))}`` for ``j`` in Omega_axis."""
    return {j: (B.coords(j), B.coords(omega.successor[(axis, j)])) for j in omega.omega[axis]}


def stable_matrices(K: AdmissibleIndexSet, omega: OmegaSets, B0: OrthonormalBasis, G: GramSystem,
                    tol_herm: float = TOL_HERM, tol_comm: float = TOL_COMM) -> OperatorSet:
    """Matrices of the everywhere-defined ``M_l`` on a basis of ``H_0``.

    ``M_l f_i = sum_k C[i, k] g_eta(l; k)`` with ``k`` ranging over Omega_0, where
    ``B0`` lives.  Hermiticity and commutativity are checked, never assumed.
    """
    support = list(omega.omega0)
    mats, herm = [], []
    for l in range(1, K.dimension + 1):
        eta = [omega.successor[(l, k)] for k in support]
        A = (B0.C[:, support] @ B0.D[eta]).T if B0.dim else np.zeros((0, 0))
        h = hermiticity_residual(A)
        herm.append(h)
        if h > tol_herm:
            raise OperatorError(f"M_{l} on H_0 is not Hermitian (residual {h:.3e})")
        mats.append(_hermitian_part(A))
    comms = _commutators(mats)
    ops = OperatorSet(matrices=mats, hermiticity_residuals=herm, commutator_residuals=comms,
                      method="stable")
    bad = [(pair, r) for pair, r in comms.items() if r > tol_comm]
    if bad:
        (l, r), res = max(bad, key=lambda t: t[1])
        raise CommutativityError(f"M_{l} and M_{r} do not commute (residual {res:.3e})", ops)
    return ops


def parametrize_extension(K: AdmissibleIndexSet, omega: OmegaSets, B: OrthonormalBasis, G: GramSystem,
                          axis: int, tol_rank: float = TOL_RANK) -> ParametricHermitianMatrix:
    """Extend ``M_axis`` to all of ``H`` with free images, as an affine matrix.

    The domain starts as the span of ``g_j``, ``j`` in Omega_axis.  Generators
    outside it are visited in increasing ordinal; each one not already in the
    domain span gets a fully free image and enlarges the domain.  The result
    is generally not Hermitian; see :func:`solve_hermiticity`.
    """
    gamma = G.gamma
    dim = B.dim
    action = build_defined_action(K, omega, B, axis)
    Q = np.zeros((dim, 0))
    U_cols: list[np.ndarray] = []
    V_cols: list[np.ndarray] = []
    free_cols: list[tuple[int, int]] = []  # (column in U, generator ordinal)

    def residual(u):
        r = u - Q @ (Q.T @ u)
        return r, float(r @ r)

    for j, (u, img) in action.items():
        r, nrm2 = residual(u)
        if nrm2 > _threshold(gamma, j, tol_rank):
            Q = np.column_stack([Q, r / np.sqrt(nrm2)])
            U_cols.append(u)
            V_cols.append(img)
            continue
        if not U_cols:
            # g_j is zero in H, so its image must be zero as well
            mismatch = float(np.linalg.norm(img))
            ref = 0.0
        else:
            U = np.column_stack(U_cols)
            V = np.column_stack(V_cols)
            c, *_ = np.linalg.lstsq(U, u, rcond=None)
            mismatch = float(np.linalg.norm(V @ c - img))
            ref = float(np.linalg.norm(img) + np.abs(c).sum() * max(np.linalg.norm(V, axis=0)))
        eta = omega.successor[(axis, j)]
        if mismatch ** 2 > tol_rank * max(ref, 0.0) ** 2 + _threshold(gamma, eta, tol_rank):
            raise IllDefinedOperatorError(axis, j, mismatch)

    for k in omega.complement(axis, len(K)):
        u = B.coords(k)
        r, nrm2 = residual(u)
        if nrm2 <= _threshold(gamma, k, tol_rank):
            continue
        Q = np.column_stack([Q, r / np.sqrt(nrm2)])
        free_cols.append((len(U_cols), k))
        U_cols.append(u)
        V_cols.append(np.zeros(dim))

    if len(U_cols) != dim:
        raise OperatorError(f"extension of M_{axis} spans {len(U_cols)} of {dim} dimensions")
    if dim == 0:
        return ParametricHermitianMatrix(axis=axis, const=np.zeros((0, 0)))
    Uinv = np.linalg.inv(np.column_stack(U_cols))
    const = np.column_stack(V_cols) @ Uinv
    ids, coeffs, meta = [], [], {}
    for col, k in free_cols:
        for j in range(dim):
            for kind, unit in (("alpha", 1.0), ("beta", 1j)):
                E = np.zeros((dim, dim), dtype=complex)
                E[j, :] = unit * Uinv[col, :]
                pid = param_id(kind, axis, k, j)
                ids.append(pid)
                coeffs.append(E)
                meta[pid] = ParamMeta(axis, k, j, kind)
    return ParametricHermitianMatrix(axis=axis, const=const.astype(complex), param_ids=ids,
                                     coeffs=coeffs, meta=meta)


def _rref(A: np.ndarray, b: np.ndarray, tol: float):
    """Gauss-Jordan elimination with partial pivoting; returns (R, rhs, pivots)."""
    A = A.astype(float, copy=True)
    b = b.astype(float, copy=True)
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        i = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[i, c]) <= tol:
            A[r:, c] = 0.0
            continue
        A[[r, i]] = A[[i, r]]
        b[[r, i]] = b[[i, r]]
        piv = A[r, c]
        A[r] /= piv
        b[r] /= piv
        for i2 in range(rows):
            if i2 != r and A[i2, c] != 0.0:
                f = A[i2, c]
                A[i2] -= f * A[r]
                b[i2] -= f * b[r]
        pivots.append(c)
        r += 1
    return A, b, pivots


def solve_hermiticity(P: ParametricHermitianMatrix, tol: float = TOL_HERM) -> ParametricHermitianMatrix:
    """Impose ``M(p) = M(p)*`` and eliminate the parameters it determines.

    The real linear system collects real and imaginary parts of the upper
    triangle of ``M(p) - M(p)*``.  Gauss-Jordan elimination in parameter order
    picks the pivot parameters; the rest stay free and keep their ids.
    """
    size = P.size
    iu = np.triu_indices(size)

    def skew(M):
        d = (M - M.conj().T)[iu]
        return np.concatenate([d.real, d.imag])

    rhs = -skew(P.const)
    if P.num_params == 0:
        res = float(np.abs(rhs).max(initial=0.0))
        if res > tol * max(1.0, _norm(P.const)):
            raise HermiticityError(P.axis, res)
        return ParametricHermitianMatrix(axis=P.axis, const=_hermitian_part(P.const).astype(complex),
                                         meta=dict(P.meta), determined=dict(P.determined))
    A = np.column_stack([skew(c) for c in P.coeffs])
    scale = max(1.0, float(np.abs(A).max()))
    R, b, pivots = _rref(A, rhs, tol * scale)
    npiv = len(pivots)
    res = float(np.abs(b[npiv:]).max(initial=0.0))
    if res > tol * max(1.0, float(np.abs(rhs).max(initial=0.0)), _norm(P.const)):
        raise HermiticityError(P.axis, res)

    free = [i for i in range(P.num_params) if i not in set(pivots)]
    const = P.const.astype(complex, copy=True)
    determined = dict(P.determined)
    for row, pc in enumerate(pivots):
        const += b[row] * P.coeffs[pc]
    new_coeffs = []
    for f in free:
        E = P.coeffs[f].astype(complex, copy=True)
        for row, pc in enumerate(pivots):
            if R[row, f] != 0.0:
                E -= R[row, f] * P.coeffs[pc]
        new_coeffs.append(_hermitian_part(E).astype(complex))
    free_ids = [P.param_ids[f] for f in free]
    for row, pc in enumerate(pivots):
        weights = {P.param_ids[f]: -float(R[row, f]) for f in free if R[row, f] != 0.0}
        determined[P.param_ids[pc]] = (float(b[row]), weights)
    return ParametricHermitianMatrix(axis=P.axis, const=_hermitian_part(const).astype(complex),
                                     param_ids=free_ids, coeffs=new_coeffs, meta=dict(P.meta),
                                     determined=determined)


# keep refining past the acceptance tolerance; stop on stagnation
_POLISH = 1e-13


def _min_norm_solve(A: np.ndarray, b: np.ndarray, abs_tol: float) -> np.ndarray:
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    cut = max(abs_tol, sv[0] * max(A.shape) * np.finfo(float).eps) if sv.size else abs_tol
    keep = sv > cut
    return Vt[keep].T @ ((U[:, keep].T @ b) / sv[keep])


def _pair_scale(A: np.ndarray, B: np.ndarray) -> float:
    return max(1.0, _norm(A) * _norm(B))


def _system(Ps, mats, free, axes):
    """Linearised commutator equations in the free parameters of ``axes``.

    Each pair ``(l, r)`` contributes ``[M_l, M_r] + sum_p dp d[M_l, M_r]/dp``,
    scaled by ``max(1, ||M_l|| ||M_r||)`` and split into real and imaginary rows.
    Returns ``(A, b, cols)`` with ``cols`` listing ``(axis, param id)``.
    """
    cols = [(l, pid) for l in axes for pid in free[l]]
    n = len(Ps)
    rows_a, rows_b = [], []
    for l in range(n):
        for r in range(l + 1, n):
            if l not in axes and r not in axes:
                continue
            s = _pair_scale(mats[l], mats[r])
            rhs = -(mats[l] @ mats[r] - mats[r] @ mats[l]).ravel() / s
            block = np.zeros((rhs.size, len(cols)), dtype=complex)
            for c, (ax, pid) in enumerate(cols):
                E = Ps[ax].coeffs[Ps[ax].param_ids.index(pid)]
                if ax == l:
                    block[:, c] = (E @ mats[r] - mats[r] @ E).ravel() / s
                elif ax == r:
                    block[:, c] = (mats[l] @ E - E @ mats[l]).ravel() / s
            rows_a += [block.real, block.imag]
            rows_b += [rhs.real, rhs.imag]
    A = np.vstack(rows_a)
    b = np.concatenate(rows_b)
    # a coefficient matrix commuting with everything gives a column of pure
    # rounding noise; the cutoff is relative to the natural column magnitude
    ref = max((_norm(Ps[ax].coeffs[Ps[ax].param_ids.index(pid)]) for ax, pid in cols), default=1.0)
    ref *= max(_norm(M) for M in mats) / max(_pair_scale(mats[l], mats[r])
                                              for l in range(n) for r in range(l + 1, n))
    return A, b, cols, 1e-10 * max(ref, 1e-300)


def _residual(mats) -> float:
    return max(_commutators(mats).values(), default=0.0)


def _apply(Ps, values, cols, delta, mats, step=1.0):
    values = dict(values)
    mats = list(mats)
    for (ax, pid), d in zip(cols, delta):
        values[pid] += step * float(d)
    for ax in {ax for ax, _ in cols}:
        mats[ax] = Ps[ax].evaluate(values)
    return values, mats


def _alternate(Ps, values, free, max_iters, tol_comm):
    """Cycle axis by axis: fix all other matrices, solve the linear system for one."""
    mats = [P.evaluate(values) for P in Ps]
    history = [_residual(mats)]
    active = [l for l in range(len(Ps)) if free[l]]
    if history[0] <= _POLISH or not active:
        return values, mats, history
    for _ in range(max_iters):
        for l in active:
            A, b, cols, cut = _system(Ps, mats, free, [l])
            values, mats = _apply(Ps, values, cols, _min_norm_solve(A, b, cut), mats)
        history.append(_residual(mats))
        # with one active axis the problem is linear and a single solve is final
        if len(active) == 1 or history[-1] <= _POLISH:
            break
        if history[-1] <= tol_comm and history[-1] > 0.5 * history[-2]:
            break
        if history[-1] >= history[-2] * (1 - 1e-6):
            break
    return values, mats, history


def _gauss_newton(Ps, values, free, max_iters, tol_comm):
    """Joint linearisation of all pairwise commutators, with step halving."""
    mats = [P.evaluate(values) for P in Ps]
    history = [_residual(mats)]
    active = [l for l in range(len(Ps)) if free[l]]
    if not active:
        return values, mats, history
    for _ in range(max_iters):
        if history[-1] <= _POLISH:
            break
        A, b, cols, cut = _system(Ps, mats, free, active)
        delta = _min_norm_solve(A, b, cut)
        step = 1.0
        for _ in range(30):
            v2, m2 = _apply(Ps, values, cols, delta, mats, step)
            r2 = _residual(m2)
            if r2 < history[-1]:
                break
            step *= 0.5
        else:
            break
        values, mats = v2, m2
        history.append(r2)
        if history[-1] <= tol_comm and history[-1] > 0.5 * history[-2]:
            break
    return values, mats, history


def _run(Ps, start, free, max_iters, tol_comm, polish):
    v, m, h = _alternate(Ps, start, free, max_iters, tol_comm)
    if h[-1] > _POLISH and polish:
        v2, m2, h2 = _gauss_newton(Ps, v, free, max_iters, tol_comm)
        return v2, m2, h + h2[1:]
    return v, m, h


def solve_commutativity(Ps: Sequence[ParametricHermitianMatrix], user_values: Mapping[str, float] | None = None,
                        strategy: str = "auto", tol_comm: float = TOL_COMM, max_iters: int = 50,
                        seed: int = 0, starts: int = 8, param_range: tuple[float, float] = (-10.0, 10.0),
                        ) -> OperatorSet:
    """Choose values of the free parameters so all matrices pairwise commute.

    User-supplied values are held fixed; every other free parameter starts at
    0.  The ladder is: a direct linear solve when at most one matrix still has
    free parameters; alternating linear solves (one axis at a time, others
    fixed) followed by a joint linearised refinement; and finally, unless
    ``strategy`` is ``"extension"``/``"stable"``, the same from ``starts``
    seeded uniform draws in ``param_range``.  Residuals are relative,
    ``||[M_l, M_r]|| / max(1, ||M_l|| ||M_r||)``.
    """
    user_values = dict(user_values or {})
    values = {pid: float(user_values.get(pid, 0.0)) for P in Ps for pid in P.param_ids}
    free = [[pid for pid in P.param_ids if pid not in user_values] for P in Ps]
    nactive = sum(1 for f in free if f)
    method = "direct" if nactive <= 1 else "alternating"

    vals, mats, history = _run(Ps, values, free, max_iters, tol_comm, nactive > 1)
    best = (history[-1], vals, mats, history, method)
    if best[0] > tol_comm and nactive > 1 and strategy == "auto":
        rng = np.random.default_rng(seed)
        lo, hi = param_range
        for _ in range(starts):
            start = dict(values)
            for f in free:
                for pid in f:
                    start[pid] = float(rng.uniform(lo, hi))
            v2, m2, h2 = _run(Ps, start, free, max_iters, tol_comm, True)
            if h2[-1] < best[0]:
                best = (h2[-1], v2, m2, h2, "multistart")
            if best[0] <= tol_comm:
                break

    res, vals, mats, history, method = best
    chosen = {}
    for P in Ps:
        chosen.update(P.resolve(vals))
    herm = [hermiticity_residual(M) for M in mats]
    mats = [_hermitian_part(M) for M in mats]
    ops = OperatorSet(matrices=mats, hermiticity_residuals=herm, commutator_residuals=_commutators(mats),
                      chosen_params=chosen, method=method, history=history)
    log.debug("commutativity via %s: residual history %s", method, history)
    if res > tol_comm:
        raise CommutativityError(f"commutativity unresolved, best residual {res:.3e}", ops)
    return ops
