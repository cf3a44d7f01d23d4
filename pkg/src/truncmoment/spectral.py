"""Joint spectral decomposition of commuting Hermitian matrices and atom extraction."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_EIG = 1e-7
TOL_CLUSTER = 1e-7
TOL_ATOM = 1e-10


class SpectralError(RuntimeError):
    pass


@dataclass
class JointEigenstructure:
    """Distinct joint eigenvalue tuples and orthonormal bases of their eigenspaces."""

    eigentuples: list[np.ndarray]
    blocks: list[np.ndarray]  # each dim x multiplicity, orthonormal columns
    residual: float = 0.0

    @property
    def vectors(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, 0))
        return np.hstack(self.blocks)


@dataclass
class AtomicMeasure:
    """Finitely many atoms: ``points[i]`` in R^n carries mass ``weights[i] > 0``."""

    points: np.ndarray
    weights: np.ndarray
    dimension: int = field(default=0)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(len(self.weights), -1) if len(self.weights) else \
                self.points.reshape(0, self.dimension)
        if not self.dimension:
            self.dimension = self.points.shape[1]
        if len(self.points) != len(self.weights):
            raise ValueError("one weight per point")

    @classmethod
    def from_atoms(cls, atoms, dimension: int | None = None) -> "AtomicMeasure":
        atoms = list(atoms)
        if not atoms:
            return cls(np.zeros((0, dimension or 0)), np.zeros(0), dimension or 0)
        pts = np.array([a[0] for a in atoms], dtype=float)
        return cls(pts, np.array([a[1] for a in atoms], dtype=float))

    @property
    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(float(x) for x in p), float(w)) for p, w in zip(self.points, self.weights)]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)


def _norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def cluster_values(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group sorted values into runs whose consecutive gaps are at most ``tol``."""
    if len(values) == 0:
        return []
    order = np.argsort(values)
    groups = [[order[0]]]
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] > tol:
            groups.append([])
        groups[-1].append(b)
    return [np.array(g) for g in groups]


def _generic_weights(n: int) -> np.ndarray:
    # fixed, rationally independent coefficients; golden-ratio fractional parts
    return np.array([1.0 + ((l + 1) * 0.6180339887498949) % 1.0 for l in range(n)])


def joint_diagonalize(Ms: Sequence[np.ndarray], tol_eig: float = TOL_EIG,
                      tol_cluster: float = TOL_CLUSTER) -> JointEigenstructure:
    """Eigenspaces of a generic combination, refined axis by axis.

    The first split uses ``sum_l c_l M_l / ||M_l||`` with fixed generic
    ``c_l``, so that atoms separated along any axis get a wide gap; each
    cluster is then split by ``M_1``, ``M_2``, ... in turn in case two
    eigentuples collide in the combination.  Eigentuple coordinates are the
    Rayleigh quotients ``tr(Q* M_l Q) / mult`` over the final block ``Q``.
    """
    Ms = [np.asarray(M) for M in Ms]
    dim = Ms[0].shape[0]
    scales = [max(1.0, _norm(M)) for M in Ms]
    mix = sum(c * M / s for c, M, s in zip(_generic_weights(len(Ms)), Ms, scales))
    ops = [mix] + Ms
    op_scales = [max(1.0, _norm(mix))] + scales
    tuples, blocks = [], []

    def refine(Q, level):
        A = Q.conj().T @ ops[level] @ Q
        A = 0.5 * (A + A.conj().T)
        w, V = np.linalg.eigh(A)
        for idx in cluster_values(w, tol_cluster * op_scales[level]):
            Qc = Q @ V[:, idx]
            if level + 1 < len(ops) and Qc.shape[1] > 1:
                refine(Qc, level + 1)
            else:
                lam = np.array([np.real(np.trace(Qc.conj().T @ M @ Qc)) / Qc.shape[1] for M in Ms])
                tuples.append(lam)
                blocks.append(Qc)

    if dim:
        dtype = complex if any(np.iscomplexobj(M) for M in Ms) else float
        refine(np.eye(dim, dtype=dtype), 0)

    worst = 0.0
    for lam, Q in zip(tuples, blocks):
        for l, M in enumerate(Ms):
            r = float(np.max(np.linalg.norm(M @ Q - lam[l] * Q, axis=0))) / scales[l]
            worst = max(worst, r)
    if worst > tol_eig:
        raise SpectralError(f"joint eigenvector residual {worst:.3e} exceeds {tol_eig:.1e}; "
                            "the matrices are not (numerically) commuting")
    order = sorted(range(len(tuples)), key=lambda i: tuple(tuples[i]))
    return JointEigenstructure([tuples[i] for i in order], [blocks[i] for i in order], worst)


def extract_measure(J: JointEigenstructure, g0: np.ndarray, tol_atom: float = TOL_ATOM) -> AtomicMeasure:
    """Atoms at the eigentuples with mass ``||P_block g0||^2``.

    Atoms lighter than ``tol_atom * ||g0||^2`` are dropped; the rest are
    sorted lexicographically by point.
    """
    g0 = np.asarray(g0)
    s0 = float(np.real(np.vdot(g0, g0)))
    n = len(J.eigentuples[0]) if J.eigentuples else 0
    atoms = []
    for lam, Q in zip(J.eigentuples, J.blocks):
        w = float(np.sum(np.abs(Q.conj().T @ g0) ** 2))
        if w > tol_atom * s0:
            atoms.append((tuple(float(x) for x in lam), w))
    atoms.sort(key=lambda a: a[0])
    return AtomicMeasure.from_atoms(atoms, n)


def _axis_projections(M: np.ndarray, g0: np.ndarray, tol_cluster: float):
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    out = []
    for idx in cluster_values(w, tol_cluster * max(1.0, _norm(M))):
        Q = V[:, idx]
        out.append((float(np.mean(w[idx])), Q @ (Q.conj().T @ g0), Q))
    return out


def projector_weights(Ms: Sequence[np.ndarray], g0: np.ndarray, tol_cluster: float = TOL_CLUSTER):
    """Masses of every grid point built from single-axis spectral projectors.

    For two axes this is the pairing ``(E_2({y}) g0, E_1({x}) g0)``; in general
    ``(E_1({x_1}) ... E_n({x_n}) g0, g0)``.  Returns ``[(point, weight), ...]``
    over the whole product grid of per-axis eigenvalues, zero weights included.
    """
    g0 = np.asarray(g0, dtype=complex)
    per_axis = [_axis_projections(np.asarray(M), g0, tol_cluster) for M in Ms]
    out = []
    for combo in itertools.product(*per_axis):
        point = tuple(c[0] for c in combo)
        if len(combo) == 2:
            w = np.vdot(combo[0][1], combo[1][1])
        else:
            v = g0
            for _, _, Q in reversed(combo):
                v = Q @ (Q.conj().T @ v)
            w = np.vdot(g0, v)
        out.append((point, float(np.real(w))))
    return out
