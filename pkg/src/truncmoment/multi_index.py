"""Multi-indices, admissible truncations and the shift-domain index sets.

Multi-indices are plain tuples of non-negative ints.  An admissible set keeps
the user's (or the family's) ordering: ordinal ``j`` of ``K.members`` is the
generator index used by every matrix downstream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

MultiIndex = tuple[int, ...]


class IndexSetError(ValueError):
    """Raised for malformed or non-admissible truncations."""


def shift(k: Sequence[int], axis: int) -> MultiIndex:
    """Increment coordinate ``axis`` (1-based) of ``k`` by one."""
    if not 1 <= axis <= len(k):
        raise IndexSetError(f"axis {axis} out of range 1..{len(k)}")
    out = list(k)
    out[axis - 1] += 1
    return tuple(out)


def unit(n: int, axis: int) -> MultiIndex:
    return shift((0,) * n, axis)


def add(a: Sequence[int], b: Sequence[int]) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


def _check_members(members: Iterable[Sequence[int]]) -> list[MultiIndex]:
    out = [tuple(int(c) for c in k) for k in members]
    if not out:
        raise IndexSetError("empty index set")
    n = len(out[0])
    for k in out:
        if len(k) != n:
            raise IndexSetError(f"mixed dimensions: {k} has length {len(k)}, expected {n}")
        if any(c < 0 for c in k):
            raise IndexSetError(f"negative coordinate in {k}")
    return out


def _reachable(pts: set[MultiIndex]) -> set[MultiIndex]:
    n = len(next(iter(pts)))
    marked = {(0,) * n} & pts
    # a predecessor has total degree one less, so one graded pass suffices
    for k in sorted(pts, key=sum):
        if k in marked:
            continue
        for j in range(n):
            if k[j] > 0 and k[:j] + (k[j] - 1,) + k[j + 1:] in marked:
                marked.add(k)
                break
    return marked


def is_admissible(members: Iterable[Sequence[int]]) -> bool:
    """Whether every member is reachable from 0 by unit steps inside the set.

    Fixed-point marking: 0 is marked, then any k with some k - e_j marked
    becomes marked.  All members marked <=> admissible.
    """
    pts = set(_check_members(members))
    return len(_reachable(pts)) == len(pts)


@dataclass(frozen=True)
class AdmissibleIndexSet:
    """An ordered admissible truncation ``K = {k_0, ..., k_rho}`` with ``k_0 = 0``."""

    members: tuple[MultiIndex, ...]
    lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        members = tuple(_check_members(self.members))
        object.__setattr__(self, "members", members)
        if len(set(members)) != len(members):
            seen = set()
            dup = next(k for k in members if k in seen or seen.add(k))
            raise IndexSetError(f"duplicate index {dup}")
        if any(members[0]):
            raise IndexSetError(f"k_0 must be the zero index, got {members[0]}")
        if not is_admissible(members):
            bad = _first_unreachable(members)
            raise IndexSetError(f"index set is not admissible: {bad} is unreachable from 0")
        object.__setattr__(self, "lookup", {k: j for j, k in enumerate(members)})

    @property
    def dimension(self) -> int:
        return len(self.members[0])

    @property
    def rho(self) -> int:
        return len(self.members) - 1

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, k) -> bool:
        return tuple(k) in self.lookup

    def index(self, k: Sequence[int]) -> int:
        return self.lookup[tuple(k)]


def _first_unreachable(members: Sequence[MultiIndex]) -> MultiIndex:
    marked = _reachable(set(members))
    return next(k for k in members if k not in marked)


def rectangle_set(d: Sequence[int]) -> AdmissibleIndexSet:
    """Full box ``{k : k_i <= d_i}`` in lexicographic order, axis 1 slowest."""
    if not d:
        raise IndexSetError("need at least one axis bound")
    if any(di < 0 for di in d):
        raise IndexSetError(f"negative bound in {tuple(d)}")
    members = itertools.product(*(range(di + 1) for di in d))
    return AdmissibleIndexSet(tuple(members))


def simplex_set(n: int, r: int) -> AdmissibleIndexSet:
    """``{k : |k| <= r}`` in graded lexicographic order.

    Within one total degree indices are sorted lexicographically, so for
    n=2, r=1 the order is (0,0), (0,1), (1,0).
    """
    if n < 1 or r < 0:
        raise IndexSetError(f"need n >= 1 and r >= 0, got n={n}, r={r}")
    members = [k for k in itertools.product(range(r + 1), repeat=n) if sum(k) <= r]
    members.sort(key=lambda k: (sum(k), k))
    return AdmissibleIndexSet(tuple(members))


def sumset(K: AdmissibleIndexSet) -> list[MultiIndex]:
    """Distinct sums ``a + b`` with ``a, b`` in K, sorted lexicographically."""
    return sorted({add(a, b) for a in K.members for b in K.members})


@dataclass(frozen=True)
class OmegaSets:
    """Ordinals whose unit shifts stay inside K.

    ``omega[l]`` (axis l, 1-based) holds ``j`` with ``k_j + e_l`` in K,
    ``omega0`` those for which every shift stays inside, and
    ``successor[(l, j)]`` is the ordinal of ``k_j + e_l``.
    """

    omega: dict[int, tuple[int, ...]]
    omega0: tuple[int, ...]
    successor: dict[tuple[int, int], int]

    def complement(self, axis: int, size: int) -> tuple[int, ...]:
        dom = set(self.omega[axis])
        return tuple(j for j in range(size) if j not in dom)


def omega_sets(K: AdmissibleIndexSet) -> OmegaSets:
    n = K.dimension
    omega = {}
    successor = {}
    for l in range(1, n + 1):
        js = []
        for j, k in enumerate(K.members):
            nxt = shift(k, l)
            if nxt in K.lookup:
                js.append(j)
                successor[(l, j)] = K.lookup[nxt]
        omega[l] = tuple(js)
    common = set(omega[1])
    for l in range(2, n + 1):
        common &= set(omega[l])
    return OmegaSets(omega=omega, omega0=tuple(sorted(common)), successor=successor)
