"""Activations as dense functions on finite permutation groups.

Every group is realised concretely as a list of :class:`Permutation` values on its
natural domain, with a canonical element order:

* symmetric: lexicographic one-line notation (identity first)
* dihedral: ``e, r, ..., r^(m-1), s, rs, ..., r^(m-1)s``
* cyclic: ``e, r, ..., r^(m-1)``

On the m-cycle, ``r`` sends position p to p+1 and ``s`` sends p to -p (positions
counted from 0 mod m), so ``r^i s`` sends p to ``i - p``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .permgroup import DegreeMismatch, OrderedSubset, Permutation, PermutationError, identity

__all__ = [
    "GroupError",
    "AsymmetricFilterError",
    "FiniteGroup",
    "GroupFunction",
    "PositionSignal",
    "SymmetricFilter",
    "symmetric_group",
    "dihedral_group",
    "cyclic_group",
    "trivial_group",
    "act",
    "narrow",
    "promote",
    "group_convolve",
    "dihedral_convolve",
    "path_convolve",
    "reverse",
    "lift_from_base_space",
    "rotation",
    "reflection",
]

MAX_SYMMETRIC_DEGREE = 7


class GroupError(ValueError):
    pass


class AsymmetricFilterError(GroupError):
    pass


def _encode(rows: np.ndarray, degree: int) -> np.ndarray:
    # mixed-radix code of 0-based image rows; exact for degree <= 15
    weights = degree ** np.arange(rows.shape[-1], dtype=np.int64)
    return rows.astype(np.int64) @ weights


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    kind: str
    size_param: int
    elements: tuple[Permutation, ...]
    table: np.ndarray = field(repr=False)
    _codes: np.ndarray = field(repr=False)
    _order: np.ndarray = field(repr=False)

    @classmethod
    def from_elements(cls, kind: str, size_param: int, elements: Sequence[Permutation]):
        elements = tuple(elements)
        if not elements:
            raise GroupError("a group needs at least the identity")
        degree = elements[0].degree
        if any(e.degree != degree for e in elements):
            raise DegreeMismatch("group elements of mixed degree")
        if not elements[0].is_identity():
            raise GroupError("identity must be element 0")
        if degree > 15:
            raise GroupError(f"degree {degree} too large for dense group tables")
        table = np.array([e.as_array() for e in elements], dtype=np.int64).reshape(
            len(elements), degree
        )
        table.setflags(write=False)
        codes = _encode(table, degree)
        if len(np.unique(codes)) != len(codes):
            raise GroupError("repeated group element")
        order = np.argsort(codes, kind="stable")
        return cls(kind, size_param, elements, table, codes, order)

    @property
    def degree(self) -> int:
        return self.table.shape[1]

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __eq__(self, other):
        if not isinstance(other, FiniteGroup):
            return NotImplemented
        return (
            self is other
            or (self.kind == other.kind and self.table.shape == other.table.shape
                and np.array_equal(self.table, other.table))
        )

    def __hash__(self):
        return hash((self.kind, self.size_param, self.table.shape))

    def index_rows(self, rows: np.ndarray) -> np.ndarray:
        """Element indices of 0-based image rows; raises if any row is not in the group."""
        codes = _encode(rows, self.degree)
        sorted_codes = self._codes[self._order]
        pos = np.searchsorted(sorted_codes, codes)
        pos = np.clip(pos, 0, len(sorted_codes) - 1)
        if not np.array_equal(sorted_codes[pos], codes):
            raise GroupError(f"permutation not in {self.kind} group")
        return self._order[pos]

    def index(self, sigma: Permutation) -> int:
        if sigma.degree != self.degree:
            raise DegreeMismatch(f"degree {sigma.degree} != group degree {self.degree}")
        return int(self.index_rows(sigma.as_array()[None, :])[0])

    def __contains__(self, sigma: Permutation) -> bool:
        try:
            self.index(sigma)
        except (GroupError, DegreeMismatch):
            return False
        return True

    @functools.cached_property
    def inverse_index(self) -> np.ndarray:
        inv = np.argsort(self.table, axis=1)
        return self.index_rows(inv)

    @functools.cached_property
    def cayley(self) -> np.ndarray:
        """``cayley[i, j]`` is the index of ``elements[i] * elements[j]``."""
        g = len(self)
        # (e_i o e_j)(p) = e_i(e_j(p))
        rows = self.table[np.arange(g)[:, None, None], self.table[None, :, :]]
        out = self.index_rows(rows.reshape(g * g, self.degree)).reshape(g, g)
        out.setflags(write=False)
        return out

    @functools.cached_property
    def quotient_table(self) -> np.ndarray:
        """``quotient_table[u, v]`` is the index of ``u * v^-1``."""
        out = self.cayley[:, self.inverse_index]
        out.setflags(write=False)
        return out

    def left_translate_index(self, sigma: Permutation) -> np.ndarray:
        """Index array ``idx`` with ``idx[i] == index(sigma^-1 * elements[i])``."""
        s_inv = np.argsort(sigma.as_array())
        return self.index_rows(s_inv[self.table])

    def is_closed(self) -> bool:
        try:
            self.cayley
            self.inverse_index
        except GroupError:
            return False
        return True


@functools.lru_cache(maxsize=None)
def symmetric_group(m: int) -> FiniteGroup:
    if not 1 <= m <= MAX_SYMMETRIC_DEGREE:
        raise GroupError(f"dense S_m tables are limited to 1 <= m <= {MAX_SYMMETRIC_DEGREE}")
    elems = [Permutation(p) for p in itertools.permutations(range(1, m + 1))]
    return FiniteGroup.from_elements("symmetric", m, elems)


def _rotation(m: int, i: int) -> Permutation:
    return Permutation(tuple(((p + i) % m) + 1 for p in range(m)))


def _reflection(m: int, i: int) -> Permutation:
    return Permutation(tuple(((i - p) % m) + 1 for p in range(m)))


@functools.lru_cache(maxsize=None)
def dihedral_group(m: int) -> FiniteGroup:
    if m < 3:
        raise GroupError("dihedral group needs m >= 3")
    elems = [_rotation(m, i) for i in range(m)] + [_reflection(m, i) for i in range(m)]
    return FiniteGroup.from_elements("dihedral", m, elems)


@functools.lru_cache(maxsize=None)
def cyclic_group(m: int) -> FiniteGroup:
    if m < 1:
        raise GroupError("cyclic group needs m >= 1")
    return FiniteGroup.from_elements("cyclic", m, [_rotation(m, i) for i in range(m)])


@functools.lru_cache(maxsize=None)
def trivial_group(degree: int = 1) -> FiniteGroup:
    return FiniteGroup.from_elements("trivial", degree, [identity(degree)])


def _as_table(values, rows: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise GroupError(f"expected a 2-d table, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise GroupError(f"table has {arr.shape[0]} rows, expected {rows}")
    if arr.shape[1] < 1:
        raise GroupError("need at least one channel")
    if not np.all(np.isfinite(arr)):
        raise GroupError("non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GroupFunction:
    group: FiniteGroup
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_table(self.values, len(self.group)))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __call__(self, sigma: Permutation) -> np.ndarray:
        return self.values[self.group.index(sigma)]

    def __add__(self, other: "GroupFunction") -> "GroupFunction":
        if other.group != self.group:
            raise GroupError("group mismatch")
        return GroupFunction(self.group, self.values + other.values)

    def scale(self, c: float) -> "GroupFunction":
        return GroupFunction(self.group, self.values * c)

    @classmethod
    def constant(cls, group: FiniteGroup, value) -> "GroupFunction":
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(group, np.tile(value, (len(group), 1)))

    @classmethod
    def zeros(cls, group: FiniteGroup, channels: int = 1) -> "GroupFunction":
        return cls(group, np.zeros((len(group), channels)))


@dataclass(frozen=True, eq=False)
class PositionSignal:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_table(self.values))

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "PositionSignal") -> "PositionSignal":
        if other.values.shape != self.values.shape:
            raise GroupError("shape mismatch")
        return PositionSignal(self.values + other.values)


def act(sigma: Permutation, f: GroupFunction) -> GroupFunction:
    """Left translation: ``act(sigma, f)(pi) == f(sigma^-1 pi)``."""
    if sigma.degree != f.group.degree:
        raise DegreeMismatch(f"degree {sigma.degree} != group degree {f.group.degree}")
    return GroupFunction(f.group, f.values[f.group.left_translate_index(sigma)])


@functools.lru_cache(maxsize=256)
def _restriction_index(m: int, indices: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """For every element of S_m: membership in S_m|D and the index of its restriction in S_k."""
    big = symmetric_group(m)
    k = len(indices)
    where = np.full(m, -1, dtype=np.int64)
    for q, i in enumerate(indices):
        where[i - 1] = q
    head = where[big.table[:, :k]]
    member = np.all(head >= 0, axis=1)
    omega = np.full(len(big), -1, dtype=np.int64)
    if k == 0:
        omega[member] = 0
    else:
        omega[member] = symmetric_group(k).index_rows(head[member])
    member.setflags(write=False)
    omega.setflags(write=False)
    return member, omega


def _check_symmetric(f: GroupFunction, what: str) -> int:
    if f.group.kind != "symmetric":
        raise GroupError(f"{what} is defined for functions on a symmetric group")
    return f.group.size_param


def narrow(f: GroupFunction, domain: OrderedSubset) -> GroupFunction:
    """Average of f over every tau whose restriction to ``domain`` is omega."""
    m = _check_symmetric(f, "narrowing")
    if domain.ambient_degree != m:
        raise DegreeMismatch(f"domain lives in S_{domain.ambient_degree}, f on S_{m}")
    k = domain.size
    if k == 0:
        raise GroupError("cannot narrow to an empty domain")
    member, omega = _restriction_index(m, domain.indices)
    out = np.zeros((math.factorial(k), f.channels))
    np.add.at(out, omega[member], f.values[member])
    out /= math.factorial(m - k)
    return GroupFunction(symmetric_group(k), out)


def promote(g: GroupFunction, domain: OrderedSubset, m: int) -> GroupFunction:
    """Zero-filled extension of g from S_k to S_m through ``domain``."""
    k = _check_symmetric(g, "promotion")
    if domain.size != k:
        raise GroupError(f"domain of size {domain.size} cannot carry a function on S_{k}")
    if domain.ambient_degree != m:
        raise DegreeMismatch(f"domain lives in S_{domain.ambient_degree}, target S_{m}")
    member, omega = _restriction_index(m, domain.indices)
    out = np.zeros((math.factorial(m), g.channels))
    out[member] = g.values[omega[member]]
    return GroupFunction(symmetric_group(m), out)


def _channel_split(f: GroupFunction, w: GroupFunction) -> tuple[int, int]:
    if w.group != f.group:
        raise GroupError("filter and signal live on different groups")
    d_in = f.channels
    if w.channels % d_in:
        raise GroupError(f"filter channels {w.channels} not a multiple of input channels {d_in}")
    return d_in, w.channels // d_in


def group_convolve(f: GroupFunction, w: GroupFunction) -> GroupFunction:
    """``(f * w)(u) = sum_v f(u v^-1) W(v)`` with W(v) a d_in x d_out channel mix."""
    d_in, d_out = _channel_split(f, w)
    g = len(f.group)
    q = f.group.quotient_table
    gathered = f.values[q].reshape(g, g * d_in)
    out = gathered @ w.values.reshape(g * d_in, d_out)
    return GroupFunction(f.group, out)


def dihedral_convolve(f: GroupFunction, w: GroupFunction) -> GroupFunction:
    """Convolution on D_m written out as rotation and reflection sums.

    Rows i < m hold r^i and rows m + i hold r^i s.
    """
    if f.group.kind != "dihedral":
        raise GroupError("dihedral_convolve needs functions on a dihedral group")
    d_in, d_out = _channel_split(f, w)
    m = f.group.size_param
    fv = f.values
    wv = w.values.reshape(2 * m, d_in, d_out)
    out = np.zeros((2 * m, d_out))
    for i in range(m):
        rot = np.zeros(d_out)
        for j in range(m):
            rot = rot + fv[(i - j) % m] @ wv[j]
        ref = np.zeros(d_out)
        for j in range(m):
            ref = ref + fv[m + (i + j) % m] @ wv[m + j]
        out[i] = rot + ref
        rot = np.zeros(d_out)
        for j in range(m):
            rot = rot + fv[(i - j) % m] @ wv[m + j]
        ref = np.zeros(d_out)
        for j in range(m):
            ref = ref + fv[m + (j + i) % m] @ wv[j]
        out[m + i] = rot + ref
    return GroupFunction(f.group, out)


@dataclass(frozen=True, eq=False)
class SymmetricFilter:
    """Taps w(0..h); w(-j) is w(j) by construction.

    Taps are scalars (shape ``(h+1,)``, applied per channel) or channel-mixing
    matrices (shape ``(h+1, d_in, d_out)``).
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim not in (1, 3) or taps.shape[0] < 1:
            raise GroupError(f"bad tap shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise GroupError("non-finite taps")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def half_width(self) -> int:
        return self.taps.shape[0] - 1

    @classmethod
    def from_full(cls, full) -> "SymmetricFilter":
        """Build from taps listed for j = -h..h; rejects w(j) != w(-j)."""
        full = np.asarray(full, dtype=np.float64)
        if full.shape[0] % 2 != 1:
            raise AsymmetricFilterError("a symmetric filter has an odd number of taps")
        if not np.array_equal(full, full[::-1]):
            raise AsymmetricFilterError("filter taps are not symmetric: w(j) != w(-j)")
        h = full.shape[0] // 2
        return cls(full[h:])

    def full(self) -> np.ndarray:
        return np.concatenate([self.taps[:0:-1], self.taps])


def path_convolve(f: PositionSignal, w: SymmetricFilter) -> PositionSignal:
    """``out(u) = sum_{j=-h..h} f(u-j) w(j)`` with zero padding outside the path."""
    k, h = f.length, w.half_width
    taps = w.taps
    mixing = taps.ndim == 3
    if mixing and taps.shape[1] != f.channels:
        raise GroupError(f"filter expects {taps.shape[1]} channels, signal has {f.channels}")
    d_out = taps.shape[2] if mixing else f.channels
    out = np.zeros((k, d_out))
    for u in range(k):
        for j in range(-h, h + 1):
            src = u - j
            if 0 <= src < k:
                tap = taps[abs(j)]
                out[u] += f.values[src] @ tap if mixing else f.values[src] * tap
    return PositionSignal(out)


def reverse(f: PositionSignal) -> PositionSignal:
    return PositionSignal(f.values[::-1])


def lift_from_base_space(edge_values, origin_pair: tuple[int, int] = (1, 2)) -> GroupFunction:
    """Function on S_n from pair values: ``f(g) = M[g(x0), g(y0)]`` for origin pair (x0, y0).

    ``edge_values`` is an n x n (or n x n x d) array; zero entries mark non-edges.
    """
    vals = np.asarray(edge_values, dtype=np.float64)
    if vals.ndim == 2:
        vals = vals[:, :, None]
    n = vals.shape[0]
    if vals.shape[1] != n:
        raise GroupError("edge values must be square")
    if n > MAX_SYMMETRIC_DEGREE:
        raise GroupError(f"n = {n} exceeds the dense S_n cap of {MAX_SYMMETRIC_DEGREE}")
    x0, y0 = origin_pair
    if not (1 <= x0 <= n and 1 <= y0 <= n and x0 != y0):
        raise PermutationError(f"bad origin pair {origin_pair}")
    group = symmetric_group(n)
    t = group.table
    return GroupFunction(group, vals[t[:, x0 - 1], t[:, y0 - 1]])


def rotation(m: int, i: int = 1) -> Permutation:
    return _rotation(m, i % m)


def reflection(m: int, i: int = 0) -> Permutation:
    return _reflection(m, i % m)
