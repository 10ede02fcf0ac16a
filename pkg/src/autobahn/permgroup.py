"""Exact permutation algebra in one-line notation.

A permutation of degree m is stored as the tuple ``(s(1), ..., s(m))`` with
1-based entries. Composition follows ``compose(a, b)(p) == a(b(p))``: the right
operand is applied first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PermutationError",
    "DegreeMismatch",
    "MembershipError",
    "CosetMismatch",
    "Permutation",
    "OrderedSubset",
    "CosetDecomposition",
    "identity",
    "compose",
    "inverse",
    "restrict",
    "is_member",
    "embed_front",
    "embed_back",
    "canonical_representative",
    "coset_decompose",
    "random_permutation",
    "induced_on",
    "all_permutations",
    "members",
    "coset_size",
]


class PermutationError(ValueError):
    pass


class DegreeMismatch(PermutationError):
    pass


class MembershipError(PermutationError):
    """Raised when a permutation does not send {1..k} into a domain's index set."""


class CosetMismatch(PermutationError):
    pass


@dataclass(frozen=True)
class Permutation:
    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(x) for x in self.images)
        if sorted(images) != list(range(1, len(images) + 1)):
            raise PermutationError(f"not a bijection of 1..{len(images)}: {images}")
        object.__setattr__(self, "images", images)

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, p: int) -> int:
        return self.images[p - 1]

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def __mul__(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def is_identity(self) -> bool:
        return all(x == i for i, x in enumerate(self.images, start=1))

    def as_array(self) -> np.ndarray:
        """0-based image array, handy for fancy indexing."""
        return np.asarray(self.images, dtype=np.int64) - 1

    def __repr__(self) -> str:
        return f"Permutation({self.images})"


@dataclass(frozen=True)
class OrderedSubset:
    indices: tuple[int, ...]
    ambient_degree: int

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        m = int(self.ambient_degree)
        if len(set(indices)) != len(indices):
            raise PermutationError(f"repeated index in ordered subset {indices}")
        if any(i < 1 or i > m for i in indices):
            raise PermutationError(f"index out of range 1..{m} in {indices}")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "ambient_degree", m)

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def position(self, index: int) -> int:
        """1-based position q with indices[q-1] == index."""
        return self.indices.index(index) + 1


@dataclass(frozen=True)
class CosetDecomposition:
    """``a == representative * embed_front(inner) * embed_back(outer)``."""

    representative: Permutation
    inner: Permutation
    outer: Permutation

    def reconstruct(self) -> Permutation:
        n = self.representative.degree
        return compose(
            self.representative,
            compose(embed_front(self.inner, n), embed_back(self.outer, n)),
        )


def identity(m: int) -> Permutation:
    return Permutation(tuple(range(1, m + 1)))


def compose(a: Permutation, b: Permutation) -> Permutation:
    if a.degree != b.degree:
        raise DegreeMismatch(f"cannot compose degrees {a.degree} and {b.degree}")
    ai = a.images
    return Permutation(tuple(ai[q - 1] for q in b.images))


def inverse(a: Permutation) -> Permutation:
    out = [0] * a.degree
    for p, q in enumerate(a.images, start=1):
        out[q - 1] = p
    return Permutation(tuple(out))


def is_member(sigma: Permutation, domain: OrderedSubset) -> bool:
    """True when sigma sends {1..k} into the unordered index set of ``domain``."""
    if sigma.degree != domain.ambient_degree:
        return False
    target = set(domain.indices)
    return all(sigma(j) in target for j in range(1, domain.size + 1))


def restrict(sigma: Permutation, domain: OrderedSubset) -> Permutation:
    """The restricted permutation: ``result(p) == q`` iff ``sigma(p) == i_q``."""
    if sigma.degree != domain.ambient_degree:
        raise DegreeMismatch(
            f"permutation degree {sigma.degree} != ambient degree {domain.ambient_degree}"
        )
    where = {i: q for q, i in enumerate(domain.indices, start=1)}
    try:
        return Permutation(tuple(where[sigma(p)] for p in range(1, domain.size + 1)))
    except KeyError:
        raise MembershipError(
            f"{sigma} does not send 1..{domain.size} into {set(domain.indices)}"
        ) from None


def embed_front(mu: Permutation, n: int) -> Permutation:
    """Act with ``mu`` on 1..m and fix m+1..n."""
    if n < mu.degree:
        raise DegreeMismatch(f"cannot embed degree {mu.degree} into {n}")
    return Permutation(mu.images + tuple(range(mu.degree + 1, n + 1)))


def embed_back(mu: Permutation, n: int) -> Permutation:
    """Act with ``mu`` on the last m positions and fix 1..n-m."""
    m = mu.degree
    if n < m:
        raise DegreeMismatch(f"cannot embed degree {m} into {n}")
    off = n - m
    return Permutation(tuple(range(1, off + 1)) + tuple(q + off for q in mu.images))


def canonical_representative(domain: OrderedSubset) -> Permutation:
    """Deterministic t with t(p) = i_p for p <= k; the complement follows in ascending order."""
    chosen = set(domain.indices)
    rest = [i for i in range(1, domain.ambient_degree + 1) if i not in chosen]
    return Permutation(domain.indices + tuple(rest))


def coset_decompose(a: Permutation, t: Permutation, k: int) -> CosetDecomposition:
    """Factor ``a = t * embed_front(u) * embed_back(v)`` for the given representative t."""
    if a.degree != t.degree:
        raise DegreeMismatch(f"degrees {a.degree} and {t.degree} differ")
    n = a.degree
    if not 0 <= k <= n:
        raise PermutationError(f"split size {k} outside 0..{n}")
    if set(a.images[:k]) != set(t.images[:k]):
        raise CosetMismatch(
            f"{a} and {t} send 1..{k} to different sets "
            f"{sorted(a.images[:k])} vs {sorted(t.images[:k])}"
        )
    x = compose(inverse(t), a)
    u = Permutation(x.images[:k])
    v = Permutation(tuple(q - k for q in x.images[k:]))
    return CosetDecomposition(representative=t, inner=u, outer=v)


def induced_on(sigma: Permutation, domain: OrderedSubset) -> Permutation:
    """Permutation of positions induced by a sigma that maps the domain's set onto itself.

    ``result(p) == q`` iff ``sigma(i_p) == i_q``.
    """
    if sigma.degree != domain.ambient_degree:
        raise DegreeMismatch(
            f"permutation degree {sigma.degree} != ambient degree {domain.ambient_degree}"
        )
    where = {i: q for q, i in enumerate(domain.indices, start=1)}
    try:
        return Permutation(tuple(where[sigma(i)] for i in domain.indices))
    except KeyError:
        raise MembershipError(f"{sigma} does not preserve {set(domain.indices)}") from None


def random_permutation(rng: np.random.Generator, m: int) -> Permutation:
    return Permutation(tuple(int(x) + 1 for x in rng.permutation(m)))


def all_permutations(m: int) -> Iterable[Permutation]:
    """All of S_m in lexicographic one-line order."""
    import itertools

    for p in itertools.permutations(range(1, m + 1)):
        yield Permutation(p)


def members(domain: OrderedSubset) -> list[Permutation]:
    """Exhaustive listing of S_m restricted to ``domain``; used by tests on tiny m."""
    return [s for s in all_permutations(domain.ambient_degree) if is_member(s, domain)]


def coset_size(m: int, k: int) -> int:
    return math.factorial(k) * math.factorial(m - k)


def from_sequence(seq: Sequence[int]) -> Permutation:
    return Permutation(tuple(seq))
