"""Labeled graphs, the vertex-renumbering action, and subgraph enumeration.

Vertices are numbered 1..n. Path and cycle lengths count vertices, not edges.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable

from .groupfn import FiniteGroup
from .permgroup import OrderedSubset, Permutation

__all__ = [
    "GraphError",
    "LabeledGraph",
    "SubgraphInstance",
    "permute_graph",
    "enumerate_paths",
    "enumerate_cycles",
    "enumerate_stars",
    "enumerate_vertices",
    "automorphism_group",
    "intersect_domains",
    "induced_subgraph",
    "disjoint_union",
    "instance_graph",
    "count_undirected",
]

MAX_AUTOMORPHISM_VERTICES = 8


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledGraph:
    n: int
    vertex_labels: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise GraphError("negative vertex count")
        labels = tuple(int(x) for x in self.vertex_labels)
        if len(labels) != n:
            raise GraphError(f"{len(labels)} vertex labels for {n} vertices")
        if any(x < 0 for x in labels):
            raise GraphError("vertex labels must be non-negative")
        seen = set()
        clean = []
        for e in self.edges:
            u, v, lab = (int(e[0]), int(e[1]), int(e[2]) if len(e) > 2 else 0)
            if not (1 <= u <= n and 1 <= v <= n):
                raise GraphError(f"edge ({u}, {v}) has an endpoint outside 1..{n}")
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if lab < 0:
                raise GraphError(f"edge ({u}, {v}) has a negative label")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            clean.append((key[0], key[1], lab))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "vertex_labels", labels)
        object.__setattr__(self, "edges", tuple(sorted(clean)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, vertex_labels: Iterable[int] | None = None):
        labels = tuple(vertex_labels) if vertex_labels is not None else (0,) * n
        return cls(n, labels, tuple(tuple(e) for e in edges))

    @functools.cached_property
    def _adjacency(self) -> tuple[dict[int, int], ...]:
        adj: list[dict[int, int]] = [dict() for _ in range(self.n + 1)]
        for u, v, lab in self.edges:
            adj[u][v] = lab
            adj[v][u] = lab
        return tuple(adj)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return tuple(sorted(self._adjacency[v]))

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adjacency[u]

    def edge_label(self, u: int, v: int) -> int:
        try:
            return self._adjacency[u][v]
        except KeyError:
            raise GraphError(f"no edge ({u}, {v})") from None

    def degree(self, v: int) -> int:
        return len(self._adjacency[v])

    @property
    def edge_count(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class SubgraphInstance:
    """A reference domain: the ordered traversal of a path, cycle, star or single vertex."""

    kind: str
    traversal: tuple[int, ...]
    host: LabeledGraph = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.traversal)

    @property
    def key(self) -> tuple[str, int]:
        return (self.kind, self.size)

    def domain(self) -> OrderedSubset:
        return OrderedSubset(self.traversal, self.host.n)

    def position(self, vertex: int) -> int:
        """0-based position of ``vertex`` in the traversal."""
        try:
            return self.traversal.index(vertex)
        except ValueError:
            raise GraphError(f"vertex {vertex} not in {self.kind} {self.traversal}") from None


def permute_graph(g: LabeledGraph, sigma: Permutation) -> LabeledGraph:
    """Renumber vertex i as sigma(i); labels and edges travel with their vertices."""
    if sigma.degree != g.n:
        raise GraphError(f"permutation of degree {sigma.degree} on a graph with {g.n} vertices")
    labels = [0] * g.n
    for i, lab in enumerate(g.vertex_labels, start=1):
        labels[sigma(i) - 1] = lab
    edges = tuple((sigma(u), sigma(v), lab) for u, v, lab in g.edges)
    return LabeledGraph(g.n, tuple(labels), edges)


def enumerate_paths(g: LabeledGraph, min_len: int, max_len: int) -> list[SubgraphInstance]:
    """Every simple path with min_len..max_len vertices, once per traversal direction."""
    if not 2 <= min_len <= max_len:
        raise GraphError(f"need 2 <= min_len <= max_len, got {min_len}, {max_len}")
    found: list[tuple[int, ...]] = []
    adj = g._adjacency

    def extend(path: list[int], on_path: set[int]):
        if len(path) >= min_len:
            found.append(tuple(path))
        if len(path) == max_len:
            return
        for w in sorted(adj[path[-1]]):
            if w not in on_path:
                path.append(w)
                on_path.add(w)
                extend(path, on_path)
                on_path.discard(w)
                path.pop()

    for s in range(1, g.n + 1):
        extend([s], {s})
    found.sort()
    return [SubgraphInstance("path", t, g) for t in found]


def enumerate_cycles(g: LabeledGraph, lengths: Iterable[int]) -> list[SubgraphInstance]:
    """Every simple cycle of the requested sizes, twice (both rotation directions).

    Traversals start at the cycle's smallest vertex.
    """
    lengths = sorted(set(int(x) for x in lengths))
    if any(x < 3 for x in lengths):
        raise GraphError("cycle lengths must be at least 3")
    if not lengths:
        return []
    longest = lengths[-1]
    wanted = set(lengths)
    adj = g._adjacency
    found: list[tuple[int, ...]] = []

    def extend(path: list[int], on_path: set[int]):
        start = path[0]
        if len(path) in wanted and start in adj[path[-1]] and len(path) >= 3:
            found.append(tuple(path))
        if len(path) == longest:
            return
        for w in sorted(adj[path[-1]]):
            if w > start and w not in on_path:
                path.append(w)
                on_path.add(w)
                extend(path, on_path)
                on_path.discard(w)
                path.pop()

    for s in range(1, g.n + 1):
        extend([s], {s})
    found.sort()
    return [SubgraphInstance("cycle", t, g) for t in found]


def enumerate_stars(g: LabeledGraph) -> list[SubgraphInstance]:
    """One star per vertex: the center followed by its neighbors in ascending order."""
    return [SubgraphInstance("star", (v,) + g.neighbors(v), g) for v in range(1, g.n + 1)]


def enumerate_vertices(g: LabeledGraph) -> list[SubgraphInstance]:
    return [SubgraphInstance("vertex", (v,), g) for v in range(1, g.n + 1)]


def automorphism_group(g: LabeledGraph) -> FiniteGroup:
    """All label- and adjacency-preserving permutations, by backtracking search."""
    n = g.n
    if n > MAX_AUTOMORPHISM_VERTICES:
        raise GraphError(
            f"automorphism search is limited to {MAX_AUTOMORPHISM_VERTICES} vertices, got {n}"
        )
    if n == 0:
        raise GraphError("empty graph has no permutation group")
    adj = g._adjacency
    labels = g.vertex_labels
    image = [0] * (n + 1)
    used = [False] * (n + 1)
    found: list[Permutation] = []

    def assign(v: int):
        if v > n:
            found.append(Permutation(tuple(image[1:])))
            return
        for w in range(1, n + 1):
            if used[w] or labels[w - 1] != labels[v - 1] or len(adj[w]) != len(adj[v]):
                continue
            ok = True
            for u in range(1, v):
                lab = adj[v].get(u)
                if lab != adj[w].get(image[u]):
                    ok = False
                    break
            if ok:
                image[v] = w
                used[w] = True
                assign(v + 1)
                used[w] = False

    assign(1)
    found.sort(key=lambda p: p.images)
    return FiniteGroup.from_elements("automorphism", n, found)


def intersect_domains(a: SubgraphInstance, b: SubgraphInstance) -> OrderedSubset:
    """Vertices shared by both traversals, in the order they appear in ``a``."""
    if a.host is not b.host and a.host != b.host:
        raise GraphError("instances belong to different host graphs")
    other = set(b.traversal)
    return OrderedSubset(tuple(v for v in a.traversal if v in other), a.host.n)


def induced_subgraph(g: LabeledGraph, vertices: tuple[int, ...]) -> LabeledGraph:
    """Subgraph on ``vertices``, renumbered 1..k in the given order."""
    where = {v: i for i, v in enumerate(vertices, start=1)}
    edges = [
        (where[u], where[v], lab) for u, v, lab in g.edges if u in where and v in where
    ]
    labels = [g.vertex_labels[v - 1] for v in vertices]
    return LabeledGraph(len(vertices), tuple(labels), tuple(edges))


def instance_graph(inst: SubgraphInstance) -> LabeledGraph:
    """The path or cycle itself (not the induced subgraph), numbered by traversal position."""
    g = inst.host
    t = inst.traversal
    k = len(t)
    labels = [g.vertex_labels[v - 1] for v in t]
    if inst.kind == "path":
        pairs = [(i, i + 1) for i in range(1, k)]
    elif inst.kind == "cycle":
        pairs = [(i, i % k + 1) for i in range(1, k + 1)]
    elif inst.kind == "star":
        pairs = [(1, i) for i in range(2, k + 1)]
    else:
        pairs = []
    edges = [(i, j, g.edge_label(t[i - 1], t[j - 1])) for i, j in pairs]
    return LabeledGraph(k, tuple(labels), tuple(edges))


def disjoint_union(a: LabeledGraph, b: LabeledGraph) -> LabeledGraph:
    """``b`` placed after ``a`` with its vertices shifted by a.n."""
    edges = a.edges + tuple((u + a.n, v + a.n, lab) for u, v, lab in b.edges)
    return LabeledGraph(a.n + b.n, a.vertex_labels + b.vertex_labels, edges)


def count_undirected(instances: list[SubgraphInstance]) -> int:
    """Number of distinct undirected paths/cycles among direction-doubled instances."""
    keys = set()
    for inst in instances:
        t = inst.traversal
        if inst.kind == "cycle":
            keys.add(min(t, (t[0],) + t[:0:-1]))
        else:
            keys.add(min(t, t[::-1]))
    return len(keys)
