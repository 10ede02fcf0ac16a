"""Random graphs, the synthetic cycle-counting task, and the verification harnesses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TOLERANCES
from .graphcore import (
    LabeledGraph,
    count_undirected,
    enumerate_cycles,
    permute_graph,
)
from .groupfn import GroupFunction, PositionSignal, act, rotation
from .layers import apply_symmetry, block_forward
from .model import (
    ModelConfig,
    block_weights,
    gcn_reference_forward,
    init_params,
    predict,
    reference_forward,
    star_autobahn_forward,
)
from .permgroup import Permutation, identity, random_permutation

__all__ = [
    "random_molecule",
    "random_graph",
    "count_six_cycles",
    "make_cycle_dataset",
    "trial_rngs",
    "EquivarianceReport",
    "check_equivariance",
    "asymmetric_skew",
    "GcnReport",
    "gcn_oracle",
]


def random_molecule(
    rng: np.random.Generator,
    n: int,
    *,
    atom_types: int = 4,
    bond_types: int = 3,
    max_degree: int = 3,
    closures: int | None = None,
) -> LabeledGraph:
    """A sparse molecule-like graph: a random tree plus a few ring closures.

    Closures preferentially join vertices four or five tree-steps apart, which
    makes five- and six-membered rings common.
    """
    if n <= 0:
        return LabeledGraph(0, (), ())
    adj = {v: set() for v in range(1, n + 1)}
    for v in range(2, n + 1):
        options = [u for u in range(1, v) if len(adj[u]) < max_degree - 1] or list(range(1, v))
        u = int(options[rng.integers(len(options))])
        adj[u].add(v)
        adj[v].add(u)
    if closures is None:
        closures = int(rng.integers(0, max(1, n // 4) + 1))
    for _ in range(closures):
        dist = _tree_distances(adj, n)
        ring = [
            (a, b)
            for a in range(1, n + 1)
            for b in range(a + 1, n + 1)
            if dist[a][b] in (4, 5) and len(adj[a]) < max_degree and len(adj[b]) < max_degree
        ]
        if not ring:
            break
        a, b = ring[int(rng.integers(len(ring)))]
        adj[a].add(b)
        adj[b].add(a)
    labels = tuple(int(x) for x in rng.integers(0, atom_types, size=n))
    edges = []
    for a in range(1, n + 1):
        for b in sorted(adj[a]):
            if a < b:
                edges.append((a, b, int(rng.integers(0, bond_types))))
    return LabeledGraph(n, labels, tuple(edges))


def _tree_distances(adj, n):
    dist = {}
    for s in range(1, n + 1):
        d = {s: 0}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if w not in d:
                        d[w] = d[u] + 1
                        nxt.append(w)
            frontier = nxt
        dist[s] = {v: d.get(v, -1) for v in range(1, n + 1)}
    return dist


def random_graph(rng: np.random.Generator, n: int, p: float = 0.3, labels: int = 1) -> LabeledGraph:
    """Erdos-Renyi G(n, p) with uniform random vertex labels."""
    edges = [
        (a, b, 0) for a in range(1, n + 1) for b in range(a + 1, n + 1) if rng.random() < p
    ]
    vl = tuple(int(x) for x in rng.integers(0, labels, size=n))
    return LabeledGraph(n, vl, tuple(edges))


def count_six_cycles(g: LabeledGraph) -> int:
    return count_undirected(enumerate_cycles(g, [6]))


def make_cycle_dataset(
    rng: np.random.Generator,
    count: int = 500,
    *,
    min_vertices: int = 6,
    max_vertices: int = 14,
    atom_types: int = 4,
    bond_types: int = 3,
) -> list[tuple[LabeledGraph, float]]:
    """Random molecules labelled with their number of simple 6-cycles."""
    out = []
    for _ in range(count):
        n = int(rng.integers(min_vertices, max_vertices + 1))
        g = random_molecule(rng, n, atom_types=atom_types, bond_types=bond_types)
        out.append((g, float(count_six_cycles(g))))
    return out


def trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    """Independent per-trial streams split from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


STAGES = ("phi", "t1", "t2", "t3", "t4", "t4_internal", "implementation")


@dataclass
class EquivarianceTrial:
    index: int
    n: int
    sigma: tuple[int, ...]
    phi: float
    phi_permuted: float
    residuals: dict[str, float]

    def passed(self, tol: float) -> bool:
        return all(r < tol for r in self.residuals.values())


@dataclass
class EquivarianceReport:
    trials: list[EquivarianceTrial]
    tolerance: float = TOLERANCES["equivariance"]

    def max_residual(self, stage: str) -> float:
        return max((t.residuals[stage] for t in self.trials), default=0.0)

    @property
    def passed(self) -> bool:
        return all(t.passed(self.tolerance) for t in self.trials)

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "max_residuals": {s: self.max_residual(s) for s in STAGES},
            "trials": [
                {
                    "index": t.index,
                    "n": t.n,
                    "sigma": list(t.sigma),
                    "phi": t.phi,
                    "phi_permuted": t.phi_permuted,
                    "residuals": t.residuals,
                    "passed": t.passed(self.tolerance),
                }
                for t in self.trials
            ],
        }


def asymmetric_skew(config: ModelConfig, rng: np.random.Generator, scale: float = 0.1) -> dict:
    """Negative control: perturb the negative-side taps of every path filter."""
    h, c = config.path_half_width, config.channels
    out = {}
    if h == 0:
        return out
    for layer in range(config.layer_count):
        for k in config.path_lengths:
            for conv in ("conv1", "conv2"):
                out[f"layer{layer}.path{k}.{conv}"] = rng.uniform(-scale, scale, size=(h, c, c))
    return out


def _map_ident(ident, sigma: Permutation):
    """The corresponding neuron in the permuted network, and the domain symmetry relating them."""
    kind, trav = ident
    st = tuple(sigma(v) for v in trav)
    if kind == "cycle":
        a = st.index(min(st))
        return (kind, st[a:] + st[:a]), rotation(len(st), -a)
    if kind == "star":
        return (kind, (st[0],) + tuple(sorted(st[1:]))), None
    return (kind, st), None


def _moved(x, elem):
    if elem is None or not isinstance(x, GroupFunction):
        return x
    return act(elem, x)


def _flat(x) -> np.ndarray:
    if isinstance(x, (GroupFunction, PositionSignal)):
        return x.values
    if isinstance(x, tuple):
        vec, mass = x
        return np.concatenate([np.ravel(vec), [float(mass)]])
    return np.asarray(x, dtype=np.float64)


def _gap(a, b) -> float:
    fa, fb = _flat(a), _flat(b)
    if fa.shape != fb.shape:
        return float("inf")
    return float(np.max(np.abs(fa - fb))) if fa.size else 0.0


def _map_inputs(entries: dict, sigma: Permutation) -> dict:
    return {("self" if k == "self" else _map_ident(k, sigma)[0]): v for k, v in entries.items()}


def compare_traces(ta: dict, tb: dict, sigma: Permutation) -> dict[str, float]:
    """Per-stage residuals between corresponding neurons of the two networks."""
    res = {s: 0.0 for s in ("t1", "t2", "t3", "t4")}
    keys_b = {k for k in tb if k != "pooled"}
    seen = set()
    for key, rec in ta.items():
        if key == "pooled":
            continue
        layer, ident = key
        ident_b, elem = _map_ident(ident, sigma)
        kb = (layer, ident_b)
        seen.add(kb)
        if kb not in tb:
            for s in res:
                res[s] = float("inf")
            continue
        rb = tb[kb]
        for stage in ("t1", "t2"):
            mapped = _map_inputs(rec[stage], sigma)
            if set(mapped) != set(rb[stage]):
                res[stage] = float("inf")
                continue
            for src, val in mapped.items():
                res[stage] = max(res[stage], _gap(_moved(val, elem), rb[stage][src]))
        for stage in ("t3", "t4"):
            res[stage] = max(res[stage], _gap(_moved(rec[stage], elem), rb[stage]))
    if seen != keys_b:
        for s in res:
            res[s] = float("inf")
    return res


def internal_symmetry_residual(trace: dict, params, config: ModelConfig, skew=None) -> float:
    """How far each T4 block is from commuting with its own domain's symmetries."""
    worst = 0.0
    for key, rec in trace.items():
        if key == "pooled":
            continue
        spec = rec["spec"]
        if spec.kind not in ("path", "cycle"):
            continue
        layer = key[0]
        w = block_weights(params, config, layer, spec.kind, spec.size, skew)
        f = rec["t3"]
        base = block_forward(spec, f, w)
        for gamma in spec.symmetry.elements[1:]:
            lhs = block_forward(spec, apply_symmetry(spec, gamma, f), w)
            rhs = apply_symmetry(spec, gamma, base)
            worst = max(worst, _gap(lhs, rhs))
    return worst


def _config_for(g: LabeledGraph, channels: int, use_star: bool) -> ModelConfig:
    atoms = max(g.vertex_labels, default=0) + 1
    bonds = max((lab for _, _, lab in g.edges), default=0) + 1
    return ModelConfig(
        channels=channels,
        readout_hidden=channels,
        atom_types=max(atoms, 4),
        bond_types=max(bonds, 3),
        use_star_layer=use_star,
    )


def check_equivariance(
    graphs: Sequence[LabeledGraph] | None = None,
    *,
    trials: int = 100,
    seed: int = 0,
    max_vertices: int = 12,
    channels: int = 8,
    identity_only: bool = False,
    sabotage: bool = False,
) -> EquivarianceReport:
    """Random weights and a random relabeling per trial; compare the two networks stage by stage.

    Odd-numbered trials also run the per-vertex star pathway. ``sabotage``
    installs asymmetric path filters, which must make the report fail.
    """
    out = []
    for i, rng in enumerate(trial_rngs(seed, trials)):
        if graphs:
            g = graphs[i % len(graphs)]
        else:
            g = random_molecule(rng, int(rng.integers(1, max_vertices + 1)))
        cfg = _config_for(g, channels, use_star=(i % 2 == 1))
        params = init_params(cfg, rng)
        for name in params:
            leaf = name.rsplit(".", 1)[-1]
            if leaf.startswith("b") or leaf.endswith("_b"):
                params[name] = rng.uniform(-0.5, 0.5, size=params[name].shape)
        skew = asymmetric_skew(cfg, rng) if sabotage else None
        sigma = identity(g.n) if identity_only else random_permutation(rng, g.n)
        gp = permute_graph(g, sigma)
        ta, tb = {}, {}
        align = int(rng.integers(2**32))
        ra = reference_forward(params, g, cfg, skew=skew, alignment_seed=align, trace=ta)
        rb = reference_forward(params, gp, cfg, skew=skew, alignment_seed=align, trace=tb)
        (va,) = predict(params, [g], cfg, skew=skew)
        (vb,) = predict(params, [gp], cfg, skew=skew)
        residuals = {"phi": max(abs(va - vb), abs(ra - rb))}
        residuals.update(compare_traces(ta, tb, sigma))
        residuals["t4_internal"] = internal_symmetry_residual(ta, params, cfg, skew)
        residuals["implementation"] = max(abs(ra - va), abs(rb - vb))
        residuals = {k: float(v) for k, v in residuals.items()}
        out.append(EquivarianceTrial(i, g.n, sigma.images, float(va), float(vb), residuals))
    return EquivarianceReport(out)


@dataclass
class GcnReport:
    trials: list[dict]
    tolerance: float = TOLERANCES["oracle"]

    @property
    def max_deviation(self) -> float:
        return max((t["deviation"] for t in self.trials), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "max_deviation": self.max_deviation,
            "trials": self.trials,
        }


P3 = LabeledGraph(3, (0, 0, 0), ((1, 2, 0), (2, 3, 0)))


def gcn_oracle(
    *,
    trials: int = 30,
    seed: int = 0,
    max_vertices: int = 10,
    layers: int = 3,
    channels: int = 4,
    perturb: bool = False,
) -> GcnReport:
    """Star-neuron network against plain message passing. Trial 0 is the path 1-2-3.

    ``perturb`` nudges the star network's weights, which must make the report fail.
    """
    out = []
    for i, rng in enumerate(trial_rngs(seed, trials)):
        if i == 0:
            g = P3
        else:
            g = random_graph(rng, int(rng.integers(1, max_vertices + 1)), p=float(rng.uniform(0.1, 0.6)))
        h0 = rng.normal(size=(g.n, channels))
        weights = [rng.normal(size=(channels, channels)) / np.sqrt(channels) for _ in range(layers)]
        expected = gcn_reference_forward(g, h0, weights)
        used = [w + 0.05 for w in weights] if perturb else weights
        got = star_autobahn_forward(g, h0, used)
        dev = float(np.max(np.abs(got - expected))) if g.n else 0.0
        out.append({"index": i, "n": g.n, "edges": g.edge_count, "deviation": dev})
    return GcnReport(out)
