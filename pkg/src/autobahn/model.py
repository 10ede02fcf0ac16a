"""The end-to-end network: featurization, path/cycle residual layers, readout.

Two implementations of the same forward pass live here. :func:`forward_batch`
runs every neuron of a disjoint-union batch at once on the tape and is what
training uses. :func:`reference_forward` walks the network one neuron at a time
through :func:`autobahn.layers.neuron_forward` and can record T1-T4 traces; the
test-suite checks that the two agree.

Each layer has two halves. Every path/cycle neuron reads the vertex values on
its traversal, adds them to its own previous activation and runs its residual
block (Linear, conv, ReLU, conv, skip, ReLU, Linear). Then every vertex adds the
per-kind mean of what the neurons through it produced, read back at that vertex.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tape as T
from .graphcore import (
    LabeledGraph,
    SubgraphInstance,
    enumerate_cycles,
    enumerate_paths,
    enumerate_stars,
    enumerate_vertices,
)
from .groupfn import GroupFunction, PositionSignal, dihedral_group
from .layers import (
    Activation,
    ConvBlockWeights,
    NeuronSpec,
    StarWeights,
    lift_to_cycle,
    make_neuron,
    narrow_to_vertex,
    neuron_forward,
)
from .permgroup import Permutation

__all__ = [
    "ModelError",
    "CheckpointError",
    "ModelConfig",
    "Featurizer",
    "GraphIndex",
    "Batch",
    "init_params",
    "featurizer_of",
    "featurize",
    "index_graph",
    "collate",
    "forward_batch",
    "predict",
    "embed",
    "reference_forward",
    "gcn_reference_forward",
    "star_autobahn_forward",
    "save_checkpoint",
    "load_checkpoint",
]


class ModelError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32
    layer_count: int = 2
    path_lengths: tuple[int, ...] = (3, 4, 5, 6)
    cycle_lengths: tuple[int, ...] = (5, 6)
    path_half_width: int = 2
    use_star_layer: bool = False
    seed: int = 0
    readout_hidden: int = 32
    atom_types: int = 8
    bond_types: int = 4
    path_aggregation: str = "mean"
    cycle_aggregation: str = "sum"
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "path_lengths", tuple(sorted(set(int(x) for x in self.path_lengths))))
        object.__setattr__(self, "cycle_lengths", tuple(sorted(set(int(x) for x in self.cycle_lengths))))
        if self.channels < 1 or self.readout_hidden < 1:
            raise ModelError("channels and readout_hidden must be >= 1")
        if self.layer_count < 0:
            raise ModelError("layer_count must be >= 0")
        if any(k < 2 for k in self.path_lengths):
            raise ModelError("path lengths must be >= 2")
        if any(m < 3 for m in self.cycle_lengths):
            raise ModelError("cycle lengths must be >= 3")
        if self.path_half_width < 0:
            raise ModelError("path_half_width must be >= 0")
        for name in ("path_aggregation", "cycle_aggregation"):
            if getattr(self, name) not in ("mean", "sum"):
                raise ModelError(f"{name} must be 'mean' or 'sum', got {getattr(self, name)!r}")
        if self.atom_types < 1 or self.bond_types < 1:
            raise ModelError("need at least one atom type and one bond type")

    def aggregation_for(self, kind: str) -> str:
        return self.cycle_aggregation if kind == "cycle" else self.path_aggregation

    @property
    def kinds(self) -> list[tuple[str, int]]:
        return [("path", k) for k in self.path_lengths] + [("cycle", m) for m in self.cycle_lengths]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["path_lengths"] = list(self.path_lengths)
        d["cycle_lengths"] = list(self.cycle_lengths)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ModelError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**dict(d))


def _kind_name(kind: str, size: int) -> str:
    return f"{kind}{size}"


def _tap_count(config: ModelConfig, kind: str, size: int) -> int:
    return config.path_half_width + 1 if kind == "path" else 2 * size


def _fan_in(config: ModelConfig, kind: str, size: int) -> int:
    c = config.channels
    return (2 * config.path_half_width + 1) * c if kind == "path" else 2 * size * c


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes in their canonical order."""
    c, hdn = config.channels, config.readout_hidden
    out = [("atom_emb", (config.atom_types, c)), ("bond_emb", (config.bond_types, c))]
    for layer in range(config.layer_count):
        for kind, size in config.kinds:
            pre = f"layer{layer}.{_kind_name(kind, size)}."
            taps = _tap_count(config, kind, size)
            out.append((pre + "lin_in_w", (c, c)))
            if config.use_bias:
                out.append((pre + "lin_in_b", (c,)))
            out.append((pre + "conv1", (taps, c, c)))
            if config.use_bias:
                out.append((pre + "bias1", (c,)))
            out.append((pre + "conv2", (taps, c, c)))
            if config.use_bias:
                out.append((pre + "bias2", (c,)))
            out.append((pre + "lin_out_w", (c, c)))
            if config.use_bias:
                out.append((pre + "lin_out_b", (c,)))
        out.append((f"layer{layer}.star.w", (c, c)))
        if config.use_bias:
            out.append((f"layer{layer}.star.b", (c,)))
    out.append(("head.w1", (c, hdn)))
    if config.use_bias:
        out.append(("head.b1", (hdn,)))
    out.append(("head.w2", (hdn, 1)))
    if config.use_bias:
        out.append(("head.b2", (1,)))
    return out


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Uniform(-a, a) weights with a = fan_in**-0.5, zero biases, U(-1, 1) embeddings."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config):
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith("_emb"):
            params[name] = rng.uniform(-1.0, 1.0, size=shape)
        elif leaf.startswith("b") or leaf.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            if leaf in ("conv1", "conv2"):
                kind_tag = name.split(".")[1]
                kind = "path" if kind_tag.startswith("path") else "cycle"
                fan = _fan_in(config, kind, int(kind_tag[len(kind):]))
            else:
                fan = shape[0]
            a = fan ** -0.5
            params[name] = rng.uniform(-a, a, size=shape)
    return params


def check_params(config: ModelConfig, params: Mapping[str, np.ndarray]) -> None:
    want = dict(param_shapes(config))
    if set(want) != set(params):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise ModelError(f"parameter set mismatch; missing {missing[:4]}, unexpected {extra[:4]}")
    for name, shape in want.items():
        if tuple(np.shape(params[name])) != shape:
            raise ModelError(f"{name} has shape {np.shape(params[name])}, expected {shape}")


@dataclass(frozen=True)
class Featurizer:
    atom: np.ndarray
    bond: np.ndarray

    def atom_vec(self, label: int) -> np.ndarray:
        if not 0 <= label < self.atom.shape[0]:
            raise ModelError(f"unknown atom label {label}")
        return self.atom[label]

    def bond_vec(self, label: int) -> np.ndarray:
        if not 0 <= label < self.bond.shape[0]:
            raise ModelError(f"unknown bond label {label}")
        return self.bond[label]


def featurizer_of(params: Mapping[str, np.ndarray]) -> Featurizer:
    return Featurizer(np.asarray(params["atom_emb"]), np.asarray(params["bond_emb"]))


def _position_features(g: LabeledGraph, trav: tuple[int, ...], f: Featurizer, cyclic: bool) -> np.ndarray:
    rows = []
    for p, v in enumerate(trav):
        x = f.atom_vec(g.vertex_labels[v - 1]).copy()
        if p > 0:
            x = x + f.bond_vec(g.edge_label(trav[p - 1], v))
        elif cyclic:
            x = x + f.bond_vec(g.edge_label(trav[-1], v))
        rows.append(x)
    return np.array(rows)


def featurize(g: LabeledGraph, neurons: Iterable[SubgraphInstance], f: Featurizer) -> list:
    """Initial activations: atom embedding plus the bond from the preceding traversal node.

    Paths give position signals, cycles give functions on D_m (each position lifted
    onto its two rows), stars and single vertices give the atom embedding.
    """
    out = []
    for inst in neurons:
        if inst.kind == "path":
            out.append(PositionSignal(_position_features(g, inst.traversal, f, cyclic=False)))
        elif inst.kind == "cycle":
            feats = _position_features(g, inst.traversal, f, cyclic=True)
            m = inst.size
            total = np.zeros((2 * m, feats.shape[1]))
            for p in range(m):
                total = total + lift_to_cycle(feats[p], p, m).values
            out.append(GroupFunction(dihedral_group(m), total))
        elif inst.kind in ("star", "vertex"):
            out.append(f.atom_vec(g.vertex_labels[inst.traversal[0] - 1]).copy())
        else:
            raise ModelError(f"unknown subgraph kind {inst.kind!r}")
    return out


def subgraph_instances(g: LabeledGraph, config: ModelConfig) -> list[SubgraphInstance]:
    out: list[SubgraphInstance] = []
    if config.path_lengths:
        wanted = set(config.path_lengths)
        paths = enumerate_paths(g, min(wanted), max(wanted))
        out.extend(p for p in paths if p.size in wanted)
    if config.cycle_lengths:
        out.extend(enumerate_cycles(g, config.cycle_lengths))
    return out


def star_active(g: LabeledGraph, config: ModelConfig, instances=None) -> bool:
    """Stars run when configured, or for graphs with no path or cycle neurons."""
    if config.use_star_layer:
        return True
    if instances is None:
        instances = subgraph_instances(g, config)
    return len(instances) == 0


@dataclass
class GraphIndex:
    """Integer arrays describing one graph's neurons, ready for batching."""

    n: int
    atoms: np.ndarray
    trav: dict[tuple[str, int], np.ndarray]
    bonds: dict[tuple[str, int], np.ndarray]
    star_src: np.ndarray
    star_dst: np.ndarray
    star_on: bool


def index_graph(g: LabeledGraph, config: ModelConfig) -> GraphIndex:
    instances = subgraph_instances(g, config)
    atoms = np.asarray(g.vertex_labels, dtype=np.int64)
    if atoms.size and atoms.max() >= config.atom_types:
        raise ModelError(f"unknown atom label {int(atoms.max())}")
    trav, bonds = {}, {}
    for kind, size in config.kinds:
        rows = [i.traversal for i in instances if i.key == (kind, size)]
        t = np.asarray(rows, dtype=np.int64).reshape(len(rows), size)
        b = np.zeros_like(t)
        for r, tr in enumerate(rows):
            for p in range(size):
                if p > 0:
                    b[r, p] = g.edge_label(tr[p - 1], tr[p])
                elif kind == "cycle":
                    b[r, p] = g.edge_label(tr[-1], tr[0])
        if b.size and b.max() >= config.bond_types:
            raise ModelError(f"unknown bond label {int(b.max())}")
        trav[(kind, size)] = t - 1
        bonds[(kind, size)] = b
    src, dst = [], []
    for u, v, _ in g.edges:
        src += [u - 1, v - 1]
        dst += [v - 1, u - 1]
    return GraphIndex(
        n=g.n,
        atoms=atoms,
        trav=trav,
        bonds=bonds,
        star_src=np.asarray(src, dtype=np.int64),
        star_dst=np.asarray(dst, dtype=np.int64),
        star_on=star_active(g, config, instances),
    )


@dataclass
class Batch:
    size: int
    n_vertices: int
    atoms: np.ndarray
    graph_of: np.ndarray
    trav: dict
    bonds: dict
    weight: dict
    star_src: np.ndarray
    star_dst: np.ndarray
    star_mask: np.ndarray


def collate(indices: Sequence[GraphIndex], config: ModelConfig) -> Batch:
    offs = np.cumsum([0] + [gi.n for gi in indices])
    nv = int(offs[-1])
    atoms = np.concatenate([gi.atoms for gi in indices]) if indices else np.zeros(0, np.int64)
    graph_of = np.repeat(np.arange(len(indices)), [gi.n for gi in indices])
    trav, bonds, weight = {}, {}, {}
    for key in config.kinds:
        t = np.concatenate(
            [gi.trav[key] + o for gi, o in zip(indices, offs)] or [np.zeros((0, key[1]), np.int64)]
        ).astype(np.int64)
        trav[key] = _frozen(t)
        bonds[key] = np.concatenate(
            [gi.bonds[key] for gi in indices] or [np.zeros((0, key[1]), np.int64)]
        ).astype(np.int64)
        count = np.bincount(t.ravel(), minlength=nv).astype(np.float64)
        if config.aggregation_for(key[0]) == "mean":
            w = 1.0 / np.maximum(count, 1.0)
        else:
            w = np.ones(nv)
        weight[key] = w[t] if t.size else np.zeros(t.shape)
    star_src = np.concatenate(
        [gi.star_src + o for gi, o in zip(indices, offs)] or [np.zeros(0, np.int64)]
    ).astype(np.int64)
    star_dst = np.concatenate(
        [gi.star_dst + o for gi, o in zip(indices, offs)] or [np.zeros(0, np.int64)]
    ).astype(np.int64)
    star_mask = np.repeat(
        np.array([1.0 if gi.star_on else 0.0 for gi in indices]), [gi.n for gi in indices]
    )
    return Batch(len(indices), nv, atoms, _frozen(graph_of), trav, bonds, weight,
                 _frozen(star_src), _frozen(star_dst), star_mask)


def _frozen(a: np.ndarray) -> np.ndarray:
    # read-only index arrays let the tape reuse their segment plans
    a.flags.writeable = False
    return a


@functools.lru_cache(maxsize=None)
def _conv_index(kind: str, size: int, half_width: int) -> np.ndarray:
    if kind == "cycle":
        return _frozen(np.array(dihedral_group(size).quotient_table))
    idx = np.full((size, 2 * half_width + 1), size, dtype=np.int64)
    for u in range(size):
        for jj in range(2 * half_width + 1):
            src = u - (jj - half_width)
            if 0 <= src < size:
                idx[u, jj] = src
    return _frozen(idx)


def _as_tape(params: Mapping) -> dict[str, T.TapeValue]:
    return {k: v if isinstance(v, T.TapeValue) else T.constant(v) for k, v in params.items()}


def _path_conv(x: T.TapeValue, taps: T.TapeValue, half_width: int, skew, bias=None,
               residual=None) -> T.TapeValue:
    """``relu(window conv + bias + residual)`` for a batch of path activations."""
    h = half_width
    if skew is None:
        return T.path_conv(x, taps, h, bias, residual, relu=True)
    # the extra taps on the negative side only, for the sabotage hook
    idx = _conv_index("path", x.shape[1], h)[:, :h]
    extra = T.conv_gather(x, T.constant(np.asarray(skew)[::-1]), idx)
    return T.relu(T.path_conv(x, taps, h, bias, residual) + extra)


def forward_batch(
    params: Mapping,
    batch: Batch,
    config: ModelConfig,
    *,
    skew: Mapping[str, np.ndarray] | None = None,
) -> tuple[T.TapeValue, T.TapeValue]:
    """Predictions (shape (B,)) and pooled vertex sums (shape (B, C)) for a batch.

    Plain arrays in ``params`` run without recording; pass :func:`tape.leaf`
    values to differentiate.
    """
    P = _as_tape(params)
    skew = skew or {}
    c = config.channels
    nv = batch.n_vertices
    atom_emb, bond_emb = P["atom_emb"], P["bond_emb"]
    h = T.gather(atom_emb, batch.atoms)

    state = {}
    for kind, size in config.kinds:
        t = batch.trav[(kind, size)]
        if t.shape[0] == 0:
            continue
        feats = T.gather(atom_emb, batch.atoms[t])
        bond = T.gather(bond_emb, batch.bonds[(kind, size)])
        if kind == "path":
            mask = np.ones((1, size, 1))
            mask[0, 0, 0] = 0.0
            state[(kind, size)] = feats + bond * mask
        else:
            x = feats + bond
            state[(kind, size)] = T.concat([x, x], axis=1) * 0.5

    for layer in range(config.layer_count):
        delta = None
        for kind, size in config.kinds:
            key = (kind, size)
            if key not in state:
                continue
            t = batch.trav[key]
            pre = f"layer{layer}.{_kind_name(kind, size)}."
            xv = T.gather(h, t)
            if kind == "path":
                f = state[key] + xv
            else:
                f = state[key] + T.concat([xv, xv], axis=1) * 0.5
            if kind == "path":
                hw = config.path_half_width

                def conv(x, n, residual=None):
                    return _path_conv(x, P[pre + f"conv{n}"], hw, skew.get(pre + f"conv{n}"),
                                      P.get(pre + f"bias{n}"), residual)
            else:
                idx = _conv_index(kind, size, config.path_half_width)

                def conv(x, n, residual=None):
                    out = T.conv_gather(x, P[pre + f"conv{n}"], idx, P.get(pre + f"bias{n}"))
                    return T.relu(out if residual is None else out + residual)
            z = T.affine(f, P[pre + "lin_in_w"], P.get(pre + "lin_in_b"))
            a = conv(z, 1)
            y = conv(a, 2, z)
            out = T.affine(y, P[pre + "lin_out_w"], P.get(pre + "lin_out_b"))
            state[key] = out
            if kind == "cycle":
                per_vertex = out[:, :size] + out[:, size:]
            else:
                per_vertex = out
            contrib = T.scatter_add(per_vertex * batch.weight[key][:, :, None], t, nv)
            delta = contrib if delta is None else delta + contrib
        if batch.star_mask.any():
            msg = T.scatter_add(T.gather(h, batch.star_src), batch.star_dst, nv)
            s = msg @ P[f"layer{layer}.star.w"]
            if config.use_bias:
                s = s + P[f"layer{layer}.star.b"]
            s = T.relu(s) * batch.star_mask[:, None]
            delta = s if delta is None else delta + s
        if delta is not None:
            h = h + delta

    pooled = T.scatter_add(h, batch.graph_of, batch.size)
    hid = pooled @ P["head.w1"]
    if config.use_bias:
        hid = hid + P["head.b1"]
    pred = T.relu(hid) @ P["head.w2"]
    if config.use_bias:
        pred = pred + P["head.b2"]
    return T.reshape(pred, (batch.size,)), pooled


def predict(params, graphs: Sequence[LabeledGraph], config: ModelConfig, **kw) -> np.ndarray:
    batch = collate([index_graph(g, config) for g in graphs], config)
    pred, _ = forward_batch(params, batch, config, **kw)
    return pred.value.copy()


def embed(params, graphs: Sequence[LabeledGraph], config: ModelConfig, **kw) -> np.ndarray:
    """Pooled per-graph vertex sums, before the fully connected head."""
    batch = collate([index_graph(g, config) for g in graphs], config)
    _, pooled = forward_batch(params, batch, config, **kw)
    return pooled.value.copy()


def readout_head(params: Mapping, pooled: np.ndarray, config: ModelConfig) -> float:
    hid = pooled @ params["head.w1"]
    if config.use_bias:
        hid = hid + params["head.b1"]
    out = np.maximum(hid, 0.0) @ params["head.w2"]
    if config.use_bias:
        out = out + params["head.b2"]
    return float(out[0])


def block_weights(params: Mapping, config: ModelConfig, layer: int, kind: str, size: int, skew=None):
    pre = f"layer{layer}.{_kind_name(kind, size)}."
    skew = skew or {}
    c = config.channels
    zero = np.zeros(c)
    get = lambda n: np.asarray(params[pre + n]) if config.use_bias else zero
    return ConvBlockWeights(
        lin_in_w=np.asarray(params[pre + "lin_in_w"]),
        lin_in_b=get("lin_in_b"),
        conv1=np.asarray(params[pre + "conv1"]),
        bias1=get("bias1"),
        conv2=np.asarray(params[pre + "conv2"]),
        bias2=get("bias2"),
        lin_out_w=np.asarray(params[pre + "lin_out_w"]),
        lin_out_b=get("lin_out_b"),
        skew1=skew.get(pre + "conv1"),
        skew2=skew.get(pre + "conv2"),
    )


_KIND_CODES = {"path": 1, "cycle": 2, "star": 3, "vertex": 4}


def _random_alignment(spec: NeuronSpec, seed: int) -> Permutation:
    # a function of the neuron alone, so equal networks get equal alignments
    rng = np.random.default_rng([seed, _KIND_CODES[spec.kind], *spec.instance.traversal])
    return spec.symmetry.elements[int(rng.integers(len(spec.symmetry)))]


def reference_forward(
    params: Mapping,
    g: LabeledGraph,
    config: ModelConfig,
    *,
    skew: Mapping[str, np.ndarray] | None = None,
    alignment_seed: int | None = None,
    trace: dict | None = None,
) -> float:
    """The same prediction as :func:`predict`, computed neuron by neuron.

    With ``trace`` given, ``trace[(layer, neuron_ident)]`` receives the T1-T4
    record of every neuron, and ``trace["pooled"]`` the summed vertex values.
    ``alignment_seed`` draws each neuron's alignment at random from its symmetry
    group (seeded by the seed and the neuron's traversal); the output must not
    depend on it.
    """
    f = featurizer_of(params)
    instances = subgraph_instances(g, config)
    specs = []
    for inst in instances:
        spec = make_neuron(inst)
        if alignment_seed is not None:
            spec = make_neuron(inst, _random_alignment(spec, alignment_seed))
        specs.append(spec)
    vertices = [make_neuron(v) for v in enumerate_vertices(g)]
    stars = [make_neuron(s) for s in enumerate_stars(g)] if star_active(g, config, instances) else []

    acts = {
        s.ident: Activation(s, x)
        for s, x in zip(specs, featurize(g, [s.instance for s in specs], f))
    }
    h = {
        s.ident: Activation(s, x)
        for s, x in zip(vertices, featurize(g, [s.instance for s in vertices], f))
    }
    through: dict[int, list[NeuronSpec]] = {v: [] for v in range(1, g.n + 1)}
    for s in specs:
        for v in s.instance.traversal:
            through[v].append(s)
    rules = {k: config.aggregation_for(k) for k in ("path", "cycle")}

    c = config.channels
    for layer in range(config.layer_count):
        new_acts = {}
        for s in specs:
            inputs = [(s, acts[s.ident])]
            inputs += [(vertices[v - 1], h[vertices[v - 1].ident]) for v in s.instance.traversal]
            w = block_weights(params, config, layer, s.kind, s.size, skew)
            rec = {} if trace is not None else None
            new_acts[s.ident] = neuron_forward(s, inputs, w, trace=rec)
            if trace is not None:
                trace[(layer, s.ident)] = rec
        star_out = {}
        if stars:
            sw = StarWeights(
                np.asarray(params[f"layer{layer}.star.w"]),
                np.asarray(params[f"layer{layer}.star.b"]) if config.use_bias else None,
            )
            for st in stars:
                inputs = [(vertices[u - 1], h[vertices[u - 1].ident]) for u in st.instance.traversal[1:]]
                rec = {} if trace is not None else None
                if inputs:
                    star_out[st.ident] = neuron_forward(st, inputs, sw, trace=rec)
                else:
                    b = sw.b if sw.b is not None else np.zeros(c)
                    star_out[st.ident] = Activation(st, np.maximum(b, 0.0))
                    if rec is not None:
                        rec.update(spec=st, t1={}, t2={}, t3=np.zeros(c), t4=star_out[st.ident].values)
                if trace is not None:
                    trace[(layer, st.ident)] = rec
        new_h = {}
        for vs in vertices:
            v = vs.instance.traversal[0]
            inputs = [(vs, h[vs.ident])] + [(s, new_acts[s.ident]) for s in through[v]]
            if stars:
                st = stars[v - 1]
                inputs.append((st, star_out[st.ident]))
            rec = {} if trace is not None else None
            new_h[vs.ident] = neuron_forward(vs, inputs, aggregation=rules, trace=rec)
            if trace is not None:
                trace[(layer, vs.ident)] = rec
        acts, h = new_acts, new_h

    pooled = np.zeros(c)
    for vs in vertices:
        pooled = pooled + narrow_to_vertex(h[vs.ident], vs.instance.traversal[0])
    if trace is not None:
        trace["pooled"] = pooled
    return readout_head(params, pooled, config)


def gcn_reference_forward(g: LabeledGraph, h0: np.ndarray, weights: Sequence[np.ndarray]) -> np.ndarray:
    """Plain message passing: h'_v = relu(W^T sum_{u ~ v} h_u), no self-loop or degree scaling."""
    adj = np.zeros((g.n, g.n))
    for u, v, _ in g.edges:
        adj[u - 1, v - 1] = 1.0
        adj[v - 1, u - 1] = 1.0
    h = np.asarray(h0, dtype=np.float64)
    for w in weights:
        h = np.maximum(adj @ h @ w, 0.0)
    return h


def star_autobahn_forward(
    g: LabeledGraph, h0: np.ndarray, weights: Sequence[np.ndarray], *, trace: list | None = None
) -> np.ndarray:
    """The GCN written as an Autobahn network of star neurons."""
    stars = [make_neuron(s) for s in enumerate_stars(g)]
    acts = {s.ident: Activation(s, np.asarray(h0[i], dtype=np.float64)) for i, s in enumerate(stars)}
    for w in weights:
        sw = StarWeights(np.asarray(w), None)
        new = {}
        for st in stars:
            inputs = [(stars[u - 1], acts[stars[u - 1].ident]) for u in st.instance.traversal[1:]]
            rec = {} if trace is not None else None
            new[st.ident] = neuron_forward(st, inputs, sw, trace=rec)
            if trace is not None:
                trace.append(rec)
        acts = new
    if not stars:
        return np.zeros((0, np.shape(h0)[1] if np.ndim(h0) == 2 else 0))
    return np.stack([acts[s.ident].values for s in stars])


_MAGIC = b"AUTOBAHN-CKPT 1\n"


def save_checkpoint(path, config: ModelConfig, params: Mapping[str, np.ndarray]) -> None:
    """Magic line, one JSON header line, then little-endian float64 payload."""
    check_params(config, params)
    entries, offset, chunks = [], 0, []
    for name, shape in param_shapes(config):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": config.to_dict(), "arrays": entries, "payload_bytes": offset}
    blob = _MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(chunks)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from None
    if not blob.startswith(_MAGIC):
        raise CheckpointError(f"{path} is not an autobahn checkpoint (bad magic line)")
    rest = blob[len(_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl].decode())
        config = ModelConfig.from_dict(header["config"])
        entries = header["arrays"]
        size = int(header["payload_bytes"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: malformed header ({e})") from None
    payload = rest[nl + 1:]
    if len(payload) != size:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, header says {size}")
    params = {}
    for e in entries:
        shape = tuple(e["shape"])
        count = math.prod(shape)
        start = int(e["offset"])
        if start + 8 * count > size:
            raise CheckpointError(f"{path}: array {e['name']} runs past the payload")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start).reshape(shape)
        params[e["name"]] = arr.astype(np.float64)
    try:
        check_params(config, params)
    except ModelError as e:
        raise CheckpointError(f"{path}: {e}") from None
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: non-finite values in {name}")
    return config, params
