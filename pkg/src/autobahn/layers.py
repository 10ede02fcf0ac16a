"""The Autobahn neuron, one instance at a time.

A neuron owns a reference domain (a path, cycle, star or single vertex of the
host graph) and runs four steps on its inputs:

T1  narrow every incoming activation to the intersection of the two domains;
T2  promote the result onto this neuron's domain;
T3  combine the promoted functions with a symmetric polynomial;
T4  apply a convolution over the domain's symmetry group, conjugated by the
    neuron's alignment, with pointwise ReLU.

This module is the per-neuron reference. :mod:`autobahn.model` runs the same
network vectorised over every neuron of a batch.

Cycle activations are functions on D_m (rows ``r^i`` then ``r^i s``). A vertex
value enters a cycle at position z as half of the value on ``r^z`` and on
``r^z s``; reading a vertex back adds those two rows, so a lift followed by a
read returns the value unchanged.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .graphcore import SubgraphInstance, intersect_domains
from .groupfn import (
    FiniteGroup,
    GroupError,
    GroupFunction,
    PositionSignal,
    SymmetricFilter,
    act,
    dihedral_convolve,
    dihedral_group,
    path_convolve,
    reverse,
    trivial_group,
)
from .permgroup import Permutation, identity, inverse

__all__ = [
    "NeuronSpec",
    "Activation",
    "ConvBlockWeights",
    "StarWeights",
    "make_neuron",
    "path_symmetry",
    "symmetric_poly",
    "lift_to_cycle",
    "lift_to_path",
    "narrow_to_vertex",
    "aligned_convolve",
    "apply_symmetry",
    "neuron_forward",
]

Data = Union[GroupFunction, PositionSignal, np.ndarray]


def path_symmetry(k: int) -> FiniteGroup:
    """Identity and end-to-end reversal of a k-vertex path."""
    rev = Permutation(tuple(range(k, 0, -1)))
    elems = [identity(k)] if k == 1 else [identity(k), rev]
    return FiniteGroup.from_elements("reflection", k, elems)


@dataclass(frozen=True, eq=False)
class NeuronSpec:
    instance: SubgraphInstance
    symmetry: FiniteGroup
    alignment: Permutation

    @property
    def kind(self) -> str:
        return self.instance.kind

    @property
    def size(self) -> int:
        return self.instance.size

    @property
    def ident(self) -> tuple:
        return (self.instance.kind, self.instance.traversal)


def make_neuron(instance: SubgraphInstance, alignment: Permutation | None = None) -> NeuronSpec:
    kind, k = instance.kind, instance.size
    if kind == "cycle":
        sym = dihedral_group(k)
    elif kind == "path":
        sym = path_symmetry(k)
    elif kind in ("star", "vertex"):
        sym = trivial_group(1)
    else:
        raise GroupError(f"unknown subgraph kind {kind!r}")
    if alignment is None:
        alignment = identity(sym.degree)
    if alignment not in sym:
        raise GroupError(f"alignment {alignment} is not a symmetry of the {kind}")
    return NeuronSpec(instance, sym, alignment)


@dataclass(frozen=True, eq=False)
class Activation:
    owner: NeuronSpec
    data: Data

    def __post_init__(self):
        kind, k = self.owner.kind, self.owner.size
        d = self.data
        if kind == "cycle":
            if not isinstance(d, GroupFunction) or d.group.kind != "dihedral" or len(d.group) != 2 * k:
                raise GroupError(f"cycle of size {k} needs a function on D_{k}")
        elif kind == "path":
            if not isinstance(d, PositionSignal) or d.length != k:
                raise GroupError(f"path of size {k} needs a {k}-row position signal")
        else:
            arr = np.asarray(d, dtype=np.float64)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise GroupError(f"{kind} activation must be a finite vector")
            object.__setattr__(self, "data", arr)

    @property
    def values(self) -> np.ndarray:
        d = self.data
        return d.values if isinstance(d, (GroupFunction, PositionSignal)) else d


@dataclass
class ConvBlockWeights:
    """Weights of one residual block shared by every neuron of a (kind, size).

    ``conv1``/``conv2`` hold taps w(0..h) for paths, shape (h+1, C, C), and a
    filter over D_m for cycles, shape (2m, C, C). ``skew1``/``skew2`` exist only as
    a test hook: when set, w(-j) becomes w(j) + skew[j-1], breaking the path
    filter's reflection symmetry on purpose.
    """

    lin_in_w: np.ndarray
    lin_in_b: np.ndarray
    conv1: np.ndarray
    bias1: np.ndarray
    conv2: np.ndarray
    bias2: np.ndarray
    lin_out_w: np.ndarray
    lin_out_b: np.ndarray
    skew1: np.ndarray | None = None
    skew2: np.ndarray | None = None


@dataclass
class StarWeights:
    w: np.ndarray
    b: np.ndarray | None = None


def _canonical_order(items: Sequence) -> list:
    def key(x):
        if isinstance(x, Activation):
            return (0, repr(x.owner.ident), b"")
        arr = x.values if isinstance(x, (GroupFunction, PositionSignal)) else np.asarray(x)
        return (1, "", np.ascontiguousarray(arr, dtype=np.float64).tobytes())

    return sorted(items, key=key)


def _rewrap(template, values: np.ndarray):
    if isinstance(template, Activation):
        return Activation(template.owner, _rewrap(template.data, values))
    if isinstance(template, GroupFunction):
        return GroupFunction(template.group, values)
    if isinstance(template, PositionSignal):
        return PositionSignal(values)
    return values


def _raw(x) -> np.ndarray:
    if isinstance(x, Activation):
        return x.values
    if isinstance(x, (GroupFunction, PositionSignal)):
        return x.values
    return np.asarray(x, dtype=np.float64)


def symmetric_poly(q: int, inputs: Sequence):
    """Pointwise ``sum_{i1 <= ... <= iq} f_i1 * ... * f_iq``.

    Inputs are put in a canonical order first, so the floating-point result does
    not depend on the order they were passed in.
    """
    if q < 1:
        raise GroupError("symmetric polynomial order must be >= 1")
    if not inputs:
        raise GroupError("symmetric polynomial of no inputs")
    ordered = _canonical_order(list(inputs))
    arrays = [_raw(x) for x in ordered]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise GroupError("symmetric polynomial inputs differ in shape")
    out = np.zeros(shape)
    for combo in itertools.combinations_with_replacement(range(len(arrays)), q):
        term = arrays[combo[0]].copy()
        for i in combo[1:]:
            term = term * arrays[i]
        out = out + term
    return _rewrap(inputs[0], out)


def lift_to_cycle(value, position: int, m: int) -> GroupFunction:
    """Half of ``value`` on r^z and on r^z s (z = position, 0-based); zero elsewhere."""
    if not 0 <= position < m:
        raise GroupError(f"cycle position {position} outside 0..{m - 1}")
    value = np.atleast_1d(np.asarray(value, dtype=np.float64))
    out = np.zeros((2 * m, value.shape[0]))
    out[position] = 0.5 * value
    out[m + position] = 0.5 * value
    return GroupFunction(dihedral_group(m), out)


def lift_to_path(value, position: int, k: int) -> PositionSignal:
    """``value`` at row ``position`` (1-based) of a k-row signal."""
    if not 1 <= position <= k:
        raise GroupError(f"path position {position} outside 1..{k}")
    value = np.atleast_1d(np.asarray(value, dtype=np.float64))
    out = np.zeros((k, value.shape[0]))
    out[position - 1] = value
    return PositionSignal(out)


def narrow_to_vertex(a: Activation, vertex: int) -> np.ndarray:
    kind = a.owner.kind
    p = a.owner.instance.position(vertex)
    if kind == "cycle":
        m = a.owner.size
        v = a.values
        return v[p] + v[m + p]
    if kind == "path":
        return a.values[p].copy()
    return a.values.copy()


def _full_taps(taps: np.ndarray, skew: np.ndarray | None) -> np.ndarray:
    neg = taps[:0:-1]
    if skew is not None:
        neg = neg + np.asarray(skew)[::-1]
    return np.concatenate([neg, taps])


def _window_convolve(f: PositionSignal, full: np.ndarray) -> PositionSignal:
    # full[h + j] is w(j), for filters that need not be symmetric
    k, h = f.length, full.shape[0] // 2
    out = np.zeros((k, full.shape[2]))
    for u in range(k):
        for j in range(-h, h + 1):
            if 0 <= u - j < k:
                out[u] += f.values[u - j] @ full[h + j]
    return PositionSignal(out)


def apply_symmetry(spec: NeuronSpec, gamma: Permutation, data: Data) -> Data:
    """The action of a domain symmetry on an activation of this neuron."""
    if spec.kind == "cycle":
        return act(gamma, data)
    if spec.kind == "path":
        return reverse(data) if not gamma.is_identity() else data
    return data


def aligned_convolve(spec: NeuronSpec, data: Data, taps: np.ndarray, skew=None) -> Data:
    """``T_b B T_{b^-1}`` with B the convolution over the neuron's symmetry group."""
    b = spec.alignment
    if spec.kind == "cycle":
        m = spec.size
        d_in, d_out = taps.shape[1], taps.shape[2]
        w = GroupFunction(dihedral_group(m), taps.reshape(2 * m, d_in * d_out))
        return act(b, dihedral_convolve(act(inverse(b), data), w))
    if spec.kind == "path":
        inner = apply_symmetry(spec, inverse(b), data)
        if skew is None:
            conv = path_convolve(inner, SymmetricFilter(taps))
        else:
            conv = _window_convolve(inner, _full_taps(taps, skew))
        return apply_symmetry(spec, b, conv)
    raise GroupError(f"no automorphism convolution for {spec.kind}")


def _pointwise(data: Data, w: np.ndarray, b: np.ndarray | None) -> Data:
    out = _raw(data) @ w
    if b is not None:
        out = out + b
    return _rewrap(data, out)


def _relu(data: Data) -> Data:
    return _rewrap(data, np.maximum(_raw(data), 0.0))


def _add(a: Data, b: Data) -> Data:
    return _rewrap(a, _raw(a) + _raw(b))


def _bias(data: Data, b: np.ndarray) -> Data:
    return _rewrap(data, _raw(data) + b)


def block_forward(spec: NeuronSpec, data: Data, w: ConvBlockWeights) -> Data:
    """T4 for paths and cycles: Linear, residual conv block, Linear."""
    z = _pointwise(data, w.lin_in_w, w.lin_in_b)
    a = _relu(_bias(aligned_convolve(spec, z, w.conv1, w.skew1), w.bias1))
    b = _bias(aligned_convolve(spec, a, w.conv2, w.skew2), w.bias2)
    y = _relu(_add(b, z))
    return _pointwise(y, w.lin_out_w, w.lin_out_b)


def _coset_mass(domain_size: int, intersection_size: int) -> int:
    return math.factorial(intersection_size) * math.factorial(domain_size - intersection_size)


def neuron_forward(
    target: NeuronSpec,
    inputs: Sequence[tuple[NeuronSpec, Activation]],
    weights=None,
    *,
    order: int = 1,
    aggregation: str | Mapping[str, str] = "sum",
    trace: dict | None = None,
) -> Activation:
    """Run T1-T4 for one neuron.

    ``weights`` is a :class:`ConvBlockWeights` for path/cycle targets, a
    :class:`StarWeights` for stars, and unused for single-vertex targets. With
    ``aggregation="mean"`` a vertex target averages the inputs of each
    (kind, size) before summing across kinds; its own previous value is added
    as is. A mapping from kind to "mean"/"sum" chooses per kind.
    """
    kind = target.kind
    t1, t2 = {}, {}

    if kind in ("path", "cycle"):
        promoted = []
        for src, a in inputs:
            key = "self" if src.ident == target.ident else src.ident
            if key == "self":
                narrowed = a.data
                lifted = a.data
            else:
                inter = intersect_domains(target.instance, src.instance)
                if inter.size == 0:
                    continue
                if inter.size != 1:
                    raise GroupError(
                        f"unknown kind pairing: {src.kind} -> {kind} over {inter.size} shared vertices"
                    )
                v = inter.indices[0]
                narrowed = narrow_to_vertex(a, v)
                pos = target.instance.position(v)
                if kind == "cycle":
                    lifted = lift_to_cycle(narrowed, pos, target.size)
                else:
                    lifted = lift_to_path(narrowed, pos + 1, target.size)
            t1[key] = narrowed
            t2[key] = lifted
            promoted.append(Activation(target, lifted))
        if not promoted:
            raise GroupError("neuron has no overlapping inputs")
        combined = symmetric_poly(order, promoted).data
        out = block_forward(target, combined, weights)

    elif kind == "vertex":
        v = target.instance.traversal[0]
        own = None
        groups: dict[tuple, list[np.ndarray]] = {}
        for src, a in _canonical_order_pairs(inputs):
            if src.ident == target.ident:
                own = a.values.copy()
                t1["self"] = own
                continue
            narrowed = narrow_to_vertex(a, v)
            t1[src.ident] = narrowed
            groups.setdefault(src.instance.key, []).append(narrowed)
        t2 = dict(t1)
        parts = []
        for key in sorted(groups):
            vals = groups[key]
            s = symmetric_poly(order, vals)
            rule = aggregation if isinstance(aggregation, str) else aggregation.get(key[0], "sum")
            parts.append(s / len(vals) if rule == "mean" else s)
        combined = own if own is not None else None
        for p in parts:
            combined = p if combined is None else combined + p
        if combined is None:
            raise GroupError("vertex neuron has no inputs")
        out = combined

    elif kind == "star":
        center = target.instance.traversal[0]
        m = target.size
        masses, values = [], []
        for src, a in _canonical_order_pairs(inputs):
            if src.kind == "star":
                # the message from a neighbouring star travels over the shared edge
                other = src.instance.traversal[0]
                if other not in target.instance.traversal[1:]:
                    continue
                inter_size = 2
                narrowed = a.values.copy()
            elif src.kind == "vertex":
                u = src.instance.traversal[0]
                if u not in target.instance.traversal[1:]:
                    continue
                inter_size = 1
                narrowed = a.values.copy()
            else:
                raise GroupError(f"unknown kind pairing: {src.kind} -> star")
            t1[src.ident] = narrowed
            # promotion of a constant function covers one coset of S_m
            mass = _coset_mass(m, inter_size)
            t2[src.ident] = (narrowed, mass)
            masses.append(mass)
            values.append(narrowed)
        if weights is None:
            raise GroupError("star neuron needs StarWeights")
        channels = weights.w.shape[0]
        if masses and len(set(masses)) != 1:
            raise GroupError("star inputs narrowed to intersections of different sizes")
        combined = np.zeros(channels)
        if masses:
            unit = masses[0]
            # convolution against the constant function, normalised by one coset
            combined = symmetric_poly(order, [(mass / unit) * val for mass, val in zip(masses, values)])
        out = combined @ weights.w
        if weights.b is not None:
            out = out + weights.b
        out = np.maximum(out, 0.0)
    else:
        raise GroupError(f"unknown subgraph kind {kind!r}")

    if trace is not None:
        trace["spec"] = target
        trace["t1"] = t1
        trace["t2"] = t2
        trace["t3"] = combined
        trace["t4"] = out
    return Activation(target, out)


def _canonical_order_pairs(inputs):
    return sorted(inputs, key=lambda pair: repr(pair[0].ident))
