import itertools
import math

import numpy as np
import pytest

from autobahn.graphcore import LabeledGraph, SubgraphInstance, enumerate_stars, enumerate_vertices
from autobahn.groupfn import (
    GroupError,
    GroupFunction,
    PositionSignal,
    act,
    dihedral_group,
    group_convolve,
    promote,
    symmetric_group,
)
from autobahn.layers import (
    Activation,
    ConvBlockWeights,
    StarWeights,
    aligned_convolve,
    lift_to_cycle,
    lift_to_path,
    make_neuron,
    narrow_to_vertex,
    neuron_forward,
    path_symmetry,
    symmetric_poly,
)
from autobahn.permgroup import OrderedSubset, Permutation, compose, identity, inverse

C = 3


def cycle_graph(m):
    return LabeledGraph.from_edges(m, [(i, i % m + 1) for i in range(1, m + 1)])


def path_graph(k):
    return LabeledGraph.from_edges(k, [(i, i + 1) for i in range(1, k)])


def vertex_inputs(g, rng, c=C):
    return {v: rng.standard_normal(c) for v in range(1, g.n + 1)}


def as_inputs(g, values):
    out = []
    for inst in enumerate_vertices(g):
        spec = make_neuron(inst)
        out.append((spec, Activation(spec, values[inst.traversal[0]])))
    return out


def random_block(rng, kind, size, c=C, h=2):
    taps = (h + 1) if kind == "path" else 2 * size
    r = lambda *s: rng.standard_normal(s) * 0.5
    return ConvBlockWeights(
        r(c, c), r(c), r(taps, c, c), r(c), r(taps, c, c), r(c), r(c, c), r(c)
    )


# --- symmetric polynomials --------------------------------------------------


def test_symmetric_poly_examples():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(symmetric_poly(1, [a, b]), a + b)
    np.testing.assert_allclose(symmetric_poly(2, [a, b]), a * a + a * b + b * b, atol=1e-15)
    c = rng.standard_normal(4)
    expect3 = sum(
        np.prod([x for x in combo], axis=0)
        for combo in itertools.combinations_with_replacement([a, b, c], 3)
    )
    np.testing.assert_allclose(symmetric_poly(3, [a, b, c]), expect3, atol=1e-13)


@pytest.mark.parametrize("q", [1, 2, 3])
def test_symmetric_poly_order_invariance_is_exact(q):
    rng = np.random.default_rng(q)
    xs = [rng.standard_normal(5) for _ in range(5)]
    base = symmetric_poly(q, xs)
    for _ in range(10):
        perm = rng.permutation(5)
        assert np.array_equal(symmetric_poly(q, [xs[i] for i in perm]), base)


def test_symmetric_poly_rejects_bad_input():
    with pytest.raises(GroupError):
        symmetric_poly(0, [np.ones(2)])
    with pytest.raises(GroupError):
        symmetric_poly(1, [np.ones(2), np.ones(3)])


# --- lifts and reads --------------------------------------------------------


def test_lift_to_cycle():
    c = np.array([1.0, -2.0])
    f = lift_to_cycle(c, 0, 6)
    assert f.values.shape == (12, 2)
    np.testing.assert_array_equal(f.values[0], c / 2)
    np.testing.assert_array_equal(f.values[6], c / 2)
    assert np.count_nonzero(np.any(f.values, axis=1)) == 2
    assert not lift_to_cycle(np.zeros(2), 3, 6).values.any()
    with pytest.raises(GroupError):
        lift_to_cycle(c, 6, 6)


def test_lift_to_path():
    f = lift_to_path([2.5], 2, 4)
    assert f.values[:, 0].tolist() == [0, 2.5, 0, 0]
    assert not lift_to_path(np.zeros(3), 1, 4).values.any()
    total = sum((lift_to_path([1.0], u, 5) for u in range(1, 6)), PositionSignal(np.zeros(5)))
    assert total.values[:, 0].tolist() == [1.0] * 5
    with pytest.raises(GroupError):
        lift_to_path([1.0], 0, 4)


def test_narrow_to_vertex_round_trips():
    g = cycle_graph(6)
    cyc = make_neuron(SubgraphInstance("cycle", (2, 3, 4, 5, 6, 1), g))
    pth = make_neuron(SubgraphInstance("path", (4, 5, 6), g))
    c = np.array([0.3, -1.1])
    for z, v in enumerate(cyc.instance.traversal):
        a = Activation(cyc, lift_to_cycle(c, z, 6))
        np.testing.assert_array_equal(narrow_to_vertex(a, v), c)
    for u, v in enumerate(pth.instance.traversal, start=1):
        a = Activation(pth, lift_to_path(c, u, 3))
        np.testing.assert_array_equal(narrow_to_vertex(a, v), c)
    const = Activation(cyc, GroupFunction.constant(dihedral_group(6), [0.5, 0.5]))
    np.testing.assert_array_equal(narrow_to_vertex(const, 4), [1.0, 1.0])
    with pytest.raises(Exception):
        narrow_to_vertex(Activation(pth, lift_to_path(c, 1, 3)), 1)


def test_activation_shape_checks():
    g = cycle_graph(5)
    cyc = make_neuron(SubgraphInstance("cycle", (1, 2, 3, 4, 5), g))
    with pytest.raises(GroupError):
        Activation(cyc, PositionSignal(np.zeros((5, 1))))
    with pytest.raises(GroupError):
        Activation(cyc, GroupFunction.zeros(dihedral_group(6)))


def test_symmetry_groups_by_kind():
    g = cycle_graph(5)
    assert len(make_neuron(SubgraphInstance("cycle", (1, 2, 3, 4, 5), g)).symmetry) == 10
    assert len(path_symmetry(4)) == 2
    assert len(make_neuron(enumerate_stars(g)[0]).symmetry) == 1
    with pytest.raises(GroupError):
        make_neuron(SubgraphInstance("cycle", (1, 2, 3, 4, 5), g), Permutation((2, 1, 3, 4, 5)))


# --- aligned convolution ----------------------------------------------------


def test_aligned_convolve_identity_filter():
    rng = np.random.default_rng(1)
    g = cycle_graph(5)
    spec = make_neuron(SubgraphInstance("cycle", (1, 2, 3, 4, 5), g))
    f = GroupFunction(dihedral_group(5), rng.standard_normal((10, C)))
    delta = np.zeros((10, C, C))
    delta[0] = np.eye(C)
    np.testing.assert_allclose(aligned_convolve(spec, f, delta).values, f.values, atol=1e-15)
    p = make_neuron(SubgraphInstance("path", (1, 2, 3), g))
    s = PositionSignal(rng.standard_normal((3, C)))
    taps = np.zeros((3, C, C))
    taps[0] = np.eye(C)
    np.testing.assert_allclose(aligned_convolve(p, s, taps).values, s.values)


@pytest.mark.parametrize("m", [5, 6])
def test_alignment_independence_exhaustive(m):
    rng = np.random.default_rng(m)
    g = cycle_graph(m)
    inst = SubgraphInstance("cycle", tuple(range(1, m + 1)), g)
    group = dihedral_group(m)
    f = GroupFunction(group, rng.standard_normal((2 * m, C)))
    taps = rng.standard_normal((2 * m, C, C))
    base = aligned_convolve(make_neuron(inst), f, taps).values
    for gamma in group.elements:
        out = aligned_convolve(make_neuron(inst, gamma), f, taps).values
        np.testing.assert_allclose(out, base, rtol=0, atol=1e-12)


def test_alignment_independence_on_paths():
    rng = np.random.default_rng(2)
    inst = SubgraphInstance("path", (1, 2, 3, 4), path_graph(4))
    f = PositionSignal(rng.standard_normal((4, C)))
    taps = rng.standard_normal((3, C, C))
    outs = [aligned_convolve(make_neuron(inst, b), f, taps).values
            for b in path_symmetry(4).elements]
    np.testing.assert_allclose(outs[0], outs[1], rtol=0, atol=1e-12)


def test_relabelled_conjugation_identity():
    # T_beta B T_beta^-1 (T_s f) == T_s (T_b B T_b^-1 f) with beta = s b gamma^-1
    rng = np.random.default_rng(3)
    m = 6
    g = cycle_graph(m)
    inst = SubgraphInstance("cycle", tuple(range(1, m + 1)), g)
    group = dihedral_group(m)
    f = GroupFunction(group, rng.standard_normal((2 * m, C)))
    taps = rng.standard_normal((2 * m, C, C))
    for _ in range(10):
        s, b, gamma = (group.elements[i] for i in rng.integers(0, 2 * m, 3))
        beta = compose(s, compose(b, inverse(gamma)))
        lhs = aligned_convolve(make_neuron(inst, beta), act(s, f), taps)
        rhs = act(s, aligned_convolve(make_neuron(inst, b), f, taps))
        np.testing.assert_allclose(lhs.values, rhs.values, rtol=0, atol=1e-12)


# --- whole neurons ----------------------------------------------------------


def test_zero_inputs_zero_weights_give_zero():
    g = cycle_graph(5)
    spec = make_neuron(SubgraphInstance("cycle", (1, 2, 3, 4, 5), g))
    z = np.zeros
    w = ConvBlockWeights(z((C, C)), z(C), z((10, C, C)), z(C), z((10, C, C)), z(C), z((C, C)), z(C))
    zero_in = {v: np.zeros(C) for v in range(1, 6)}
    out = neuron_forward(spec, as_inputs(g, zero_in), w)
    assert not out.values.any()


def test_identity_block_is_relu_of_promoted_input():
    # identity mixes, delta first conv, zero second conv, no biases:
    # relu(0 + relu(x)) ... reduces to relu of the promoted input
    rng = np.random.default_rng(4)
    g = path_graph(4)
    spec = make_neuron(SubgraphInstance("path", (1, 2, 3, 4), g))
    eye, z = np.eye(C), np.zeros(C)
    delta = np.zeros((3, C, C))
    delta[0] = eye
    w = ConvBlockWeights(eye, z, delta, z, np.zeros((3, C, C)), z, eye, z)
    x = PositionSignal(rng.standard_normal((4, C)))
    out = neuron_forward(spec, [(spec, Activation(spec, x))], w)
    np.testing.assert_array_equal(out.values, np.maximum(x.values, 0))


def test_star_neuron_on_p3_center():
    rng = np.random.default_rng(5)
    g = path_graph(3)
    h = vertex_inputs(g, rng)
    star = make_neuron(enumerate_stars(g)[1])
    assert star.instance.traversal == (2, 1, 3)
    w = StarWeights(rng.standard_normal((C, C)), rng.standard_normal(C))
    out = neuron_forward(star, as_inputs(g, h), w)
    expect = np.maximum((h[1] + h[3]) @ w.w + w.b, 0)
    np.testing.assert_allclose(out.values, expect, atol=1e-14)


def _dense_star_route(traversal, sources, w):
    """Promote each narrowed input into S_m, convolve with a constant filter, renormalise."""
    m = len(traversal)
    big = symmetric_group(m)
    total = GroupFunction.zeros(big, C)
    unit = None
    for positions, value in sources:
        k = len(positions)
        g = GroupFunction.constant(symmetric_group(k), value)
        total = total + promote(g, OrderedSubset(positions, m), m)
        unit = math.factorial(k) * math.factorial(m - k)
    ones = np.tile(np.eye(C).ravel(), (len(big), 1))
    pooled = group_convolve(total, GroupFunction(big, ones)).values[0]
    return np.maximum(pooled / unit @ w.w + w.b, 0)


def test_star_route_matches_dense_symmetric_group_construction():
    rng = np.random.default_rng(6)
    g = LabeledGraph.from_edges(5, [(1, 2), (1, 3), (1, 4), (4, 5), (2, 3)])
    stars = enumerate_stars(g)
    center = make_neuron(stars[0])
    assert center.instance.traversal == (1, 2, 3, 4)
    w = StarWeights(rng.standard_normal((C, C)), rng.standard_normal(C) * 0.1)
    h = vertex_inputs(g, rng)

    from_vertices = neuron_forward(center, as_inputs(g, h), w).values
    sources = [((center.instance.position(u) + 1,), h[u]) for u in (2, 3, 4)]
    np.testing.assert_allclose(from_vertices, _dense_star_route((1, 2, 3, 4), sources, w),
                               rtol=0, atol=1e-12)

    star_in = []
    vals = {}
    for inst in stars:
        spec = make_neuron(inst)
        vals[inst.traversal[0]] = rng.standard_normal(C)
        star_in.append((spec, Activation(spec, vals[inst.traversal[0]])))
    from_stars = neuron_forward(center, star_in, w).values
    sources = [((1, center.instance.position(u) + 1), vals[u]) for u in (2, 3, 4)]
    np.testing.assert_allclose(from_stars, _dense_star_route((1, 2, 3, 4), sources, w),
                               rtol=0, atol=1e-12)


def test_unknown_pairing_is_rejected():
    g = cycle_graph(6)
    p1 = make_neuron(SubgraphInstance("path", (1, 2, 3), g))
    p2 = make_neuron(SubgraphInstance("path", (2, 3, 4), g))
    act_in = Activation(p2, PositionSignal(np.ones((3, C))))
    with pytest.raises(GroupError, match="unknown kind pairing"):
        neuron_forward(p1, [(p2, act_in)], random_block(np.random.default_rng(0), "path", 3))


def test_vertex_neuron_mean_and_sum():
    g = cycle_graph(6)
    v = make_neuron(enumerate_vertices(g)[0])
    paths = [make_neuron(SubgraphInstance("path", t, g)) for t in [(1, 2, 3), (6, 1, 2)]]
    vals = [np.array([1.0, 2.0]), np.array([3.0, 5.0])]
    ins = [(v, Activation(v, np.array([10.0, 10.0])))]
    for spec, val, pos in zip(paths, vals, (1, 2)):
        ins.append((spec, Activation(spec, lift_to_path(val, pos, 3))))
    np.testing.assert_allclose(neuron_forward(v, ins, aggregation="mean").values, [12.0, 13.5])
    np.testing.assert_allclose(neuron_forward(v, ins, aggregation="sum").values, [14.0, 17.0])
    per_kind = neuron_forward(v, ins, aggregation={"path": "mean", "cycle": "sum"})
    np.testing.assert_allclose(per_kind.values, [12.0, 13.5])


def _cycle_output(g, traversal, h, w, alignment=None):
    spec = make_neuron(SubgraphInstance("cycle", traversal, g), alignment)
    return neuron_forward(spec, as_inputs(g, h), w).data


@pytest.mark.parametrize("m", [5, 6])
def test_cycle_neuron_reindexing(m):
    # rotating or reversing the reference traversal moves the output by a D_m element
    rng = np.random.default_rng(m)
    g = cycle_graph(m)
    h = vertex_inputs(g, rng)
    w = random_block(rng, "cycle", m)
    trav = tuple(range(1, m + 1))
    base = _cycle_output(g, trav, h, w)
    group = dihedral_group(m)
    from autobahn.groupfn import rotation

    for a in range(m):
        moved = _cycle_output(g, trav[a:] + trav[:a], h, w)
        np.testing.assert_allclose(moved.values, act(rotation(m, -a), base).values,
                                   rtol=0, atol=1e-12)
    flipped = _cycle_output(g, (trav[0],) + trav[:0:-1], h, w)
    assert any(
        np.allclose(flipped.values, act(s, base).values, rtol=0, atol=1e-12)
        for s in group.elements[m:]
    )
    # the alignment choice never changes the output
    for b in group.elements:
        np.testing.assert_allclose(_cycle_output(g, trav, h, w, b).values, base.values,
                                   rtol=0, atol=1e-12)


def test_path_neuron_reversal():
    rng = np.random.default_rng(7)
    g = path_graph(5)
    h = vertex_inputs(g, rng)
    w = random_block(rng, "path", 4)
    fwd = make_neuron(SubgraphInstance("path", (1, 2, 3, 4), g))
    bwd = make_neuron(SubgraphInstance("path", (4, 3, 2, 1), g))
    a = neuron_forward(fwd, as_inputs(g, h), w).values
    b = neuron_forward(bwd, as_inputs(g, h), w).values
    np.testing.assert_allclose(b, a[::-1], rtol=0, atol=1e-12)


def test_trace_records_each_step():
    rng = np.random.default_rng(8)
    g = path_graph(3)
    spec = make_neuron(SubgraphInstance("path", (1, 2, 3), g))
    trace = {}
    neuron_forward(spec, as_inputs(g, vertex_inputs(g, rng)), random_block(rng, "path", 3),
                   trace=trace)
    assert set(trace) == {"spec", "t1", "t2", "t3", "t4"}
    assert len(trace["t1"]) == 3
