import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autobahn.graphcore import LabeledGraph
from autobahn.harness import random_molecule
from autobahn.io import (
    GraphFileError,
    parse_graph,
    read_dataset,
    read_graph,
    read_run_config,
    serialize_graph,
    write_dataset,
    write_graph,
)

TRIANGLE = """\
n: 3
vertex_labels: [0, 1, 0]
edges:
  - [1, 2, 0]
  - [2, 3, 1]
  - [3, 1, 0]
"""


def test_parse_basic_graph():
    g = parse_graph(TRIANGLE)
    assert g.n == 3 and g.vertex_labels == (0, 1, 0)
    assert g.edge_label(2, 3) == 1


def test_json_is_accepted():
    g = parse_graph('{"n": 2, "vertex_labels": [1, 1], "edges": [[1, 2, 3]]}')
    assert g.edge_label(1, 2) == 3


def test_target_parsing():
    g, t = parse_graph(TRIANGLE + "target: 1.5e0\n", want_target=True)
    assert t == 1.5
    _, t = parse_graph(TRIANGLE + "target: 2\n", want_target=True)
    assert t == 2.0
    for bad in ("target: .nan", "target: inf", "target: '1.0'", "target: [1]"):
        with pytest.raises(GraphFileError):
            parse_graph(TRIANGLE + bad + "\n", want_target=True)


@pytest.mark.parametrize(
    "text, where, fragment",
    [
        ("n: 2\nvertex_labels: [0, 0]\nedges:\n  - [1, 1, 0]\n", ":4:5:", "self-loop"),
        ("n: 2\nvertex_labels: [0, 0]\nedges:\n  - [1, 2, 0]\n  - [2, 1, 0]\n", ":5:5:",
         "first given at line 4"),
        ("n: 2\nvertex_labels: [0, 0]\nedges:\n  - [1, 3, 0]\n", ":4:5:", "outside 1..2"),
        ("n: 2\nvertex_labels: [0]\nedges: []\n", ":2:16:", "1 vertex labels"),
        ("n: two\nvertex_labels: []\nedges: []\n", ":1:4:", "decimal integer"),
        ("n: 1\nvertex_labels: [0]\n", ":1:1:", "missing key 'edges'"),
        ("n: 1\nvertex_labels: [0]\nedges: []\ncolour: red\n", ":4:1:", "unexpected key"),
        ("n: 1\nvertex_labels: [0]\nedges: [[1, 2]]\n", ":3:9:", "triple"),
        ("n: [1\n", "", ""),
        ("- 1\n", ":1:1:", "mapping"),
    ],
)
def test_errors_carry_locations(text, where, fragment):
    with pytest.raises(GraphFileError) as e:
        parse_graph(text, "g.yaml")
    msg = str(e.value)
    assert msg.startswith("g.yaml")
    assert where in msg and fragment in msg


def test_target_only_in_datasets():
    with pytest.raises(GraphFileError, match="unexpected key 'target'"):
        parse_graph(TRIANGLE + "target: 1\n")
    with pytest.raises(GraphFileError, match="missing key 'target'"):
        parse_graph(TRIANGLE, want_target=True)


def test_empty_graph_round_trip():
    g = LabeledGraph.from_edges(0, [])
    assert parse_graph(serialize_graph(g)) == g


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.one_of(st.none(), st.floats(-1e6, 1e6)))
def test_round_trip(seed, target):
    rng = np.random.default_rng(seed)
    g = random_molecule(rng, int(rng.integers(1, 14)))
    text = serialize_graph(g, target)
    if target is None:
        h, t = parse_graph(text), None
    else:
        h, t = parse_graph(text, want_target=True)
    assert h == g and t == target
    assert serialize_graph(h, t) == text


def test_files_and_datasets(tmp_path):
    g = parse_graph(TRIANGLE)
    write_graph(tmp_path / "a.yaml", g)
    before = (tmp_path / "a.yaml").read_bytes()
    assert read_graph(tmp_path / "a.yaml") == g
    assert (tmp_path / "a.yaml").read_bytes() == before
    with pytest.raises(GraphFileError):
        read_graph(tmp_path / "nope.yaml")

    d = tmp_path / "data"
    paths = write_dataset(d, [(g, 1.0), (g, 2.5)])
    assert [p.name for p in paths] == ["graph_0000.yaml", "graph_0001.yaml"]
    (d / "notes.txt").write_text("ignored")
    recs = read_dataset(d)
    assert [(name, t) for name, _, t in recs] == [("graph_0000.yaml", 1.0), ("graph_0001.yaml", 2.5)]
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(GraphFileError, match="no graph records"):
        read_dataset(empty)
    with pytest.raises(GraphFileError, match="not a directory"):
        read_dataset(tmp_path / "a.yaml")


def test_run_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("model:\n  channels: 8\nschedule:\n  epochs: 3\nvalidation_fraction: 0.2\n")
    cfg = read_run_config(p)
    assert cfg == {"model": {"channels": 8}, "schedule": {"epochs": 3}, "validation_fraction": 0.2}
    p.write_text("")
    assert read_run_config(p)["validation_fraction"] == 0.0
    for bad in ("optimizer: adam\n", "model: 3\n", "validation_fraction: 1.5\n", "model: [\n"):
        p.write_text(bad)
        with pytest.raises(GraphFileError):
            read_run_config(p)
