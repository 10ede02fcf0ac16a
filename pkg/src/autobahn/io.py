"""Graph, dataset and run-config files.

A graph file is a YAML (or JSON) mapping::

    n: 3
    vertex_labels: [0, 1, 0]
    edges:
      - [1, 2, 0]
      - [2, 3, 1]
    target: 1.0        # dataset records only

Errors carry the file name, line and column of the offending node.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Mapping

import yaml

from .graphcore import GraphError, LabeledGraph

__all__ = [
    "GraphFileError",
    "parse_graph",
    "read_graph",
    "serialize_graph",
    "write_graph",
    "read_dataset",
    "write_dataset",
    "read_run_config",
]

GRAPH_SUFFIXES = (".yaml", ".yml", ".json")


class GraphFileError(ValueError):
    pass


def _where(source: str, node) -> str:
    mark = node.start_mark
    return f"{source}:{mark.line + 1}:{mark.column + 1}"


def _fail(source: str, node, msg: str):
    raise GraphFileError(f"{_where(source, node)}: {msg}")


_INT_TAG = "tag:yaml.org,2002:int"


def _int(source: str, node, what: str) -> int:
    if isinstance(node, yaml.ScalarNode) and node.tag == _INT_TAG:
        try:
            return int(node.value.replace("_", ""), 10)
        except ValueError:
            pass
    shown = node.value if isinstance(node, yaml.ScalarNode) else type(node).__name__
    _fail(source, node, f"{what} must be a decimal integer, got {shown!r}")


def _mapping(source: str, root) -> dict[str, tuple[Any, Any]]:
    if not isinstance(root, yaml.MappingNode):
        raise GraphFileError(f"{_where(source, root)}: top level must be a mapping")
    out = {}
    for knode, vnode in root.value:
        key = knode.value
        if key in out:
            _fail(source, knode, f"duplicate key {key!r}")
        out[key] = (knode, vnode)
    return out


def parse_graph(text: str, source: str = "<string>", *, want_target: bool = False):
    """Parse graph text; returns the graph, or ``(graph, target)`` with ``want_target``."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        problem = getattr(e, "problem", None) or str(e)
        raise GraphFileError(f"{where}: {problem}") from None
    if root is None:
        raise GraphFileError(f"{source}: empty document")
    fields = _mapping(source, root)
    allowed = {"n", "vertex_labels", "edges"} | ({"target"} if want_target else set())
    for key, (knode, _) in fields.items():
        if key not in allowed:
            _fail(source, knode, f"unexpected key {key!r}")
    for key in ("n", "vertex_labels", "edges") + (("target",) if want_target else ()):
        if key not in fields:
            raise GraphFileError(f"{_where(source, root)}: missing key {key!r}")

    n_node = fields["n"][1]
    n = _int(source, n_node, "n")
    if n < 0:
        _fail(source, n_node, "n must be non-negative")

    lab_node = fields["vertex_labels"][1]
    if not isinstance(lab_node, yaml.SequenceNode):
        _fail(source, lab_node, "vertex_labels must be a list")
    labels = [_int(source, x, "vertex label") for x in lab_node.value]
    if len(labels) != n:
        _fail(source, lab_node, f"{len(labels)} vertex labels for n = {n}")
    for x, node in zip(labels, lab_node.value):
        if x < 0:
            _fail(source, node, "vertex labels must be non-negative")

    edge_node = fields["edges"][1]
    if not isinstance(edge_node, yaml.SequenceNode):
        _fail(source, edge_node, "edges must be a list")
    edges, seen = [], {}
    for e in edge_node.value:
        if not isinstance(e, yaml.SequenceNode) or len(e.value) != 3:
            _fail(source, e, "each edge must be a [u, v, label] triple")
        u, v, lab = (_int(source, x, "edge entry") for x in e.value)
        if not (1 <= u <= n and 1 <= v <= n):
            _fail(source, e, f"edge ({u}, {v}) has an endpoint outside 1..{n}")
        if u == v:
            _fail(source, e, f"self-loop at vertex {u}")
        if lab < 0:
            _fail(source, e, "edge labels must be non-negative")
        key = (min(u, v), max(u, v))
        if key in seen:
            _fail(source, e, f"duplicate edge {key} (first given at line {seen[key]})")
        seen[key] = e.start_mark.line + 1
        edges.append((u, v, lab))
    try:
        g = LabeledGraph(n, tuple(labels), tuple(edges))
    except GraphError as err:
        raise GraphFileError(f"{source}: {err}") from None
    if not want_target:
        return g
    t_node = fields["target"][1]
    target = None
    # plain scalars only; YAML 1.1 leaves forms like 1.5e0 untagged
    if isinstance(t_node, yaml.ScalarNode) and t_node.style is None:
        try:
            target = float(t_node.value.replace("_", ""))
        except ValueError:
            target = None
    if target is None:
        _fail(source, t_node, "target must be a number")
    if not math.isfinite(target):
        _fail(source, t_node, "target must be finite")
    return g, target


def read_graph(path, *, want_target: bool = False):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise GraphFileError(f"{path}: {e.strerror}") from None
    return parse_graph(text, str(path), want_target=want_target)


def serialize_graph(g: LabeledGraph, target: float | None = None) -> str:
    lines = [f"n: {g.n}", "vertex_labels: [" + ", ".join(str(x) for x in g.vertex_labels) + "]"]
    if g.edges:
        lines.append("edges:")
        lines += [f"  - [{u}, {v}, {lab}]" for u, v, lab in g.edges]
    else:
        lines.append("edges: []")
    if target is not None:
        lines.append(f"target: {float(target)!r}")
    return "\n".join(lines) + "\n"


def write_graph(path, g: LabeledGraph, target: float | None = None) -> None:
    Path(path).write_text(serialize_graph(g, target))


def read_dataset(directory) -> list[tuple[str, LabeledGraph, float]]:
    """Every graph file in ``directory`` with its target, sorted by file name."""
    d = Path(directory)
    if not d.is_dir():
        raise GraphFileError(f"{d}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix in GRAPH_SUFFIXES and p.is_file())
    if not files:
        raise GraphFileError(f"{d}: no graph records (*.yaml, *.yml, *.json)")
    return [(p.name, *read_graph(p, want_target=True)) for p in files]


def write_dataset(directory, records) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(records))))
    paths = []
    for i, (g, target) in enumerate(records):
        p = d / f"graph_{i:0{width}d}.yaml"
        write_graph(p, g, target)
        paths.append(p)
    return paths


def read_run_config(path) -> dict:
    """A training config: optional ``model``, ``schedule`` and ``validation_fraction`` sections."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise GraphFileError(f"{path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise GraphFileError(f"{path}: cannot parse config ({e})") from None
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise GraphFileError(f"{path}: config must be a mapping")
    unknown = set(data) - {"model", "schedule", "validation_fraction"}
    if unknown:
        raise GraphFileError(f"{path}: unknown config sections {sorted(unknown)}")
    for key in ("model", "schedule"):
        if key in data and not isinstance(data[key], Mapping):
            raise GraphFileError(f"{path}: {key} must be a mapping")
    frac = data.get("validation_fraction", 0.0)
    if not isinstance(frac, (int, float)) or not 0.0 <= frac < 1.0:
        raise GraphFileError(f"{path}: validation_fraction must be in [0, 1)")
    return {
        "model": dict(data.get("model") or {}),
        "schedule": dict(data.get("schedule") or {}),
        "validation_fraction": float(frac),
    }
