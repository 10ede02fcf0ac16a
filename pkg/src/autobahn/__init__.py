"""Automorphism-based graph neural networks on paths and cycles."""

from .graphcore import LabeledGraph, SubgraphInstance, permute_graph
from .model import ModelConfig, init_params, predict
from .permgroup import Permutation

__all__ = [
    "LabeledGraph",
    "SubgraphInstance",
    "permute_graph",
    "ModelConfig",
    "init_params",
    "predict",
    "Permutation",
]

__version__ = "0.1.0"
