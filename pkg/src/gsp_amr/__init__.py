"""Top-down AMR parsing by graph spanning, with core-semantics Smatch metrics."""

from .amr import AmrGraph, Edge, Node, OrderStrategy, SpanningAction, linearize, parse_penman, rebuild, serialize_penman
from .config import TrainConfig
from .metrics import corpus_scores, smatch, smatch_bruteforce, smatch_core, smatch_weighted

__version__ = "0.1.0"

__all__ = [
    "AmrGraph",
    "Edge",
    "Node",
    "OrderStrategy",
    "SpanningAction",
    "TrainConfig",
    "corpus_scores",
    "linearize",
    "parse_penman",
    "rebuild",
    "serialize_penman",
    "smatch",
    "smatch_bruteforce",
    "smatch_core",
    "smatch_weighted",
]
