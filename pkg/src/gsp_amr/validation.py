"""Input coercion and checks for the estimator and CLI."""

from __future__ import annotations

from typing import Any, Iterable, List, Mapping, Optional, Sequence

from .amr import AmrGraph, parse_penman
from .corpus import AnnotatedSentence, DataError, fallback_annotate

__all__ = ["check_sentences", "check_graphs", "check_consistent_length", "check_alignments"]


def _as_sentence(item: Any, k: int) -> AnnotatedSentence:
    if isinstance(item, AnnotatedSentence):
        return item
    if isinstance(item, str):
        if not item.strip():
            raise DataError(f"sentence {k} is empty")
        return fallback_annotate(item)
    if isinstance(item, Mapping):
        return AnnotatedSentence.from_json(dict(item))
    if isinstance(item, (list, tuple)) and all(isinstance(t, str) for t in item):
        if not item:
            raise DataError(f"sentence {k} has no tokens")
        return fallback_annotate(list(item))
    raise TypeError(f"sentence {k}: expected AnnotatedSentence, str, token list or dict, got {type(item).__name__}")


def check_sentences(X: Iterable[Any]) -> List[AnnotatedSentence]:
    """Coerce sentences to ``AnnotatedSentence``.

    Accepts annotated sentences, whitespace-tokenized strings, token lists
    and JSON-style records; the latter three go through the fallback
    annotator when lemma/POS/NER are missing.
    """
    if isinstance(X, (str, AnnotatedSentence)):
        raise TypeError("expected a sequence of sentences, got a single sentence")
    out = [_as_sentence(item, k) for k, item in enumerate(X)]
    if not out:
        raise DataError("no sentences given")
    return out


def check_graphs(y: Iterable[Any]) -> List[AmrGraph]:
    """Coerce gold graphs, parsing PENMAN strings (one graph each)."""
    if isinstance(y, (str, AmrGraph)):
        raise TypeError("expected a sequence of graphs, got a single graph")
    out = []
    for k, item in enumerate(y):
        if isinstance(item, AmrGraph):
            out.append(item)
        elif isinstance(item, str):
            graphs = parse_penman(item)
            if len(graphs) != 1:
                raise DataError(f"graph {k}: expected one PENMAN graph, found {len(graphs)}")
            out.append(graphs[0])
        else:
            raise TypeError(f"graph {k}: expected AmrGraph or PENMAN string, got {type(item).__name__}")
    if not out:
        raise DataError("no graphs given")
    return out


def check_consistent_length(*arrays: Optional[Sequence]) -> None:
    lengths = [len(a) for a in arrays if a is not None]
    if len(set(lengths)) > 1:
        raise DataError(f"inconsistent numbers of samples: {lengths}")


def check_alignments(alignments: Optional[Mapping], graphs: Sequence[AmrGraph]) -> Optional[dict]:
    """Alignments keyed by graph id; every key must name a training graph."""
    if alignments is None:
        return None
    ids = {g.metadata.get("id") for g in graphs}
    unknown = sorted(set(alignments) - ids)
    if unknown:
        raise DataError(f"alignments for unknown graph ids: {unknown[:5]}")
    return {k: [(int(i), str(n)) for i, n in v] for k, v in alignments.items()}
