"""Reading AMR files, annotation sidecars and alignment files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .amr import AmrGraph, parse_penman

__all__ = [
    "AnnotatedSentence",
    "DataError",
    "fallback_annotate",
    "read_annotations",
    "write_annotations",
    "read_alignments",
    "ingest",
]


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: Tuple[str, ...]
    lemmas: Tuple[str, ...]
    pos: Tuple[str, ...]
    ner: Tuple[str, ...]
    text: str = ""
    graph_id: Optional[str] = None

    def __post_init__(self):
        for name in ("tokens", "lemmas", "pos", "ner"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.tokens)
        if n < 1:
            raise DataError(f"sentence {self.graph_id!r} has no tokens")
        lengths = {len(self.lemmas), len(self.pos), len(self.ner)}
        if lengths != {n}:
            raise DataError(
                f"sentence {self.graph_id!r}: tokens/lemmas/pos/ner lengths differ "
                f"({n}, {len(self.lemmas)}, {len(self.pos)}, {len(self.ner)})"
            )
        if not self.text:
            object.__setattr__(self, "text", " ".join(self.tokens))

    def __len__(self):
        return len(self.tokens)

    def to_json(self) -> dict:
        return {"id": self.graph_id, "tokens": list(self.tokens), "lemmas": list(self.lemmas),
                "pos": list(self.pos), "ner": list(self.ner), "text": self.text}

    @classmethod
    def from_json(cls, record: dict) -> "AnnotatedSentence":
        if "tokens" not in record:
            raise DataError(f"annotation record {record.get('id')!r} has no tokens")
        tokens = record["tokens"]
        if not all(k in record for k in ("lemmas", "pos", "ner")):
            base = fallback_annotate(tokens, graph_id=record.get("id"))
            record = {**base.to_json(), **record}
        return cls(tokens, record["lemmas"], record["pos"], record["ner"], record.get("text", ""),
                   record.get("id"))


def fallback_annotate(tokens: Sequence[str] | str, graph_id: Optional[str] = None) -> AnnotatedSentence:
    """Lowercased tokens as lemmas, a single ``X`` POS tag and ``O`` NER tags."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = list(tokens)
    n = len(tokens)
    return AnnotatedSentence(tokens, [t.lower() for t in tokens], ["X"] * n, ["O"] * n, graph_id=graph_id)


def read_annotations(path) -> List[AnnotatedSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AnnotatedSentence.from_json(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSON ({exc.msg})") from exc
    return out


def write_annotations(path, sentences: Iterable[AnnotatedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_alignments(path) -> Dict[str, List[Tuple[int, str]]]:
    """Blocks of ``# ::id <id>`` followed by ``token_index<TAB>node_id`` lines."""
    out: Dict[str, List[Tuple[int, str]]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("::id"):
                    current = body[4:].strip()
                    out.setdefault(current, [])
                continue
            if current is None:
                raise DataError(f"{path}:{lineno}: alignment line before any '# ::id'")
            try:
                idx, node = line.split("\t")
                out[current].append((int(idx), node.strip()))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: expected 'token_index<TAB>node_id'") from exc
    return out


def _graph_tokens(g: AmrGraph) -> List[str]:
    text = g.metadata.get("tok") or g.metadata.get("snt")
    if not text:
        raise DataError(f"graph {g.metadata.get('id')!r} has neither ::tok nor ::snt metadata")
    return text.split()


def ingest(amr_file, annotation_file=None) -> List[Tuple[AnnotatedSentence, AmrGraph]]:
    """Pair PENMAN graphs with their sentence annotations by ``::id``."""
    graphs = parse_penman(Path(amr_file).read_text(encoding="utf-8"))
    if annotation_file is None:
        pairs = []
        for k, g in enumerate(graphs):
            gid = g.metadata.get("id", str(k))
            s = fallback_annotate(_graph_tokens(g), graph_id=gid)
            if g.metadata.get("snt"):
                s = AnnotatedSentence(s.tokens, s.lemmas, s.pos, s.ner, g.metadata["snt"], gid)
            pairs.append((s, g))
        return pairs
    annotations = read_annotations(annotation_file)
    by_id = {a.graph_id: a for a in annotations}
    ids = [g.metadata.get("id") for g in graphs]
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"graphs without annotations: {missing}")
    extra = sorted(set(by_id) - set(ids), key=str)
    if extra:
        raise DataError(f"annotations without graphs: {extra}")
    return [(by_id[g.metadata.get("id")], g) for g in graphs]
