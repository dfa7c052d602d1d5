"""Vocabularies, the word-to-concept map table and postprocessing tables."""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .amr import STOP, AmrGraph, inverse_relation
from .corpus import AnnotatedSentence, DataError
from .nn import stable_hash

__all__ = ["Vocab", "VocabBundle", "build_vocabularies", "SentenceFeatures", "sentence_features",
           "coverage_report", "PAD", "UNK", "BOS", "SENSE"]

PAD, UNK, BOS = "<pad>", "<unk>", "<bos>"
BOS_CHAR = "▷"
SENSE = re.compile(r"^(.+)-(\d\d)$")


class Vocab:
    """String <-> index table with ``<pad>`` at 0 and ``<unk>`` at 1."""

    def __init__(self, items: Iterable[str] = (), extra: Sequence[str] = ()):
        self.itos: List[str] = [PAD, UNK]
        self.stoi: Dict[str, int] = {PAD: 0, UNK: 1}
        for s in list(extra) + list(items):
            self.add(s)

    def add(self, s: str) -> int:
        if s not in self.stoi:
            self.stoi[s] = len(self.itos)
            self.itos.append(s)
        return self.stoi[s]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, s):
        return s in self.stoi

    def index(self, s: str) -> int:
        return self.stoi.get(s, 1)

    def __getitem__(self, i: int) -> str:
        return self.itos[i]

    @classmethod
    def from_counts(cls, counts: Counter, min_freq: int = 1, extra: Sequence[str] = ()) -> "Vocab":
        items = sorted((s for s, c in counts.items() if c >= min_freq), key=lambda s: (-counts[s], s))
        return cls(items, extra)


@dataclass
class VocabBundle:
    concept: Vocab
    lemma: Vocab
    pos: Vocab
    ner: Vocab
    char: Vocab
    relation: Vocab
    map_table: Dict[str, str] = field(default_factory=dict)
    sense_table: Dict[str, str] = field(default_factory=dict)
    wiki_table: Dict[str, str] = field(default_factory=dict)

    def map_concept(self, token: str, lemma: str) -> str:
        """m(w): the most frequently aligned concept, else the lemma."""
        return self.map_table.get(token.lower(), lemma)

    def chars(self, s: str) -> List[int]:
        return [self.char.index(ch) for ch in s]

    def to_json(self) -> dict:
        return {
            "concept": self.concept.itos, "lemma": self.lemma.itos, "pos": self.pos.itos, "ner": self.ner.itos,
            "char": self.char.itos, "relation": self.relation.itos, "map_table": self.map_table,
            "sense_table": self.sense_table, "wiki_table": self.wiki_table,
        }

    @classmethod
    def from_json(cls, d: dict) -> "VocabBundle":
        def v(items):
            voc = Vocab()
            for s in items:
                voc.add(s)
            return voc

        return cls(v(d["concept"]), v(d["lemma"]), v(d["pos"]), v(d["ner"]), v(d["char"]), v(d["relation"]),
                   dict(d["map_table"]), dict(d["sense_table"]), dict(d["wiki_table"]))

    def hash(self) -> str:
        return stable_hash(self.to_json())


def _name_key(graph: AmrGraph, node_id: str) -> Optional[str]:
    for e in graph.edges:
        if e.head == node_id and e.relation == ":name":
            ops = sorted((x.relation, graph.node(x.child).concept) for x in graph.edges
                         if x.head == e.child and x.relation.startswith(":op"))
            return " ".join(c.strip('"') for _, c in ops) or None
    return None


def build_vocabularies(pairs: Sequence[Tuple[AnnotatedSentence, AmrGraph]],
                       alignments: Optional[Mapping[str, Sequence[Tuple[int, str]]]] = None,
                       min_concept_freq: int = 1, min_token_freq: int = 1) -> VocabBundle:
    if not pairs:
        raise DataError("cannot build vocabularies from an empty corpus")
    concepts, lemmas, pos, ner, chars, rels = Counter(), Counter(), Counter(), Counter(), Counter(), Counter()
    aligned: Dict[str, Counter] = defaultdict(Counter)
    senses: Dict[str, Counter] = defaultdict(Counter)
    wikis: Dict[str, Counter] = defaultdict(Counter)
    for sent, g in pairs:
        lemmas.update(sent.lemmas)
        pos.update(sent.pos)
        ner.update(sent.ner)
        for s in list(sent.tokens) + list(sent.lemmas):
            chars.update(s)
        for n in g.nodes:
            concepts[n.concept] += 1
            chars.update(n.concept)
            m = SENSE.match(n.concept)
            if m and not n.is_constant:
                senses[m.group(1)][m.group(2)] += 1
        for e in g.edges:
            rels[e.relation] += 1
            rels[inverse_relation(e.relation)] += 1
            if e.relation == ":wiki":
                key = _name_key(g, e.head)
                if key:
                    wikis[key][g.node(e.child).concept] += 1
        if alignments is not None:
            gid = g.metadata.get("id", sent.graph_id)
            for tok_idx, node_id in alignments.get(gid, ()):
                if not 0 <= tok_idx < len(sent.tokens):
                    raise DataError(f"alignment token index {tok_idx} out of range in {gid!r}")
                try:
                    concept = g.node(node_id).concept
                except KeyError:
                    raise DataError(f"alignment references unknown node {node_id!r} in {gid!r}") from None
                aligned[sent.tokens[tok_idx].lower()][concept] += 1
    chars[BOS_CHAR] += 1
    map_table = {w: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for w, c in sorted(aligned.items())}
    sense_table = {lemma: "-" + min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
                   for lemma, c in sorted(senses.items())}
    wiki_table = {k: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for k, c in sorted(wikis.items())}
    concepts.pop(STOP, None)
    return VocabBundle(
        concept=Vocab.from_counts(concepts, min_concept_freq, extra=[STOP]),
        lemma=Vocab.from_counts(lemmas, min_token_freq, extra=[BOS]),
        pos=Vocab.from_counts(pos, 1, extra=[BOS]),
        ner=Vocab.from_counts(ner, 1, extra=[BOS]),
        char=Vocab.from_counts(chars, 1),
        relation=Vocab.from_counts(rels, 1),
        map_table=map_table,
        sense_table=sense_table,
        wiki_table=wiki_table,
    )


@dataclass
class SentenceFeatures:
    """Id arrays for one sentence with the ``<bos>`` token at position 0."""

    lemma_ids: np.ndarray
    pos_ids: np.ndarray
    ner_ids: np.ndarray
    chars: List[List[int]]
    tokens: List[str]
    mapped: List[str]
    sentence: AnnotatedSentence

    def __len__(self):
        return len(self.tokens)


def sentence_features(sent: AnnotatedSentence, bundle: VocabBundle, unk_rate: float = 0.0,
                      rng: Optional[np.random.Generator] = None) -> SentenceFeatures:
    """Look up ids; with ``unk_rate`` > 0, lemma/POS/NER ids are independently replaced by UNK."""
    lem = [bundle.lemma.index(BOS)] + [bundle.lemma.index(x) for x in sent.lemmas]
    pos = [bundle.pos.index(BOS)] + [bundle.pos.index(x) for x in sent.pos]
    ner = [bundle.ner.index(BOS)] + [bundle.ner.index(x) for x in sent.ner]
    ids = [np.array(a, dtype=np.int64) for a in (lem, pos, ner)]
    if unk_rate > 0 and rng is not None:
        for arr in ids:
            drop = rng.random(len(arr)) < unk_rate
            drop[0] = False
            arr[drop] = 1
    chars = [bundle.chars(BOS_CHAR)] + [bundle.chars(t) for t in sent.tokens]
    mapped = [bundle.map_concept(t, l) for t, l in zip(sent.tokens, sent.lemmas)]
    return SentenceFeatures(ids[0], ids[1], ids[2], chars, list(sent.tokens), mapped, sent)


def coverage_report(pairs: Sequence[Tuple[AnnotatedSentence, AmrGraph]], bundle: VocabBundle
                    ) -> List[Tuple[str, str]]:
    """(graph id, concept) for gold concepts unreachable by copy, map or generation."""
    missing = []
    for sent, g in pairs:
        copyable = set(sent.tokens)
        mappable = {bundle.map_concept(t, l) for t, l in zip(sent.tokens, sent.lemmas)}
        for n in g.nodes:
            c = n.concept
            if c not in copyable and c not in mappable and c not in bundle.concept:
                missing.append((g.metadata.get("id", sent.graph_id or ""), c))
    return missing
