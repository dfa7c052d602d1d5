"""Synthetic graphs and sentence/graph pairs for tests and desk-scale runs."""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence, Tuple

from .amr import AmrGraph, Edge, Node
from .corpus import AnnotatedSentence

__all__ = ["random_graph", "random_corpus", "toy_parallel_corpus", "CONCEPTS", "RELATIONS"]

CONCEPTS = ["want-01", "go-02", "boy", "girl", "see-01", "cat", "big", "earthquake", "strike-01", "time",
            "happy", "prosper-01", "suddenly", "dog", "say-01", "person", "city", "name"]
RELATIONS = [":ARG0", ":ARG1", ":ARG2", ":mod", ":time", ":manner", ":location", ":op1", ":op2", ":name"]
CONSTANTS = ["-", "1", "2", '"York"', '"Paris"']


def random_graph(rng: random.Random, n_vars: int, concepts: Sequence[str] = CONCEPTS,
                 relations: Sequence[str] = RELATIONS, reentrancy: float = 0.3, constants: float = 0.2,
                 inverse: float = 0.2, max_constants: int = 2) -> AmrGraph:
    """Random connected graph with ``n_vars`` variables.

    Tree edges attach each node to an earlier one (sometimes pointing
    upward, as inverse roles do); extra edges add reentrancies, and a few
    constant leaves are hung off random variables.
    """
    if n_vars < 1:
        raise ValueError("need at least one variable")
    ids = [f"v{i}" for i in range(n_vars)]
    nodes = [Node(i, rng.choice(concepts)) for i in ids]
    edges: List[Edge] = []
    seen = set()

    def add(h, c, r):
        key = (h, c, r)
        if h != c and key not in seen:
            seen.add(key)
            edges.append(Edge(h, c, r))

    for k in range(1, n_vars):
        parent = ids[rng.randrange(k)]
        rel = rng.choice(relations)
        if rng.random() < inverse:
            add(ids[k], parent, rel)
        else:
            add(parent, ids[k], rel)
    for _ in range(n_vars):
        if n_vars > 2 and rng.random() < reentrancy:
            a, b = rng.sample(ids, 2)
            add(a, b, rng.choice(relations))
    n_const = 0
    for k in range(n_vars):
        if n_const < max_constants and rng.random() < constants:
            cid = f"c{n_const}"
            n_const += 1
            nodes.append(Node(cid, rng.choice(CONSTANTS), True))
            add(ids[k], cid, rng.choice([":polarity", ":quant", ":op1", ":value"]))
    return AmrGraph(nodes, edges, ids[0])


def random_corpus(n: int, seed: int = 0, min_vars: int = 1, max_vars: int = 8, **kwargs) -> List[AmrGraph]:
    rng = random.Random(seed)
    return [random_graph(rng, rng.randint(min_vars, max_vars), **kwargs).with_metadata(id=f"rand-{k}")
            for k in range(n)]


# ---------------------------------------------------------------------------
# toy grammar: sentence, lemmas and a gold graph with token alignments

_NOUNS = ["boy", "girl", "cat", "dog", "teacher", "student", "doctor", "child", "bird", "horse"]
_ADJS = ["big", "small", "happy", "old"]
_INTRANS = {"sleep": "sleep-01", "run": "run-02", "sing": "sing-01", "dance": "dance-01", "laugh": "laugh-01"}
_TRANS = {"see": "see-01", "like": "like-01", "help": "help-01", "chase": "chase-01", "call": "call-01",
          "visit": "visit-01"}
_CONTROL = {"want": "want-01", "try": "try-01"}


def _third(verb: str) -> str:
    if verb.endswith(("s", "sh", "ch")):
        return verb + "es"
    if verb.endswith("y") and verb[-2] not in "aeiou":
        return verb[:-1] + "ies"
    return verb + "s"


class _Builder:
    def __init__(self):
        self.tokens: List[str] = []
        self.lemmas: List[str] = []
        self.pos: List[str] = []
        self.nodes: List[Node] = []
        self.edges: List[Edge] = []
        self.align: List[Tuple[int, str]] = []

    def word(self, token: str, lemma: str, pos: str, node: Optional[str] = None):
        if node is not None:
            self.align.append((len(self.tokens), node))
        self.tokens.append(token)
        self.lemmas.append(lemma)
        self.pos.append(pos)

    def node(self, concept: str, constant: bool = False) -> str:
        nid = f"x{len(self.nodes)}"
        self.nodes.append(Node(nid, concept, constant))
        return nid

    def edge(self, head: str, child: str, rel: str):
        self.edges.append(Edge(head, child, rel))

    def noun_phrase(self, rng: random.Random, adj_p: float = 0.4) -> str:
        noun = rng.choice(_NOUNS)
        self.word("the", "the", "DT")
        n = self.node(noun)
        if rng.random() < adj_p:
            adj = rng.choice(_ADJS)
            a = self.node(adj)
            self.word(adj, adj, "JJ", a)
            self.edge(n, a, ":mod")
        self.word(noun, noun, "NN", n)
        return n


def _sample(rng: random.Random) -> _Builder:
    b = _Builder()
    kind = rng.choice(["intrans", "trans", "trans", "control", "negated"])
    if kind == "intrans":
        subj = b.noun_phrase(rng)
        lemma = rng.choice(sorted(_INTRANS))
        v = b.node(_INTRANS[lemma])
        b.word(_third(lemma), lemma, "VBZ", v)
        b.edge(v, subj, ":ARG0")
        if rng.random() < 0.4:
            m = b.node("quick-02")
            b.word("quickly", "quickly", "RB", m)
            b.edge(v, m, ":manner")
        root = v
    elif kind == "trans":
        subj = b.noun_phrase(rng)
        lemma = rng.choice(sorted(_TRANS))
        v = b.node(_TRANS[lemma])
        b.word(_third(lemma), lemma, "VBZ", v)
        obj = b.noun_phrase(rng)
        b.edge(v, subj, ":ARG0")
        b.edge(v, obj, ":ARG1")
        root = v
    elif kind == "control":
        subj = b.noun_phrase(rng, adj_p=0.2)
        lemma = rng.choice(sorted(_CONTROL))
        v = b.node(_CONTROL[lemma])
        b.word(_third(lemma), lemma, "VBZ", v)
        b.word("to", "to", "TO")
        inner = rng.choice(sorted(_INTRANS))
        w = b.node(_INTRANS[inner])
        b.word(inner, inner, "VB", w)
        b.edge(v, subj, ":ARG0")
        b.edge(v, w, ":ARG1")
        b.edge(w, subj, ":ARG0")
        root = v
    else:
        subj = b.noun_phrase(rng, adj_p=0.2)
        lemma = rng.choice(sorted(_INTRANS))
        v = b.node(_INTRANS[lemma])
        b.word("does", "do", "VBZ")
        neg = b.node("-", constant=True)
        b.word("not", "not", "RB", neg)
        b.word(lemma, lemma, "VB", v)
        b.edge(v, subj, ":ARG0")
        b.edge(v, neg, ":polarity")
        root = v
    b.root = root
    return b


def toy_parallel_corpus(n: int, seed: int = 0
                        ) -> Tuple[List[Tuple[AnnotatedSentence, AmrGraph]], Dict[str, List[Tuple[int, str]]]]:
    """``n`` distinct sentence/graph pairs plus token-to-node alignments."""
    rng = random.Random(seed)
    pairs, aligns, seen = [], {}, set()
    attempts = 0
    while len(pairs) < n:
        attempts += 1
        if attempts > 100 * n:
            raise RuntimeError("toy grammar cannot produce enough distinct sentences")
        b = _sample(rng)
        text = " ".join(b.tokens)
        if text in seen:
            continue
        seen.add(text)
        gid = f"toy-{len(pairs)}"
        ner = ["O"] * len(b.tokens)
        sent = AnnotatedSentence(b.tokens, b.lemmas, b.pos, ner, text, gid)
        graph = AmrGraph(b.nodes, b.edges, b.root, {"id": gid, "snt": text})
        pairs.append((sent, graph))
        aligns[gid] = list(b.align)
    return pairs, aligns
