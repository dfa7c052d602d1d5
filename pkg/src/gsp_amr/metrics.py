"""Smatch and its core-semantics variants.

Graphs are decomposed into instance, relation and top triples. Variables are
the non-constant nodes; an edge into a constant becomes a relation triple
whose second argument is the literal itself.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .amr import AmrGraph, cut_graph, root_distances

__all__ = [
    "Triple",
    "MatchResult",
    "to_triples",
    "triple_weight",
    "smatch",
    "smatch_bruteforce",
    "smatch_weighted",
    "smatch_core",
    "corpus_scores",
    "root_distance_histogram",
    "MatchSizeError",
    "WEIGHTED_PR_CONVENTION",
]

WEIGHTED_PR_CONVENTION = "mass"
BRUTEFORCE_MAX_VARS = 8
BRUTEFORCE_MAX_MAPPINGS = 5_000_000


class MatchSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Triple:
    kind: str  # "instance" | "relation" | "top"
    relation: str
    arg1: str
    arg2: str
    weight: float = 1.0
    arg2_is_var: bool = False


@dataclass(frozen=True)
class MatchResult:
    precision: float
    recall: float
    f1: float
    mapping: Mapping[str, Optional[str]] = field(default_factory=dict)
    matched: float = 0.0
    pred_total: float = 0.0
    gold_total: float = 0.0


def _prf(matched: float, pred_total: float, gold_total: float, mapping) -> MatchResult:
    p = matched / pred_total if pred_total > 0 else 0.0
    r = matched / gold_total if gold_total > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MatchResult(p, r, f, dict(mapping), matched, pred_total, gold_total)


def triple_weight(d: int, d_thr: int) -> float:
    """Importance of a triple at root distance ``d``; linear decay, clamped to [0, 1]."""
    if d < 0 or d_thr < 1:
        raise ValueError("need d >= 0 and d_thr >= 1")
    return float(max(0, min(d_thr - d, 1)))


def to_triples(graph: AmrGraph, d_thr: Optional[int] = None) -> List[Triple]:
    """Decompose ``graph``; with ``d_thr`` set, weight each triple by root distance."""
    dist = root_distances(graph) if d_thr is not None else None

    def w(*ids: str) -> float:
        if dist is None:
            return 1.0
        return triple_weight(min(dist[i] for i in ids), d_thr)

    triples = []
    for n in graph.nodes:
        if not n.is_constant:
            triples.append(Triple("instance", "instance", n.id, n.concept, w(n.id)))
    for e in graph.edges:
        child = graph.node(e.child)
        if child.is_constant:
            triples.append(Triple("relation", e.relation, e.head, child.concept, w(e.head, e.child)))
        else:
            triples.append(Triple("relation", e.relation, e.head, e.child, w(e.head, e.child), True))
    triples.append(Triple("top", "top", graph.root, "top", w(graph.root)))
    return triples


def _variables(graph: AmrGraph) -> List[str]:
    return [n.id for n in graph.nodes if not n.is_constant]


def _paired_mass(a: Sequence[float], b: Sequence[float]) -> float:
    # optimal sum of min over a pairing: sort both descending
    a = sorted(a, reverse=True)
    b = sorted(b, reverse=True)
    return sum(min(x, y) for x, y in zip(a, b))


class _Matcher:
    """Indexed objective for hill-climbing over variable mappings."""

    def __init__(self, pred: List[Triple], gold: List[Triple], pvars: List[str], gvars: List[str]):
        self.pvars = pvars
        self.gvars = gvars
        pidx = {v: i for i, v in enumerate(pvars)}
        gidx = {v: j for j, v in enumerate(gvars)}
        # unary[i][j]: mass of triples that involve only pred var i and gold var j
        unary_p: Dict[int, Dict[Tuple, List[float]]] = defaultdict(lambda: defaultdict(list))
        unary_g: Dict[int, Dict[Tuple, List[float]]] = defaultdict(lambda: defaultdict(list))
        binary_p: List[Tuple[int, int, str, float]] = []
        binary_g: Dict[Tuple[str, int, int], List[float]] = defaultdict(list)
        for t in pred:
            if t.arg2_is_var:
                binary_p.append((pidx[t.arg1], pidx[t.arg2], t.relation, t.weight))
            else:
                unary_p[pidx[t.arg1]][(t.kind, t.relation, t.arg2)].append(t.weight)
        for t in gold:
            if t.arg2_is_var:
                binary_g[(t.relation, gidx[t.arg1], gidx[t.arg2])].append(t.weight)
            else:
                unary_g[gidx[t.arg1]][(t.kind, t.relation, t.arg2)].append(t.weight)
        n, m = len(pvars), len(gvars)
        self.unary = [[0.0] * m for _ in range(n)]
        for i, keys_i in unary_p.items():
            for j, keys_j in unary_g.items():
                total = 0.0
                for key, ws in keys_i.items():
                    if key in keys_j:
                        total += _paired_mass(ws, keys_j[key])
                self.unary[i][j] = total
        # pred relation triples between variables are unique per (rel, head, child)
        self.binary = binary_p
        self.gold_binary = {k: max(v) for k, v in binary_g.items()}
        self.touching: List[List[int]] = [[] for _ in range(n)]
        for k, (a, b, _, _) in enumerate(binary_p):
            self.touching[a].append(k)
            if b != a:
                self.touching[b].append(k)

    def edge_score(self, k: int, mapping: List[int]) -> float:
        a, b, rel, w = self.binary[k]
        ga, gb = mapping[a], mapping[b]
        if ga < 0 or gb < 0:
            return 0.0
        gw = self.gold_binary.get((rel, ga, gb))
        return min(w, gw) if gw is not None else 0.0

    def score(self, mapping: List[int]) -> float:
        total = sum(self.unary[i][j] for i, j in enumerate(mapping) if j >= 0)
        return total + sum(self.edge_score(k, mapping) for k in range(len(self.binary)))

    def local(self, mapping: List[int], changed: Sequence[int]) -> float:
        ks = set()
        total = 0.0
        for i in changed:
            if mapping[i] >= 0:
                total += self.unary[i][mapping[i]]
            ks.update(self.touching[i])
        return total + sum(self.edge_score(k, mapping) for k in ks)

    def climb(self, mapping: List[int]) -> Tuple[List[int], float]:
        n, m = len(self.pvars), len(self.gvars)
        current = self.score(mapping)
        while True:
            used = set(j for j in mapping if j >= 0)
            best_gain, best_move = 1e-12, None
            for i in range(n):
                before = self.local(mapping, [i])
                old = mapping[i]
                for j in itertools.chain(range(m), [-1]):
                    if j == old or (j >= 0 and j in used):
                        continue
                    mapping[i] = j
                    gain = self.local(mapping, [i]) - before
                    mapping[i] = old
                    if gain > best_gain:
                        best_gain, best_move = gain, ("set", i, j)
            for i in range(n):
                for k in range(i + 1, n):
                    if mapping[i] == mapping[k]:
                        continue
                    before = self.local(mapping, [i, k])
                    mapping[i], mapping[k] = mapping[k], mapping[i]
                    gain = self.local(mapping, [i, k]) - before
                    mapping[i], mapping[k] = mapping[k], mapping[i]
                    if gain > best_gain:
                        best_gain, best_move = gain, ("swap", i, k)
            if best_move is None:
                return mapping, current
            kind, i, j = best_move
            if kind == "set":
                mapping[i] = j
            else:
                mapping[i], mapping[j] = mapping[j], mapping[i]
            current += best_gain

    def smart_start(self) -> List[int]:
        mapping = [-1] * len(self.pvars)
        used = set()
        for i in range(len(self.pvars)):
            ranked = sorted(range(len(self.gvars)), key=lambda j: -self.unary[i][j])
            for j in ranked:
                if self.unary[i][j] > 0 and j not in used:
                    mapping[i] = j
                    used.add(j)
                    break
        return mapping

    def random_start(self, rng: random.Random) -> List[int]:
        n, m = len(self.pvars), len(self.gvars)
        targets = list(range(m))
        rng.shuffle(targets)
        mapping = [-1] * n
        for i, j in zip(rng.sample(range(n), n), targets):
            mapping[i] = j
        return mapping


def _match(pred_t: List[Triple], gold_t: List[Triple], pred: AmrGraph, gold: AmrGraph,
           restarts: int, seed: int) -> MatchResult:
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    pvars, gvars = _variables(pred), _variables(gold)
    matcher = _Matcher(pred_t, gold_t, pvars, gvars)
    rng = random.Random(seed)
    best_map, best = [-1] * len(pvars), -1.0
    starts = [matcher.smart_start()] + [matcher.random_start(rng) for _ in range(restarts)]
    for start in starts:
        mapping, score = matcher.climb(start)
        if score > best + 1e-12:
            best_map, best = list(mapping), score
    mapping = {pvars[i]: (gvars[j] if j >= 0 else None) for i, j in enumerate(best_map)}
    # recompute exactly to avoid drift from accumulated gains
    exact = matcher.score(best_map)
    return _prf(exact, sum(t.weight for t in pred_t), sum(t.weight for t in gold_t), mapping)


def smatch(pred: AmrGraph, gold: AmrGraph, restarts: int = 4, seed: int = 0) -> MatchResult:
    """Hill-climbing Smatch from a concept-seeded start plus ``restarts`` random starts."""
    return _match(to_triples(pred), to_triples(gold), pred, gold, restarts, seed)


def smatch_weighted(pred: AmrGraph, gold: AmrGraph, d_thr: int = 5, restarts: int = 4,
                    seed: int = 0) -> MatchResult:
    """Smatch where each triple is weighted by its root distance in its own graph.

    A matched pair contributes the smaller of its two weights; precision and
    recall are normalized by the predicted and gold weight mass.
    """
    return _match(to_triples(pred, d_thr), to_triples(gold, d_thr), pred, gold, restarts, seed)


def smatch_core(pred: AmrGraph, gold: AmrGraph, d_max: int = 4, restarts: int = 4,
                seed: int = 0) -> MatchResult:
    return smatch(cut_graph(pred, d_max), cut_graph(gold, d_max), restarts, seed)


def _mapped_mass(pred_t: Sequence[Triple], gold_t: Sequence[Triple], mapping: Dict[str, str]) -> float:
    by_key: Dict[Tuple, List[float]] = defaultdict(list)
    for t in gold_t:
        by_key[(t.kind, t.relation, t.arg1, t.arg2, t.arg2_is_var)].append(t.weight)
    pred_keys: Dict[Tuple, List[float]] = defaultdict(list)
    for t in pred_t:
        a1 = mapping.get(t.arg1)
        if a1 is None:
            continue
        a2 = t.arg2
        if t.arg2_is_var:
            a2 = mapping.get(t.arg2)
            if a2 is None:
                continue
        pred_keys[(t.kind, t.relation, a1, a2, t.arg2_is_var)].append(t.weight)
    return sum(_paired_mass(ws, by_key[k]) for k, ws in pred_keys.items() if k in by_key)


def smatch_bruteforce(pred: AmrGraph, gold: AmrGraph, d_thr: Optional[int] = None) -> MatchResult:
    """Exact optimum by enumerating every maximal injective variable mapping."""
    pred_t, gold_t = to_triples(pred, d_thr), to_triples(gold, d_thr)
    pvars, gvars = _variables(pred), _variables(gold)
    small = min(len(pvars), len(gvars))
    if small > BRUTEFORCE_MAX_VARS:
        raise MatchSizeError(f"brute force needs <= {BRUTEFORCE_MAX_VARS} variables on one side, got {small}")
    if math.perm(max(len(pvars), len(gvars)), small) > BRUTEFORCE_MAX_MAPPINGS:
        raise MatchSizeError("too many mappings to enumerate")
    best, best_map = -1.0, {}
    # mapping more variables never loses mass, so maximal mappings suffice
    if len(pvars) <= len(gvars):
        candidates = (dict(zip(pvars, image)) for image in itertools.permutations(gvars, len(pvars)))
    else:
        candidates = (dict(zip(pre, gvars)) for pre in itertools.permutations(pvars, len(gvars)))
    for mapping in candidates:
        mass = _mapped_mass(pred_t, gold_t, mapping)
        if mass > best:
            best, best_map = mass, mapping
    full = {v: best_map.get(v) for v in pvars}
    return _prf(best, sum(t.weight for t in pred_t), sum(t.weight for t in gold_t), full)


def corpus_scores(pairs: Sequence[Tuple[AmrGraph, AmrGraph]], d_thr: int = 5, d_max: int = 4,
                  restarts: int = 4, seed: int = 0, metrics: Iterable[str] = ("smatch", "weighted", "core"),
                  ) -> dict:
    """Per-pair and corpus-level scores.

    Corpus Smatch values are micro-averaged over matched/predicted/gold
    totals (``mean_f1`` is the macro average); RA and CM are fractions of
    pairs.
    """
    metrics = tuple(metrics)
    funcs = {
        "smatch": lambda p, g: smatch(p, g, restarts, seed),
        "weighted": lambda p, g: smatch_weighted(p, g, d_thr, restarts, seed),
        "core": lambda p, g: smatch_core(p, g, d_max, restarts, seed),
    }
    totals = {m: [0.0, 0.0, 0.0] for m in metrics}
    f1_sums = {m: 0.0 for m in metrics}
    records = []
    root_hits = complete = 0
    for k, (pred, gold) in enumerate(pairs):
        rec = {"index": k, "id": gold.metadata.get("id", str(k))}
        ordinary = None
        for m in metrics:
            res = funcs[m](pred, gold)
            if m == "smatch":
                ordinary = res
            totals[m][0] += res.matched
            totals[m][1] += res.pred_total
            totals[m][2] += res.gold_total
            f1_sums[m] += res.f1
            rec[m] = {"precision": res.precision, "recall": res.recall, "f1": res.f1}
        if ordinary is None:
            ordinary = smatch(pred, gold, restarts, seed)
        root_ok = pred.root_concept == gold.root_concept
        exact = ordinary.f1 == 1.0
        root_hits += root_ok
        complete += exact
        rec["root_match"] = root_ok
        rec["complete_match"] = exact
        records.append(rec)
    n = len(records)
    corpus = {"pairs": n, "weighted_pr_convention": WEIGHTED_PR_CONVENTION, "d_thr": d_thr, "d_max": d_max}
    for m, (matched, pt, gt) in totals.items():
        r = _prf(matched, pt, gt, {})
        corpus[m] = {"precision": r.precision, "recall": r.recall, "f1": r.f1,
                     "mean_f1": f1_sums[m] / n if n else 0.0}
    corpus["root_accuracy"] = root_hits / n if n else 0.0
    corpus["complete_match"] = complete / n if n else 0.0
    return {"pairs": records, "corpus": corpus}


def root_distance_histogram(corpus: Iterable[AmrGraph]) -> Dict[int, int]:
    counts: Counter = Counter()
    for g in corpus:
        counts.update(root_distances(g).values())
    return dict(sorted(counts.items()))
