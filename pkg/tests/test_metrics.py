import itertools
import random

import pytest

from gsp_amr.amr import AmrGraph, Edge, Node, cut_graph, graph_depth, parse_penman
from gsp_amr.metrics import (
    MatchSizeError,
    corpus_scores,
    root_distance_histogram,
    smatch,
    smatch_bruteforce,
    smatch_core,
    smatch_weighted,
    to_triples,
    triple_weight,
)
from gsp_amr.synthetic import random_corpus, random_graph


def one(text):
    return parse_penman(text)[0]


def naive_smatch_f1(pred: AmrGraph, gold: AmrGraph) -> float:
    """Unweighted optimum written from scratch: rename, intersect triple multisets."""
    def triples(g, rename):
        out = []
        for n in g.nodes:
            if not n.is_constant:
                out.append(("instance", rename(n.id), n.concept))
        for e in g.edges:
            c = g.node(e.child)
            out.append((e.relation, rename(e.head), c.concept if c.is_constant else rename(e.child)))
        out.append(("top", rename(g.root), "top"))
        return out

    pv = [n.id for n in pred.nodes if not n.is_constant]
    gv = [n.id for n in gold.nodes if not n.is_constant]
    gold_t = triples(gold, lambda v: "g:" + v)
    best = 0
    pad = pv + [None] * max(0, len(gv) - len(pv))
    for perm in itertools.permutations(range(len(pad)), len(gv)):
        m = {}
        for j, i in enumerate(perm):
            if pad[i] is not None:
                m[pad[i]] = "g:" + gv[j]
        pt = triples(pred, lambda v: m.get(v, "p:" + v))
        remaining = list(gold_t)
        hits = 0
        for t in pt:
            if t in remaining:
                remaining.remove(t)
                hits += 1
        best = max(best, hits)
    n_p, n_g = len(triples(pred, str)), len(gold_t)
    p, r = best / n_p, best / n_g
    return 2 * p * r / (p + r) if p + r else 0.0


BOY = "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))"


class TestWeights:
    def test_clamped_linear_decay(self):
        assert [triple_weight(d, 5) for d in range(8)] == [1, 1, 1, 1, 1, 0, 0, 0]
        assert triple_weight(0, 1) == 1 and triple_weight(1, 1) == 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            triple_weight(-1, 3)
        with pytest.raises(ValueError):
            triple_weight(0, 0)

    def test_triple_weights_by_distance(self):
        g = one("(a / alpha :ARG0 (b / beta :ARG1 (c / gamma)))")
        ws = {(t.kind, t.arg1, t.arg2): t.weight for t in to_triples(g, d_thr=2)}
        assert ws[("instance", "a", "alpha")] == 1
        assert ws[("instance", "b", "beta")] == 1
        assert ws[("instance", "c", "gamma")] == 0
        # an edge takes the weight of its nearer endpoint
        assert ws[("relation", "b", "c")] == 1


class TestSmatch:
    def test_identity(self):
        g = one(BOY)
        res = smatch(g, g)
        assert res.f1 == 1.0 and res.precision == 1.0 and res.recall == 1.0

    def test_known_value(self):
        gold = one(BOY)
        pred = one("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02))")
        # gold: 3 instances + 3 relations + top = 7; pred: 6, all matched
        res = smatch(pred, gold)
        assert res.matched == 6 and res.pred_total == 6 and res.gold_total == 7
        assert res.f1 == pytest.approx(2 * 1 * (6 / 7) / (1 + 6 / 7))

    def test_variable_names_do_not_matter(self):
        a = one(BOY)
        b = one("(x / want-01 :ARG1 (y / go-02 :ARG0 (z / boy)) :ARG0 z)")
        assert smatch(a, b).f1 == 1.0

    def test_constants_compare_by_value(self):
        a = one("(g / go-02 :polarity -)")
        b = one("(g / go-02 :polarity +)")
        assert smatch(a, b).matched == 2

    def test_restarts_validated(self):
        g = one(BOY)
        with pytest.raises(ValueError):
            smatch(g, g, restarts=0)

    def test_against_independent_oracle(self):
        rng = random.Random(11)
        for _ in range(40):
            p = random_graph(rng, rng.randint(1, 4), concepts=["a", "b", "c"], relations=[":r", ":s"])
            g = random_graph(rng, rng.randint(1, 4), concepts=["a", "b", "c"], relations=[":r", ":s"])
            want = naive_smatch_f1(p, g)
            assert smatch_bruteforce(p, g).f1 == pytest.approx(want)
            assert smatch(p, g, restarts=8).f1 <= want + 1e-12

    def test_hill_climbing_never_exceeds_bruteforce(self):
        rng = random.Random(2)
        for _ in range(60):
            p = random_graph(rng, rng.randint(1, 5), concepts=["a", "b"])
            g = random_graph(rng, rng.randint(1, 5), concepts=["a", "b"])
            assert smatch(p, g).matched <= smatch_bruteforce(p, g).matched + 1e-12

    def test_bruteforce_size_guard(self):
        g = random_graph(random.Random(0), 12)
        with pytest.raises(MatchSizeError):
            smatch_bruteforce(g, g)


class TestVariants:
    def test_weighted_equals_ordinary_at_large_threshold(self):
        preds = random_corpus(50, seed=40)
        for p, g in zip(preds, random_corpus(50, seed=4)):
            d = max(graph_depth(g), graph_depth(p))
            assert smatch_weighted(p, g, d_thr=d + 1).f1 == pytest.approx(smatch(p, g).f1, abs=1e-9)

    def test_weighted_ignores_deep_errors(self):
        gold = one("(a / alpha :ARG0 (b / beta :ARG1 (c / gamma)))")
        pred = one("(a / alpha :ARG0 (b / beta :ARG1 (c / delta)))")
        assert smatch(pred, gold).f1 < 1.0
        assert smatch_weighted(pred, gold, d_thr=2).f1 == 1.0

    def test_weighted_bruteforce_agrees(self):
        rng = random.Random(5)
        for _ in range(30):
            p = random_graph(rng, rng.randint(1, 5), concepts=["a", "b"])
            g = random_graph(rng, rng.randint(1, 5), concepts=["a", "b"])
            hc = smatch_weighted(p, g, d_thr=2, restarts=8).matched
            assert hc <= smatch_bruteforce(p, g, d_thr=2).matched + 1e-12

    def test_core_is_smatch_on_cut_graphs(self):
        gold = one("(a / alpha :ARG0 (b / beta :ARG1 (c / gamma)))")
        pred = one("(a / alpha :ARG0 (b / beta))")
        assert smatch_core(pred, gold, d_max=1).f1 == 1.0
        assert smatch_core(pred, gold, d_max=2).f1 == smatch(cut_graph(pred, 2), gold).f1

    def test_core_at_depth_equals_ordinary(self):
        for g in random_corpus(30, seed=6):
            assert smatch_core(g, g, d_max=graph_depth(g)).f1 == smatch(g, g).f1 == 1.0


class TestCorpus:
    def test_records_and_aggregates(self):
        gold = [one(BOY), one("(a / alpha :ARG0 (b / beta))")]
        pred = [one(BOY), one("(x / beta :ARG0 (y / alpha))")]
        rep = corpus_scores(list(zip(pred, gold)))
        assert len(rep["pairs"]) == 2
        c = rep["corpus"]
        assert c["pairs"] == 2
        assert c["root_accuracy"] == 0.5 and c["complete_match"] == 0.5
        assert c["smatch"]["mean_f1"] == pytest.approx((1.0 + rep["pairs"][1]["smatch"]["f1"]) / 2)
        assert set(c) >= {"smatch", "weighted", "core"}

    def test_micro_average(self):
        gold = [one(BOY), one("(a / alpha)")]
        pred = [one("(w / want-01)"), one("(a / alpha)")]
        rep = corpus_scores(list(zip(pred, gold)), metrics=("smatch",))
        r0 = smatch(pred[0], gold[0])
        matched = r0.matched + 2
        assert rep["corpus"]["smatch"]["precision"] == pytest.approx(matched / (r0.pred_total + 2))
        assert rep["corpus"]["smatch"]["recall"] == pytest.approx(matched / (r0.gold_total + 2))

    def test_empty(self):
        rep = corpus_scores([])
        assert rep["corpus"]["pairs"] == 0 and rep["corpus"]["root_accuracy"] == 0.0

    def test_histogram(self):
        g = AmrGraph([Node("a", "x"), Node("b", "y"), Node("c", "z")],
                     [Edge("a", "b", ":r"), Edge("b", "c", ":r")], "a")
        assert root_distance_histogram([g, g]) == {0: 2, 1: 2, 2: 2}
