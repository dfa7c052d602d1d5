import numpy as np
import pytest

from gsp_amr.amr import AmrGraph, Edge, Node, linearize
from gsp_amr.autograd import Parameter
from gsp_amr.config import TrainConfig
from gsp_amr.decoder import decode_greedy
from gsp_amr.training import (
    Adam,
    compute_loss,
    learning_rate,
    load_model,
    postprocess,
    save_model,
    train,
)
from gsp_amr.vocab import sentence_features


def test_learning_rate_peaks_at_warmup():
    lrs = [learning_rate(s, 16, 200) for s in range(1, 1000)]
    peak = int(np.argmax(lrs)) + 1
    assert peak == 200
    assert lrs[0] == pytest.approx(16 ** -0.5 * 200 ** -1.5)
    assert learning_rate(800, 16, 200) == pytest.approx(16 ** -0.5 * 800 ** -0.5)
    assert learning_rate(50, 16, 200, scale=0.1) == pytest.approx(0.1 * learning_rate(50, 16, 200))


def test_adam_matches_reference_update():
    p = Parameter(np.array([1.0, -2.0]))
    opt = Adam([p], 0.9, 0.999, 1e-8)
    m = v = np.zeros(2)
    x = p.data.copy()
    for t in range(1, 6):
        g = 2 * x
        p.grad = g.copy()
        opt.step(0.1)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p.data, x)


def test_adam_skips_frozen_and_gradless():
    frozen = Parameter(np.ones(2), trainable=False)
    live = Parameter(np.ones(2))
    opt = Adam([frozen, live])
    opt.step(0.1)
    np.testing.assert_array_equal(live.data, 1.0)
    assert opt.params == [live]


def test_loss_is_negative_log_probability(fresh_model, toy_pairs):
    sent, graph = toy_pairs[4]
    model = fresh_model.eval()
    parts = compute_loss(model, graph, sent)
    lp = model.log_probability(sentence_features(sent, model.bundle), linearize(graph))
    assert parts.total.item() == pytest.approx(-lp)
    assert parts.total.item() == pytest.approx(parts.concept + parts.arc + parts.label)


def test_binary_arc_term_adds_non_parent_penalty(toy_bundle, toy_pairs):
    sent, graph = next((s, g) for s, g in toy_pairs if len(g.nodes) >= 3)
    from gsp_amr.decoder import GSPModel

    pos = GSPModel(TrainConfig.toy(arc_loss="positive"), toy_bundle, seed=0)
    binary = GSPModel(TrainConfig.toy(arc_loss="binary"), toy_bundle, seed=0)
    a, b = compute_loss(pos, graph, sent), compute_loss(binary, graph, sent)
    assert a.concept == pytest.approx(b.concept) and a.label == pytest.approx(b.label)
    assert b.arc > a.arc


def test_loss_decreases_over_first_epochs(toy_corpus):
    pairs, alignments = toy_corpus
    res = train(pairs, TrainConfig.toy(epochs=10, eval_every=1000), alignments=alignments)
    losses = [r["loss"] for r in res.log]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(toy_corpus):
    pairs, alignments = toy_corpus
    cfg = TrainConfig.toy(epochs=2, eval_every=1000)
    a = [r["loss"] for r in train(pairs[:5], cfg, alignments=alignments).log]
    b = [r["loss"] for r in train(pairs[:5], cfg, alignments=alignments).log]
    assert a == b


def test_early_stopping_within_patience(toy_corpus):
    pairs, alignments = toy_corpus
    cfg = TrainConfig.toy(epochs=40, eval_every=1, patience=2, lr_scale=1e-6)
    res = train(pairs[:3], cfg, alignments=alignments)
    assert res.stopped == "early-stopping"
    assert res.log[-1]["epoch"] - res.best_epoch <= 2


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train([], TrainConfig.toy())


@pytest.mark.slow
def test_overfit_reaches_perfect_training_smatch(trained):
    assert trained.stopped == "perfect-dev"
    assert trained.best_score == 1.0


def test_checkpoint_round_trip(fresh_model, toy_pairs, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(path, fresh_model, {"note": 1})
    again, header = load_model(path, with_header=True)
    assert header["extra"] == {"note": 1}
    assert header["config_hash"] == fresh_model.config.hash()
    feats = sentence_features(toy_pairs[0][0], fresh_model.bundle)
    assert decode_greedy(again, feats).actions == decode_greedy(fresh_model, feats).actions


def test_postprocess_rules():
    g = AmrGraph(
        [Node("a", "strike"), Node("b", "earthquake"), Node("c", "jump"), Node("d", "go-02"),
         Node("e", "-", True)],
        [Edge("a", "b", ":ARG0"), Edge("a", "c", ":ARG1"), Edge("a", "d", ":ARG2"), Edge("a", "e", ":polarity")],
        "a",
    )
    out = postprocess(g, {"strike": "-01", "go": "-02"}, predicates=["jump", "strike"])
    assert [n.concept for n in out.nodes] == ["strike-01", "earthquake", "jump-01", "go-02", "-"]


def test_postprocess_wiki():
    g = AmrGraph(
        [Node("c", "city"), Node("n", "name"), Node("o", '"Paris"', True), Node("w", '"x"', True),
         Node("p", "person"), Node("m", "name"), Node("q", '"Zed"', True), Node("v", '"y"', True)],
        [Edge("c", "n", ":name"), Edge("n", "o", ":op1"), Edge("c", "w", ":wiki"), Edge("c", "p", ":ARG0"),
         Edge("p", "m", ":name"), Edge("m", "q", ":op1"), Edge("p", "v", ":wiki")],
        "c",
    )
    out = postprocess(g, {}, wiki_table={"Paris": '"Paris"'})
    assert out.node("w").concept == '"Paris"'
    assert out.node("v").concept == "-"
