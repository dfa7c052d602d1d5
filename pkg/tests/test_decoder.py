import math

import numpy as np
import pytest

from gsp_amr import autograd as ag
from gsp_amr.amr import STOP, linearize
from gsp_amr.decoder import (
    ParserState,
    beam_search,
    choose_parents,
    decode_forced,
    decode_greedy,
)
from gsp_amr.metrics import smatch
from gsp_amr.vocab import sentence_features


def test_choose_parents_threshold_and_fallback():
    assert choose_parents(np.array([0.9]), 1) == []
    assert choose_parents(np.array([0.8, 0.6, 0.1, 0.7]), 4) == [1, 3]
    # the dummy column never counts, even when it holds all the mass
    assert choose_parents(np.array([0.9, 0.04, 0.06]), 3) == [2]


def test_state_stages_must_run_in_order(fresh_model, toy_pairs):
    feats = sentence_features(toy_pairs[0][0], fresh_model.bundle)
    with ag.no_grad():
        sent = fresh_model.encode_sentence(feats)
        mem = fresh_model.graph_encoder.initial_memory()
        state = fresh_model.focus_selection(sent, mem.states, None, 1)
        with pytest.raises(RuntimeError):
            fresh_model.concept_prediction(state, sent)
        _, state = fresh_model.relation_identification(state, mem.states, None)
        _, state = fresh_model.concept_prediction(state, sent)
    assert isinstance(state, ParserState) and state.stage == "concept"


def test_teacher_forcing_matches_incremental_steps(fresh_model, toy_pairs):
    """Row r of the masked batch pass equals step r+1 run on the gold prefix."""
    model = fresh_model.eval()
    sent, graph = toy_pairs[5]
    feats = sentence_features(sent, model.bundle)
    actions = linearize(graph)
    with ag.no_grad():
        parts = model.teacher_forced(feats, actions)
        enc = model.encode_sentence(feats)
        mem = model.graph_encoder.initial_memory()
        arc_k = 0
        for r, a in enumerate(actions):
            res = model.step(enc, mem)
            assert res.step == r + 1
            p = res.distribution.get(a.concept, 0.0)
            assert math.log(p) == pytest.approx(parts["concept"].data[r], abs=1e-9)
            if r > 0 and not a.is_stop:
                pooled = res.arcs.pooled.data[0]
                for i in a.parent_indices:
                    assert math.log(pooled[i]) == pytest.approx(parts["arc"].data[arc_k], abs=1e-9)
                    arc_k += 1
            if not a.is_stop:
                mem = model.graph_encoder.append(mem, a.concept)


def test_concept_mixture_sums_to_one(fresh_model, toy_pairs):
    feats = sentence_features(toy_pairs[1][0], fresh_model.bundle)
    with ag.no_grad():
        res = fresh_model.step(fresh_model.encode_sentence(feats), fresh_model.graph_encoder.initial_memory())
    assert sum(res.distribution.values()) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(res.concepts.modes.data.sum(-1), 1.0)


def test_stop_not_offered_at_first_step(fresh_model, toy_pairs):
    feats = sentence_features(toy_pairs[1][0], fresh_model.bundle)
    with ag.no_grad():
        res = fresh_model.step(fresh_model.encode_sentence(feats), fresh_model.graph_encoder.initial_memory())
    assert STOP in res.distribution
    assert STOP not in [c for c, _ in res.ranked()]


def test_teacher_forcing_requires_stop(fresh_model, toy_pairs):
    sent, graph = toy_pairs[0]
    feats = sentence_features(sent, fresh_model.bundle)
    with pytest.raises(Exception):
        fresh_model.teacher_forced(feats, linearize(graph)[:-1])


def test_random_model_greedy_valid_or_truncated(fresh_model, toy_pairs):
    for sent, _ in toy_pairs:
        res = decode_greedy(fresh_model, sentence_features(sent, fresh_model.bundle))
        assert res.graph is not None or res.error
        if res.graph is not None:
            assert res.graph.root is not None
            assert res.graph.metadata["gsp-truncated"] in ("yes", "no")


def test_step_cap_truncates(fresh_model, toy_pairs):
    feats = sentence_features(toy_pairs[0][0], fresh_model.bundle)
    res = decode_forced(fresh_model, feats, ["dog", "dog", "dog"])
    assert res.truncated and res.graph is not None and len(res.graph.nodes) == 3
    capped = decode_greedy(fresh_model, feats, step_cap=2)
    assert len(capped.actions) <= 3
    if capped.truncated:
        assert capped.graph.metadata["gsp-truncated"] == "yes"


def test_beam_one_equals_greedy(fresh_model, toy_pairs):
    for sent, _ in toy_pairs[:10]:
        feats = sentence_features(sent, fresh_model.bundle)
        g, b = decode_greedy(fresh_model, feats), beam_search(fresh_model, feats, 1)
        assert g.actions == b.actions
        assert g.log_prob == pytest.approx(b.log_prob)


def test_beam_size_validated(fresh_model, toy_pairs):
    with pytest.raises(ValueError):
        beam_search(fresh_model, sentence_features(toy_pairs[0][0], fresh_model.bundle), 0)


def test_decode_score_is_sum_of_step_scores(fresh_model, toy_pairs):
    feats = sentence_features(toy_pairs[2][0], fresh_model.bundle)
    res = decode_greedy(fresh_model, feats)
    concepts = [a.concept for a in res.actions]
    forced = decode_forced(fresh_model, feats, concepts)
    assert forced.log_prob == pytest.approx(res.log_prob)


@pytest.mark.slow
def test_trained_model_recovers_training_graphs(trained, toy_pairs):
    model = trained.model
    for sent, gold in toy_pairs:
        feats = sentence_features(sent, model.bundle)
        greedy = decode_greedy(model, feats)
        assert greedy.graph is not None and not greedy.truncated
        assert smatch(greedy.graph, gold).f1 == 1.0
        # the beam maximizes model score, which need not mean a better graph
        assert beam_search(model, feats, 4).log_prob >= greedy.log_prob - 1e-9
