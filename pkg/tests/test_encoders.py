import numpy as np
import pytest

from gsp_amr import autograd as ag
from gsp_amr.corpus import AnnotatedSentence
from gsp_amr.vocab import sentence_features


def test_sentence_encoding_shapes(fresh_model, toy_pairs):
    sent = toy_pairs[0][0]
    feats = sentence_features(sent, fresh_model.bundle)
    enc = fresh_model.encode_sentence(feats)
    d = fresh_model.config.model_dim
    assert enc.summary.shape == (1, d)
    assert enc.states.shape == (len(sent), d)


def test_empty_sentence_rejected(fresh_model):
    with pytest.raises(ValueError):
        fresh_model.sentence_encoder.encoder(ag.Tensor(np.zeros((0, fresh_model.config.model_dim))))


def test_unknown_words_fall_back_to_unk(fresh_model):
    sent = AnnotatedSentence(["zyzzyva"], ["zyzzyva"], ["QQ"], ["O"])
    feats = sentence_features(sent, fresh_model.bundle)
    assert feats.lemma_ids[1] == 1 and feats.pos_ids[1] == 1
    assert fresh_model.encode_sentence(feats).states.shape[0] == 1


def test_unk_replacement_rate(toy_bundle, toy_pairs):
    sent = toy_pairs[0][0]
    rng = np.random.default_rng(0)
    hits = total = 0
    for _ in range(400):
        f = sentence_features(sent, toy_bundle, unk_rate=0.33, rng=rng)
        assert f.lemma_ids[0] != 1  # <bos> is never replaced
        hits += int((f.lemma_ids[1:] == 1).sum())
        total += len(sent)
    assert abs(hits / total - 0.33) < 0.03


def test_incremental_graph_states_match_batch(fresh_model, toy_pairs):
    graph = toy_pairs[3][1]
    concepts = [n.concept for n in graph.nodes]
    enc = fresh_model.graph_encoder
    with ag.no_grad():
        batch = enc(concepts).data
        mem = enc.initial_memory()
        for c in concepts:
            mem = enc.append(mem, c)
    assert len(mem) == len(concepts) + 1
    np.testing.assert_allclose(mem.states.data, batch, atol=1e-10)


def test_earlier_states_unchanged_by_append(fresh_model):
    enc = fresh_model.graph_encoder
    with ag.no_grad():
        mem = enc.append(enc.initial_memory(), "boy")
        before = mem.states.data.copy()
        longer = enc.append(mem, "want-01")
    np.testing.assert_array_equal(longer.states.data[:2], before)


def test_dummy_has_its_own_embedding_row(fresh_model):
    enc = fresh_model.graph_encoder
    assert enc.dummy_id == len(fresh_model.bundle.concept)
    assert enc.concept.weight.shape[0] == enc.dummy_id + 1
