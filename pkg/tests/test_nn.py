import numpy as np
import pytest

from gsp_amr import autograd as ag
from gsp_amr.autograd import Parameter, Tensor
from gsp_amr.nn import (
    NEG_INF,
    AttentionScorer,
    Biaffine,
    CharCNN,
    Linear,
    Module,
    MultiHeadAttention,
    TransformerEncoder,
    causal_mask,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    scaled_dot_attention,
    sinusoidal_positions,
    stable_hash,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_scaled_dot_attention_matches_formula(rng):
    q, k, v = (rng.normal(size=s) for s in [(2, 4), (5, 4), (5, 3)])
    out, a = scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
    s = q @ k.T / 2.0
    w = np.exp(s - s.max(1, keepdims=True))
    w /= w.sum(1, keepdims=True)
    np.testing.assert_allclose(a.data, w)
    np.testing.assert_allclose(out.data, w @ v)


def test_masked_positions_get_no_weight(rng):
    attn = MultiHeadAttention(8, 2, rng)
    x, y = Tensor(rng.normal(size=(3, 8))), Tensor(rng.normal(size=(4, 8)))
    mask = causal_mask(3, 4)
    dist = attn.distributions(x, y, mask).data
    assert dist.shape == (2, 3, 4)
    np.testing.assert_allclose(dist.sum(-1), 1.0)
    assert np.all(dist[:, 0, 1:] < 1e-12) and np.all(dist[:, 1, 2:] < 1e-12)


def test_causal_mask_offset():
    m = causal_mask(2, 4, offset=2)
    assert (m == 0).sum(axis=1).tolist() == [3, 4]
    assert m.min() == NEG_INF


def test_attention_scorer_rows_normalized(rng):
    sc = AttentionScorer(8, 6, 4, rng)
    d = sc(Tensor(rng.normal(size=(5, 8))), Tensor(rng.normal(size=(7, 6)))).data
    assert d.shape == (4, 5, 7)
    np.testing.assert_allclose(d.sum(-1), 1.0, atol=1e-12)


def test_head_divisibility(rng):
    with pytest.raises(ValueError):
        MultiHeadAttention(10, 3, rng)
    with pytest.raises(ValueError):
        AttentionScorer(10, 4, 3, rng)


def test_incremental_encoder_matches_causal_full_pass(rng):
    enc = TransformerEncoder(2, 8, 2, 16, rng)
    x = rng.normal(size=(5, 8))
    with ag.no_grad():
        full = enc(Tensor(x), causal=True).data
        cache = [None, None]
        rows = []
        for i in range(5):
            out, cache = enc.step(cache, Tensor(x[i : i + 1]))
            rows.append(out.data[0])
    np.testing.assert_allclose(np.array(rows), full, atol=1e-10)


def test_encoder_rejects_empty(rng):
    with pytest.raises(ValueError):
        TransformerEncoder(1, 8, 2, 16, rng)(Tensor(np.zeros((0, 8))))


def test_biaffine_matches_explicit_formula(rng):
    bi = Biaffine(4, 5, 3, 2, rng)
    bi.b.data[:] = rng.normal(size=2)
    h, v = rng.normal(size=(6, 4)), rng.normal(size=(6, 5))
    got = bi(Tensor(h), Tensor(v)).data
    ph = np.tanh(h @ bi.proj_h.weight.data + bi.proj_h.bias.data)
    pv = np.tanh(v @ bi.proj_v.weight.data + bi.proj_v.bias.data)
    for p in range(6):
        for lab in range(2):
            want = (ph[p] @ bi.W.data[:, lab, :] @ pv[p] + ph[p] @ bi.U.data[:, lab]
                    + pv[p] @ bi.V.data[:, lab] + bi.b.data[lab])
            assert got[p, lab] == pytest.approx(want)


def test_char_cnn_pools_only_valid_windows(rng):
    cnn = CharCNN(10, 4, 6, 3, 5, rng)
    a = cnn([[1, 2, 3]]).data
    b = cnn([[1, 2, 3], [4, 5, 6, 7, 8, 9]]).data
    np.testing.assert_allclose(a[0], b[0])
    assert cnn([[], [1]]).shape == (2, 5)


def test_sinusoidal_positions():
    pe = sinusoidal_positions(4, 6)
    assert pe.shape == (4, 6)
    np.testing.assert_allclose(pe[0], [0, 1, 0, 1, 0, 1])
    np.testing.assert_allclose(sinusoidal_positions(2, 6, start=2), pe[2:])


class Tiny(Module):
    def __init__(self, rng):
        self.first = Linear(3, 4, rng)
        self.stack = [Linear(4, 4, rng, bias=False)]
        self.scale = Parameter(np.ones(1))

    def __call__(self, x):
        return ag.tanh(self.stack[0](self.first(x))) * self.scale


def test_parameter_names_and_state_round_trip(rng, tmp_path):
    m = Tiny(rng)
    names = [n for n, _ in m.named_parameters()]
    assert names == ["first.weight", "first.bias", "stack.0.weight", "scale"]
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m.state_dict(), {"note": "x"})
    header, state = load_checkpoint(path)
    assert header["note"] == "x"
    other = Tiny(np.random.default_rng(9))
    other.load_state_dict(state)
    for (_, a), (_, b) in zip(m.named_parameters(), other.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_load_state_dict_errors(rng):
    m = Tiny(rng)
    state = m.state_dict()
    with pytest.raises(KeyError):
        m.load_state_dict({k: v for k, v in state.items() if k != "scale"})
    bad = dict(state)
    bad["scale"] = np.ones(2)
    with pytest.raises(ValueError):
        m.load_state_dict(bad)


def test_checkpoint_rejects_other_files(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_grad_check_passes_and_catches_errors(rng):
    m = Tiny(rng)
    x = Tensor(rng.normal(size=(5, 3)))

    def loss():
        return (m(x) * m(x)).sum()

    err, per = grad_check(loss, list(m.named_parameters()))
    assert err < 1e-6 and set(per) == {n for n, _ in m.named_parameters()}

    def wrong():
        out = loss()
        # hide a term from the backward pass
        return out + Tensor(float((m.scale.data ** 3).sum()))

    err_wrong, per_wrong = grad_check(wrong, list(m.named_parameters()))
    assert per_wrong["scale"] > 1e-2


def test_stable_hash_is_key_order_independent():
    assert stable_hash({"a": 1, "b": 2}) == stable_hash({"b": 2, "a": 1})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})
