"""Neural building blocks on top of :mod:`gsp_amr.autograd`."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor

__all__ = [
    "Module",
    "Linear",
    "Embedding",
    "LayerNorm",
    "AttentionScorer",
    "MultiHeadAttention",
    "FeedForward",
    "TransformerLayer",
    "TransformerEncoder",
    "CharCNN",
    "Biaffine",
    "sinusoidal_positions",
    "causal_mask",
    "scaled_dot_attention",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
    "NEG_INF",
]

NEG_INF = -1e9
LN_EPS = 1e-5


class Module:
    """Parameter container with recursive naming, train/eval mode and dropout rng."""

    training = False
    _rng: Optional[np.random.Generator] = None

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True, rng: Optional[np.random.Generator] = None) -> "Module":
        for m in self.modules():
            m.training = mode
            m._rng = rng
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def drop(self, x: Tensor, p: float) -> Tensor:
        return ag.dropout(x, p, self._rng, self.training)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True, dtype=np.float64):
        self.weight = Parameter(_xavier(rng, d_in, d_out, (d_in, d_out), dtype))
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, dtype=np.float64):
        self.weight = Parameter(rng.normal(0.0, 0.02, size=(n, dim)).astype(dtype))

    def __call__(self, ids) -> Tensor:
        return self.weight[np.asarray(ids, dtype=np.int64)]


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float64):
        self.gain = Parameter(np.ones(dim, dtype=dtype))
        self.bias = Parameter(np.zeros(dim, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias, LN_EPS)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None):
    """softmax(k q / sqrt(d)) weighted sum of ``v``; works on stacked queries and heads.

    Shapes: q (..., R, d), k (..., m, d), v (..., m, dv). Returns (attn, a).
    """
    d = q.shape[-1]
    k_t = ag.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = (q @ k_t) * (1.0 / math.sqrt(d))
    if mask is not None:
        scores = scores + mask.astype(scores.dtype)
    a = ag.softmax(scores, axis=-1)
    return a @ v, a


class AttentionScorer(Module):
    """Attention distributions only: softmax of projected query-key products per head."""

    def __init__(self, d_query: int, d_key: int, heads: int, rng: np.random.Generator, dtype=np.float64):
        if d_query % heads:
            raise ValueError(f"query dim {d_query} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(d_query, d_query, rng, dtype=dtype)
        self.k_proj = Linear(d_key, d_query, rng, bias=False, dtype=dtype)

    def __call__(self, x: Tensor, y: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        """Shape (heads, R, m)."""
        r, d = x.shape
        m = y.shape[0]
        dh = d // self.heads
        q = ag.transpose(self.q_proj(x).reshape(r, self.heads, dh), (1, 0, 2))
        k = ag.transpose(self.k_proj(y).reshape(m, self.heads, dh), (1, 2, 0))
        scores = (q @ k) * (1.0 / math.sqrt(dh))
        if mask is not None:
            scores = scores + mask.astype(scores.dtype)
        return ag.softmax(scores, axis=-1)


class MultiHeadAttention(Module):
    """T(x, y_1..m): per-head projections, scaled dot attention, concat, output projection."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, d_mem: Optional[int] = None,
                 dtype=np.float64, dropout: float = 0.0):
        if d_model % heads:
            raise ValueError(f"model dim {d_model} not divisible by {heads} heads")
        d_mem = d_mem or d_model
        self.heads = heads
        self.q_proj = Linear(d_model, d_model, rng, dtype=dtype)
        # a key bias shifts every score equally and cancels in the softmax
        self.k_proj = Linear(d_mem, d_model, rng, bias=False, dtype=dtype)
        self.v_proj = Linear(d_mem, d_model, rng, dtype=dtype)
        self.out_proj = Linear(d_model, d_model, rng, dtype=dtype)
        self.dropout = dropout

    def _split(self, x: Tensor) -> Tensor:
        r, d = x.shape
        return ag.transpose(x.reshape(r, self.heads, d // self.heads), (1, 0, 2))

    def distributions(self, x: Tensor, y: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        """Per-head attention weights, shape (heads, R, m)."""
        q, k = self._split(self.q_proj(x)), self._split(self.k_proj(y))
        d = q.shape[-1]
        scores = (q @ ag.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(d))
        if mask is not None:
            scores = scores + mask.astype(scores.dtype)
        return ag.softmax(scores, axis=-1)

    def __call__(self, x: Tensor, y: Tensor, mask: Optional[np.ndarray] = None):
        a = self.distributions(x, y, mask)
        a_dropped = self.drop(a, self.dropout)
        v = self._split(self.v_proj(y))
        attn = a_dropped @ v  # heads, R, dh
        r = x.shape[0]
        joined = ag.transpose(attn, (1, 0, 2)).reshape(r, -1)
        return self.out_proj(joined), a


class FeedForward(Module):
    """max(x W1 + b1, 0) W2 + b2."""

    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator, dtype=np.float64, dropout: float = 0.0):
        self.inner = Linear(d_model, d_ff, rng, dtype=dtype)
        self.outer = Linear(d_ff, d_model, rng, dtype=dtype)
        self.dropout = dropout

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(self.drop(ag.relu(self.inner(x)), self.dropout))


class TransformerLayer(Module):
    def __init__(self, d_model: int, heads: int, d_ff: int, rng: np.random.Generator, dtype=np.float64,
                 dropout: float = 0.0):
        self.attn = MultiHeadAttention(d_model, heads, rng, dtype=dtype, dropout=dropout)
        self.ln1 = LayerNorm(d_model, dtype)
        self.ff = FeedForward(d_model, d_ff, rng, dtype, dropout)
        self.ln2 = LayerNorm(d_model, dtype)
        self.dropout = dropout

    def __call__(self, x: Tensor, memory: Optional[Tensor] = None, mask: Optional[np.ndarray] = None) -> Tensor:
        memory = x if memory is None else memory
        a, _ = self.attn(x, memory, mask)
        x = self.ln1(x + self.drop(a, self.dropout))
        return self.ln2(x + self.drop(self.ff(x), self.dropout))


def causal_mask(n_query: int, n_key: int, offset: int = 0) -> np.ndarray:
    """Additive mask letting query i see keys <= i + offset."""
    q = np.arange(n_query)[:, None] + offset
    k = np.arange(n_key)[None, :]
    return np.where(k <= q, 0.0, NEG_INF)


class TransformerEncoder(Module):
    def __init__(self, n_layers: int, d_model: int, heads: int, d_ff: int, rng: np.random.Generator,
                 dtype=np.float64, dropout: float = 0.0):
        self.layers = [TransformerLayer(d_model, heads, d_ff, rng, dtype, dropout) for _ in range(n_layers)]

    def __call__(self, x: Tensor, causal: bool = False) -> Tensor:
        if x.shape[0] == 0:
            raise ValueError("cannot encode an empty sequence")
        mask = causal_mask(x.shape[0], x.shape[0]) if causal else None
        for layer in self.layers:
            x = layer(x, mask=mask)
        return x

    def step(self, cache: List[Optional[Tensor]], x_new: Tensor) -> Tuple[Tensor, List[Tensor]]:
        """Causal encoding of one appended position given cached per-layer inputs."""
        new_cache = []
        x = x_new
        for layer, rows in zip(self.layers, cache):
            rows = x if rows is None else ag.concat([rows, x], axis=0)
            new_cache.append(rows)
            x = layer(x, memory=rows)
        return x, new_cache


class CharCNN(Module):
    """Character convolution, max-over-time pooling and a projection."""

    def __init__(self, n_chars: int, char_dim: int, filters: int, width: int, out_dim: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.width = width
        self.emb = Embedding(n_chars, char_dim, rng, dtype)
        self.conv = Linear(width * char_dim, filters, rng, dtype=dtype)
        self.proj = Linear(filters, out_dim, rng, dtype=dtype)

    def __call__(self, words: Sequence[Sequence[int]]) -> Tensor:
        w = self.width
        words = [list(cs) if len(cs) else [0] for cs in words]
        length = max(w, max(len(cs) for cs in words))
        ids = np.zeros((len(words), length), dtype=np.int64)
        for i, cs in enumerate(words):
            ids[i, : len(cs)] = cs
        n_win = length - w + 1
        windows = np.arange(n_win)[:, None] + np.arange(w)[None, :]
        valid = np.array([max(len(cs), w) - w + 1 for cs in words])
        emb = self.emb(ids)  # N, L, c
        patches = emb[:, windows, :].reshape(len(words), n_win, -1)
        conv = self.conv(patches)
        mask = np.where(np.arange(n_win)[None, :] < valid[:, None], 0.0, NEG_INF)[:, :, None]
        pooled = (conv + mask.astype(conv.dtype)).max(axis=1)
        return self.proj(pooled)


class Biaffine(Module):
    """e = h'^T W v' + U^T h' + V^T v' + b on tanh projections h', v'."""

    def __init__(self, d_h: int, d_v: int, d_proj: int, n_labels: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.n_labels = n_labels
        self.proj_h = Linear(d_h, d_proj, rng, dtype=dtype)
        self.proj_v = Linear(d_v, d_proj, rng, dtype=dtype)
        self.W = Parameter(_xavier(rng, d_proj, d_proj, (d_proj, n_labels, d_proj), dtype))
        self.U = Parameter(_xavier(rng, d_proj, n_labels, (d_proj, n_labels), dtype))
        self.V = Parameter(_xavier(rng, d_proj, n_labels, (d_proj, n_labels), dtype))
        self.b = Parameter(np.zeros(n_labels, dtype=dtype))

    def __call__(self, h: Tensor, v: Tensor) -> Tensor:
        """Scores of shape (P, n_labels) for P paired rows of ``h`` and ``v``."""
        ph = ag.tanh(self.proj_h(h))
        pv = ag.tanh(self.proj_v(v))
        p, r = ph.shape
        inner = (ph @ self.W.reshape(r, -1)).reshape(p, self.n_labels, r)
        bilinear = (inner * pv.reshape(p, 1, r)).sum(axis=-1)
        return bilinear + ph @ self.U + pv @ self.V + self.b


def sinusoidal_positions(n: int, dim: int, start: int = 0, dtype=np.float64) -> np.ndarray:
    pos = np.arange(start, start + n, dtype=np.float64)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)


# ---------------------------------------------------------------------------
# verification harness


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tuple[str, Parameter]], h: float = 1e-4,
               entries_per_param: Optional[int] = None, seed: int = 0, floor: float = 1e-6
               ) -> Tuple[float, Dict[str, float]]:
    """Compare analytic gradients with central differences.

    Relative error per entry is |a - n| / max(|a|, |n|, floor). The floor
    keeps entries whose true gradient sits near the finite-difference
    roundoff (about eps * |loss| / h) from dominating. With
    ``entries_per_param`` set, that many random entries of each parameter
    are checked. Returns the overall maximum and the per-parameter maxima.
    """
    params = list(params)
    for _, p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params}
    rng = np.random.default_rng(seed)
    per_param: Dict[str, float] = {}
    with ag.no_grad():
        for name, p in params:
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if entries_per_param is not None and flat.size > entries_per_param:
                idx = rng.choice(flat.size, entries_per_param, replace=False)
            worst = 0.0
            for k in idx:
                old = flat[k]
                flat[k] = old + h
                up = float(loss_fn().data)
                flat[k] = old - h
                down = float(loss_fn().data)
                flat[k] = old
                num = (up - down) / (2 * h)
                ana = float(analytic[name].reshape(-1)[k])
                err = abs(ana - num) / max(abs(ana), abs(num), floor)
                worst = max(worst, err)
            per_param[name] = worst
    return (max(per_param.values()) if per_param else 0.0), per_param


# ---------------------------------------------------------------------------
# checkpoint file: magic, u64 header length, JSON header, raw little-endian arrays

_MAGIC = b"GSPCKPT1"


def save_checkpoint(path, state: Dict[str, np.ndarray], header: dict) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        raw = arr.astype(dt).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt.str, "offset": offset,
                        "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    head = dict(header)
    head["parameters"] = entries
    encoded = json.dumps(head, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + n].decode("utf-8"))
    base = 16 + n
    state = {}
    for e in header.pop("parameters"):
        start = base + e["offset"]
        arr = np.frombuffer(data[start : start + e["nbytes"]], dtype=np.dtype(e["dtype"]))
        state[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    return header, state


def stable_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()[:16]
