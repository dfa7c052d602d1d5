"""Sentence encoder and incremental, causally masked graph encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import TrainConfig
from .nn import CharCNN, Embedding, Linear, Module, TransformerEncoder, sinusoidal_positions
from .vocab import SentenceFeatures, VocabBundle

__all__ = ["SentenceEncoder", "GraphEncoder", "GraphMemory", "SentenceEncoding"]


@dataclass
class SentenceEncoding:
    summary: Tensor  # (1, d): the final state of the <bos> token
    states: Tensor  # (n, d): token states s_1..s_n
    features: SentenceFeatures


class SentenceEncoder(Module):
    def __init__(self, cfg: TrainConfig, bundle: VocabBundle, rng: np.random.Generator, dtype):
        self.lemma = Embedding(len(bundle.lemma), cfg.lemma_dim, rng, dtype)
        self.pos = Embedding(len(bundle.pos), cfg.pos_dim, rng, dtype)
        self.ner = Embedding(len(bundle.ner), cfg.ner_dim, rng, dtype)
        self.chars = CharCNN(len(bundle.char), cfg.char_dim, cfg.char_filters, cfg.char_width, cfg.char_out,
                             rng, dtype)
        width = cfg.lemma_dim + cfg.pos_dim + cfg.ner_dim + cfg.char_out
        self.proj = Linear(width, cfg.model_dim, rng, dtype=dtype)
        self.encoder = TransformerEncoder(cfg.sentence_layers, cfg.model_dim, cfg.heads, cfg.ff_dim, rng, dtype,
                                          cfg.dropout)
        self.dropout = cfg.dropout
        self.dtype = dtype

    def __call__(self, feats: SentenceFeatures) -> SentenceEncoding:
        if len(feats.tokens) == 0:
            raise ValueError("cannot encode an empty sentence")
        x = ag.concat([self.lemma(feats.lemma_ids), self.pos(feats.pos_ids), self.ner(feats.ner_ids),
                       self.chars(feats.chars)], axis=1)
        x = self.proj(x) + sinusoidal_positions(x.shape[0], self.proj.weight.shape[1], dtype=self.dtype)
        s = self.encoder(self.drop(x, self.dropout))
        return SentenceEncoding(s[0:1], s[1:], feats)


@dataclass(frozen=True)
class GraphMemory:
    """Concepts c_0..c_{t-1} (c_0 is the dummy node) and their cached states.

    ``cache`` holds, per encoder layer, the layer inputs seen so far; states
    of earlier positions never change when a concept is appended.
    """

    concept_ids: Tuple[int, ...]
    concepts: Tuple[str, ...]
    states: Tensor  # (t, d)
    cache: Tuple[Tensor, ...]

    def __len__(self):
        return len(self.concept_ids)


class GraphEncoder(Module):
    def __init__(self, cfg: TrainConfig, bundle: VocabBundle, rng: np.random.Generator, dtype):
        # one extra row for the dummy node, which is never a vocabulary concept
        self.dummy_id = len(bundle.concept)
        self.concept = Embedding(len(bundle.concept) + 1, cfg.concept_dim, rng, dtype)
        self.chars = CharCNN(len(bundle.char), cfg.char_dim, cfg.char_filters, cfg.char_width, cfg.char_out,
                             rng, dtype)
        self.proj = Linear(cfg.concept_dim + cfg.char_out, cfg.model_dim, rng, dtype=dtype)
        self.encoder = TransformerEncoder(cfg.graph_layers, cfg.model_dim, cfg.heads, cfg.ff_dim, rng, dtype,
                                          cfg.dropout)
        self.bundle = bundle
        self.dropout = cfg.dropout
        self.dtype = dtype

    def concept_ids(self, concepts: Sequence[str]) -> List[int]:
        return [self.bundle.concept.index(c) for c in concepts]

    def _inputs(self, ids: Sequence[int], concepts: Sequence[str], start: int) -> Tensor:
        chars = [[] if i == self.dummy_id else self.bundle.chars(c) for i, c in zip(ids, concepts)]
        x = ag.concat([self.concept(ids), self.chars(chars)], axis=1)
        x = self.proj(x) + sinusoidal_positions(len(ids), self.proj.weight.shape[1], start, self.dtype)
        return self.drop(x, self.dropout)

    def __call__(self, concepts: Sequence[str]) -> Tensor:
        """Batch causal encoding of the dummy node followed by ``concepts``."""
        ids = [self.dummy_id] + self.concept_ids(concepts)
        return self.encoder(self._inputs(ids, ["<dummy>"] + list(concepts), 0), causal=True)

    def initial_memory(self) -> GraphMemory:
        return self.append(None, None)

    def append(self, memory: Optional[GraphMemory], concept: Optional[str]) -> GraphMemory:
        if memory is None:
            cid, name, cache = self.dummy_id, "<dummy>", [None] * len(self.encoder.layers)
            prev_ids, prev_names, prev_states = (), (), None
        else:
            cid, name, cache = self.concept_ids([concept])[0], concept, list(memory.cache)
            prev_ids, prev_names, prev_states = memory.concept_ids, memory.concepts, memory.states
        x = self._inputs([cid], [name], len(prev_ids))
        v, cache = self.encoder.step(cache, x)
        states = v if prev_states is None else ag.concat([prev_states, v], axis=0)
        return GraphMemory(prev_ids + (cid,), prev_names + (name,), states, tuple(cache))
