"""The graph-spanning parser: one expansion step, teacher forcing, greedy and beam decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .amr import (
    DUMMY_INDEX,
    ROOT_RELATION,
    STOP,
    AmrGraph,
    SpanningAction,
    StructureError,
    rebuild,
)
from .autograd import Parameter, Tensor
from .config import TrainConfig
from .encoders import GraphEncoder, GraphMemory, SentenceEncoder, SentenceEncoding
from .nn import NEG_INF, AttentionScorer, Biaffine, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from .vocab import SentenceFeatures, VocabBundle

__all__ = [
    "GSPModel",
    "ParserState",
    "ArcDecision",
    "ConceptDecision",
    "StepResult",
    "Hypothesis",
    "DecodeResult",
    "choose_parents",
    "decode_greedy",
    "decode_forced",
    "beam_search",
    "ARC_THRESHOLD",
    "PROB_FLOOR",
]

ARC_THRESHOLD = 0.5
PROB_FLOOR = 1e-12
_STAGES = ("focus", "arc", "concept")
MODES = ("copy", "map", "gen")


@dataclass
class ParserState:
    """The writable parser state h_t for one or more stacked steps.

    ``stage`` records which update was applied last; the model methods
    enforce the order focus -> arc -> concept.
    """

    h: Tensor
    step: int
    stage: str = "focus"

    def advance(self, expected: str, new_stage: str, h: Tensor) -> "ParserState":
        if self.stage != expected:
            raise RuntimeError(f"parser state is at stage {self.stage!r}, expected {expected!r}")
        return ParserState(h, self.step, new_stage)


@dataclass
class ArcDecision:
    heads: Tensor  # (k, R, t) per-head distributions over existing nodes
    pooled: Tensor  # (R, t) max over heads
    parents: Optional[List[int]] = None


@dataclass
class ConceptDecision:
    alignment: Tensor  # (R, n) over tokens
    modes: Tensor  # (R, 3) copy / map / gen
    generation: Tensor  # (R, |concept vocab|)

    def distribution(self, row: int, feats: SentenceFeatures, bundle: VocabBundle) -> Dict[str, float]:
        """P(c) over the union of vocabulary, input tokens and mapped concepts."""
        align = self.alignment.data[row]
        p_copy, p_map, p_gen = self.modes.data[row]
        gen = self.generation.data[row]
        dist: Dict[str, float] = {}
        for idx in range(2, len(bundle.concept)):
            dist[bundle.concept[idx]] = float(p_gen * gen[idx])
        for i, tok in enumerate(feats.tokens):
            dist[tok] = dist.get(tok, 0.0) + float(p_copy * align[i])
        for i, c in enumerate(feats.mapped):
            dist[c] = dist.get(c, 0.0) + float(p_map * align[i])
        return dist


class FocusLayer(Module):
    def __init__(self, cfg: TrainConfig, rng, dtype):
        d = cfg.model_dim
        self.sentence_attn = MultiHeadAttention(d, cfg.heads, rng, dtype=dtype, dropout=cfg.dropout)
        self.ln1 = LayerNorm(d, dtype)
        self.graph_attn = MultiHeadAttention(d, cfg.heads, rng, dtype=dtype, dropout=cfg.dropout)
        self.ln2 = LayerNorm(d, dtype)
        self.ff = FeedForward(d, cfg.ff_dim, rng, dtype, cfg.dropout)
        self.dropout = cfg.dropout

    def __call__(self, h: Tensor, sentence: Tensor, graph: Tensor, mask: Optional[np.ndarray]) -> Tensor:
        a, _ = self.sentence_attn(h, sentence)
        x1 = self.ln1(h + self.drop(a, self.dropout))
        b, _ = self.graph_attn(x1, graph, mask)
        x2 = self.ln2(x1 + self.drop(b, self.dropout))
        return self.ff(x2)


class GSPModel(Module):
    def __init__(self, config: TrainConfig, bundle: VocabBundle, seed: Optional[int] = None):
        self.config = config
        self.bundle = bundle
        dtype = np.dtype(config.dtype)
        self.dtype = dtype
        rng = np.random.default_rng(config.seed if seed is None else seed)
        d = config.model_dim
        self.sentence_encoder = SentenceEncoder(config, bundle, rng, dtype)
        self.graph_encoder = GraphEncoder(config, bundle, rng, dtype)
        self.focus = [FocusLayer(config, rng, dtype) for _ in range(config.focus_layers)]
        self.arc_attn = AttentionScorer(d, d, config.arc_heads, rng, dtype)
        self.arc_proj = Linear(d, d, rng, bias=False, dtype=dtype)
        self.arc_ln = LayerNorm(d, dtype)
        self.align_attn = AttentionScorer(d, d, 1, rng, dtype)
        self.concept_proj = Linear(d, d, rng, bias=False, dtype=dtype)
        self.concept_ln = LayerNorm(d, dtype)
        self.mode = Linear(d, 3, rng, dtype=dtype)
        bound = math.sqrt(6.0 / (len(bundle.concept) + d))
        self.gen_weight = Parameter(rng.uniform(-bound, bound, size=(len(bundle.concept), d)).astype(dtype))
        self.classifier = Biaffine(d, d, config.rel_dim, len(bundle.relation), rng, dtype)
        self.gen_mask = np.zeros(len(bundle.concept), dtype=dtype)
        self.gen_mask[:2] = NEG_INF
        self.label_mask = np.zeros(len(bundle.relation), dtype=dtype)
        self.label_mask[: 2 if len(bundle.relation) > 2 else 1] = NEG_INF

    # ------------------------------------------------------------------ pieces

    def encode_sentence(self, feats: SentenceFeatures) -> SentenceEncoding:
        return self.sentence_encoder(feats)

    def focus_selection(self, sent: SentenceEncoding, graph: Tensor, mask: Optional[np.ndarray], rows: int,
                        step: int = 1, layers: Optional[int] = None) -> ParserState:
        """h starts from the sentence summary and re-reads sentence and graph per layer."""
        h = sent.summary
        if rows > 1:
            h = h + ag.Tensor(np.zeros((rows, h.shape[1]), dtype=self.dtype))
        for layer in self.focus[: layers if layers is not None else len(self.focus)]:
            h = layer(h, sent.states, graph, mask)
        return ParserState(h, step, "focus")

    def relation_identification(self, state: ParserState, graph: Tensor, mask: Optional[np.ndarray]
                                ) -> Tuple[ArcDecision, ParserState]:
        heads = self.arc_attn(state.h, graph, mask)
        pooled = heads.max(axis=0)
        h = self.arc_ln(state.h + self.arc_proj(pooled @ graph))
        return ArcDecision(heads, pooled), state.advance("focus", "arc", h)

    def concept_prediction(self, state: ParserState, sent: SentenceEncoding) -> Tuple[ConceptDecision, ParserState]:
        align = self.align_attn(state.h, sent.states)[0]
        h = self.concept_ln(state.h + self.concept_proj(align @ sent.states))
        modes = ag.softmax(self.mode(h), axis=-1)
        gen = ag.softmax(h @ self.gen_weight.T + self.gen_mask, axis=-1)
        return ConceptDecision(align, modes, gen), state.advance("arc", "concept", h)

    def relation_classification(self, h: Tensor, heads: Tensor) -> Tensor:
        """Label log-probabilities for paired child states ``h`` and head node states."""
        return ag.log_softmax(self.classifier(h, heads) + self.label_mask, axis=-1)

    # --------------------------------------------------------- teacher forcing

    def teacher_forced(self, feats: SentenceFeatures, actions: Sequence[SpanningAction]) -> dict:
        """Log-probability terms of a gold action sequence (ending with the stop action)."""
        if not actions or not actions[-1].is_stop:
            raise StructureError("gold action sequence must end with the stop action")
        bundle = self.bundle
        T = len(actions)
        sent = self.encode_sentence(feats)
        graph = self.graph_encoder([a.concept for a in actions[:-1]])
        mask = np.where(np.arange(T)[None, :] <= np.arange(T)[:, None], 0.0, NEG_INF)
        state = self.focus_selection(sent, graph, mask, T)
        arcs, state = self.relation_identification(state, graph, mask)
        concepts, state = self.concept_prediction(state, sent)

        n = len(feats.tokens)
        copy_ind = np.zeros((T, n), dtype=self.dtype)
        map_ind = np.zeros((T, n), dtype=self.dtype)
        gen_ind = np.zeros((T, len(bundle.concept)), dtype=self.dtype)
        for r, a in enumerate(actions):
            for i in range(n):
                copy_ind[r, i] = feats.tokens[i] == a.concept
                map_ind[r, i] = feats.mapped[i] == a.concept
            idx = bundle.concept.stoi.get(a.concept, 1)
            if idx >= 2:
                gen_ind[r, idx] = 1.0
        modes = concepts.modes
        p = (modes[:, 0] * (concepts.alignment * copy_ind).sum(axis=1)
             + modes[:, 1] * (concepts.alignment * map_ind).sum(axis=1)
             + modes[:, 2] * (concepts.generation * gen_ind).sum(axis=1))
        clamped = int((p.data < PROB_FLOOR).sum())
        concept_lp = ag.log(ag.clip_min(p, PROB_FLOOR))

        arc_rows, arc_cols, lab_rows, lab_cols, lab_ids = [], [], [], [], []
        unknown_labels = 0
        for r, a in enumerate(actions[:-1]):
            if r == 0:
                continue  # the root attaches to nothing
            for i in a.parent_indices:
                arc_rows.append(r)
                arc_cols.append(i)
            for i, rel in a.parents:
                rid = bundle.relation.stoi.get(rel)
                if rid is None or rid < 2:
                    unknown_labels += 1
                    continue
                lab_rows.append(r)
                lab_cols.append(i)
                lab_ids.append(rid)
        if arc_rows:
            arc_p = arcs.pooled[np.array(arc_rows), np.array(arc_cols)]
            clamped += int((arc_p.data < PROB_FLOOR).sum())
            arc_lp = ag.log(ag.clip_min(arc_p, PROB_FLOOR))
        else:
            arc_lp = ag.Tensor(np.zeros(0, dtype=self.dtype))
        if self.config.arc_loss == "binary":
            gold = set(zip(arc_rows, arc_cols))
            neg = [(r, j) for r in range(1, T - 1) for j in range(1, r + 1) if (r, j) not in gold]
            if neg:
                rows, cols = map(np.array, zip(*neg))
                miss = 1.0 - arcs.pooled[rows, cols]
                arc_lp = ag.concat([arc_lp, ag.log(ag.clip_min(miss, PROB_FLOOR))], axis=0)
        if lab_rows:
            lp = self.relation_classification(state.h[np.array(lab_rows)], graph[np.array(lab_cols)])
            label_lp = lp[np.arange(len(lab_ids)), np.array(lab_ids)]
        else:
            label_lp = ag.Tensor(np.zeros(0, dtype=self.dtype))
        return {
            "concept": concept_lp,
            "arc": arc_lp,
            "label": label_lp,
            "clamped": clamped,
            "unknown_labels": unknown_labels,
        }

    def log_probability(self, feats: SentenceFeatures, actions: Sequence[SpanningAction]) -> float:
        with ag.no_grad():
            parts = self.teacher_forced(feats, actions)
        return float(parts["concept"].data.sum() + parts["arc"].data.sum() + parts["label"].data.sum())

    # ------------------------------------------------------------ decoding step

    def step(self, sent: SentenceEncoding, memory: GraphMemory) -> "StepResult":
        """One expansion step t = len(memory) under ``no_grad``."""
        t = len(memory)
        graph = memory.states
        with ag.no_grad():
            state = self.focus_selection(sent, graph, None, 1, step=t)
            arcs, state = self.relation_identification(state, graph, None)
            pooled = arcs.pooled.data[0]
            parents = choose_parents(pooled, t)
            arcs.parents = parents
            concepts, state = self.concept_prediction(state, sent)
            dist = concepts.distribution(0, sent.features, self.bundle)
            struct_lp = 0.0
            labeled: List[Tuple[int, str]] = []
            if parents:
                idx = np.array(parents)
                h = state.h[np.zeros(len(parents), dtype=np.int64)]
                lp = self.relation_classification(h, graph[idx]).data
                best = lp.argmax(axis=1)
                for j, b, row in zip(parents, best, lp):
                    labeled.append((j, self.bundle.relation[int(b)]))
                    struct_lp += float(row[b])
                struct_lp += float(np.log(np.maximum(pooled[idx], PROB_FLOOR)).sum())
            else:
                labeled = [(DUMMY_INDEX, ROOT_RELATION)]
        return StepResult(t, labeled, struct_lp, dist, arcs, concepts)


def choose_parents(pooled: np.ndarray, t: int) -> List[int]:
    """pred(t): existing nodes with pooled arc probability >= 0.5, else the best one.

    Step 1 creates the root, which has no parents. The dummy node is never a parent.
    """
    if t <= 1:
        return []
    cand = pooled[1:t]
    chosen = [j + 1 for j in np.flatnonzero(cand >= ARC_THRESHOLD)]
    if not chosen:
        chosen = [int(np.argmax(cand)) + 1]
    return [int(j) for j in chosen]


@dataclass
class StepResult:
    step: int
    parents: List[Tuple[int, str]]
    structure_log_prob: float
    distribution: Dict[str, float]
    arcs: ArcDecision
    concepts: ConceptDecision

    def ranked(self) -> List[Tuple[str, float]]:
        """Candidates by single-step log-probability (concept, arcs and labels; stop counts only its concept).

        The stop concept is not offered at step 1.
        """
        out = []
        for c, p in self.distribution.items():
            if p <= 0.0 or (c == STOP and self.step == 1):
                continue  # a graph has at least one node
            score = math.log(p) + (0.0 if c == STOP else self.structure_log_prob)
            out.append((c, score))
        # stable: ties keep distribution order
        out.sort(key=lambda cs: -cs[1])
        return out

    def action(self, concept: str) -> SpanningAction:
        if concept == STOP:
            return SpanningAction(self.step, STOP, ())
        return SpanningAction(self.step, concept, tuple(self.parents))


@dataclass
class Hypothesis:
    actions: Tuple[SpanningAction, ...]
    memory: GraphMemory
    score: float
    finished: bool = False


@dataclass
class DecodeResult:
    graph: Optional[AmrGraph]
    actions: List[SpanningAction]
    log_prob: float
    truncated: bool = False
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.graph is not None


def _finish(actions: Sequence[SpanningAction], score: float, truncated: bool, sentence_text: str,
            beam: int) -> DecodeResult:
    actions = list(actions)
    if truncated:
        actions = actions + [SpanningAction(len(actions) + 1, STOP, ())]
    if len(actions) <= 1:
        return DecodeResult(None, actions, score, truncated, "empty graph: stop predicted at step 1")
    meta = {
        "snt": sentence_text,
        "gsp-logprob": f"{score:.6f}",
        "gsp-truncated": "yes" if truncated else "no",
        "gsp-arc-rule": f"pooled>={ARC_THRESHOLD} else argmax",
        "gsp-beam": f"{beam} (arcs and labels greedy per hypothesis)",
    }
    return DecodeResult(rebuild(actions, meta), actions, score, truncated)


def default_step_cap(n_tokens: int) -> int:
    return 3 * n_tokens + 10


def decode_greedy(model: GSPModel, feats: SentenceFeatures, step_cap: Optional[int] = None) -> DecodeResult:
    """Expand until the stop concept, taking the best single-step candidate each time."""
    cap = step_cap if step_cap is not None else default_step_cap(len(feats.tokens))
    model.eval()
    with ag.no_grad():
        sent = model.encode_sentence(feats)
        memory = model.graph_encoder.initial_memory()
        actions: List[SpanningAction] = []
        score = 0.0
        for _ in range(cap):
            res = model.step(sent, memory)
            concept, s = res.ranked()[0]
            score += s
            actions.append(res.action(concept))
            if concept == STOP:
                return _finish(actions, score, False, feats.sentence.text, 1)
            memory = model.graph_encoder.append(memory, concept)
    return _finish(actions, score, True, feats.sentence.text, 1)


def decode_forced(model: GSPModel, feats: SentenceFeatures, concepts: Sequence[str]) -> DecodeResult:
    """Follow a given concept sequence, choosing arcs and labels as the decoder would."""
    model.eval()
    with ag.no_grad():
        sent = model.encode_sentence(feats)
        memory = model.graph_encoder.initial_memory()
        actions, score = [], 0.0
        for c in concepts:
            res = model.step(sent, memory)
            p = res.distribution.get(c, 0.0)
            if p <= 0.0:
                return DecodeResult(None, actions, -math.inf, False, f"concept {c!r} has zero probability")
            score += math.log(p) + (0.0 if c == STOP else res.structure_log_prob)
            actions.append(res.action(c))
            if c == STOP:
                break
            memory = model.graph_encoder.append(memory, c)
    finished = bool(actions) and actions[-1].is_stop
    return _finish(actions, score, not finished, feats.sentence.text, 0)


def beam_search(model: GSPModel, feats: SentenceFeatures, beam_size: int = 8,
                step_cap: Optional[int] = None) -> DecodeResult:
    """Keep the ``beam_size`` best partial graphs by summed log-probability.

    Each live hypothesis proposes its top-K concepts; arcs and labels are the
    hypothesis' greedy choices and their log-probabilities enter the score.
    Finished hypotheses compete unnormalized.
    """
    if beam_size < 1:
        raise ValueError("beam size must be >= 1")
    cap = step_cap if step_cap is not None else default_step_cap(len(feats.tokens))
    model.eval()
    with ag.no_grad():
        sent = model.encode_sentence(feats)
        live = [Hypothesis((), model.graph_encoder.initial_memory(), 0.0)]
        finished: List[Hypothesis] = []
        for _ in range(cap):
            pool = []
            for hi, hyp in enumerate(live):
                res = model.step(sent, hyp.memory)
                for rank, (c, s) in enumerate(res.ranked()[:beam_size]):
                    pool.append((hyp.score + s, hi, rank, hyp, res, c))
            pool.sort(key=lambda e: (-e[0], e[1], e[2]))
            live = []
            for score, _, _, hyp, res, c in pool[:beam_size]:
                actions = hyp.actions + (res.action(c),)
                if c == STOP:
                    finished.append(Hypothesis(actions, hyp.memory, score, True))
                else:
                    live.append(Hypothesis(actions, model.graph_encoder.append(hyp.memory, c), score))
            if not live:
                break
            if finished and max(f.score for f in finished) >= live[0].score:
                break
    text = feats.sentence.text
    nonempty = [f for f in finished if len(f.actions) > 1]
    if nonempty:
        best = max(nonempty, key=lambda f: f.score)
        return _finish(best.actions, best.score, False, text, beam_size)
    if live:
        best = max(live, key=lambda h: h.score)
        return _finish(best.actions, best.score, True, text, beam_size)
    best = finished[0]
    return _finish(best.actions, best.score, False, text, beam_size)
