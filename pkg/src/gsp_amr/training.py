"""Maximum-likelihood training of the graph-spanning parser."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .amr import AmrGraph, Node, OrderStrategy, SpanningAction, linearize, looks_literal, relation_frequency_table
from .config import TrainConfig
from .corpus import AnnotatedSentence
from .decoder import GSPModel, decode_greedy
from .metrics import corpus_scores
from .nn import load_checkpoint, save_checkpoint
from .vocab import SENSE, VocabBundle, build_vocabularies, sentence_features

__all__ = [
    "LossParts",
    "compute_loss",
    "Adam",
    "learning_rate",
    "TrainResult",
    "train",
    "evaluate",
    "postprocess",
    "save_model",
    "load_model",
    "order_strategy",
]

log = logging.getLogger(__name__)

Pair = Tuple[AnnotatedSentence, AmrGraph]


@dataclass
class LossParts:
    total: ag.Tensor
    concept: float
    arc: float
    label: float
    clamped: int = 0


def compute_loss(model: GSPModel, graph: AmrGraph, sentence: AnnotatedSentence,
                 strategy: OrderStrategy = OrderStrategy(), seed: int = 0,
                 rng: Optional[np.random.Generator] = None,
                 actions: Optional[Sequence[SpanningAction]] = None) -> LossParts:
    """Negative log-likelihood of the gold graph under teacher forcing.

    Sum over steps of the concept, arc and label terms; UNK replacement is
    applied to encoder inputs when the model is training.
    """
    cfg = model.config
    unk = cfg.unk_rate if model.training else 0.0
    feats = sentence_features(sentence, model.bundle, unk, rng)
    if actions is None:
        actions = linearize(graph, strategy, seed)
    parts = model.teacher_forced(feats, actions)
    if parts["clamped"]:
        log.warning("%d gold probabilities clamped at 1e-12", parts["clamped"])
    c, a, l = -parts["concept"].sum(), -parts["arc"].sum(), -parts["label"].sum()
    return LossParts(c + a + l, c.item(), a.item(), l.item(), parts["clamped"])


def learning_rate(step: int, model_dim: int, warmup: int, scale: float = 1.0) -> float:
    """Inverse square-root schedule with linear warmup."""
    step = max(step, 1)
    return scale * model_dim ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


class Adam:
    def __init__(self, params: Sequence[ag.Parameter], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-9):
        self.params = [p for p in params if p.trainable]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float, scale: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * scale
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def order_strategy(config: TrainConfig, graphs: Iterable[AmrGraph]) -> OrderStrategy:
    return OrderStrategy(config.order, relation_frequency_table(graphs))


@dataclass
class TrainResult:
    model: GSPModel
    bundle: VocabBundle
    log: List[dict] = field(default_factory=list)
    best_score: float = float("-inf")
    best_epoch: int = 0
    stopped: str = "epochs"


def evaluate(model: GSPModel, pairs: Sequence[Pair], restarts: int = 4, seed: int = 0) -> dict:
    """Greedy-decode each sentence and score against gold with ordinary Smatch."""
    scored = []
    failures = 0
    for sent, gold in pairs:
        res = decode_greedy(model, sentence_features(sent, model.bundle))
        pred = res.graph if res.graph is not None else _placeholder()
        failures += res.graph is None
        scored.append((pred, gold))
    report = corpus_scores(scored, restarts=restarts, seed=seed, metrics=("smatch",))
    report["corpus"]["failures"] = failures
    return report["corpus"]


def _placeholder() -> AmrGraph:
    return AmrGraph([Node("n1", "amr-empty")], [], "n1", {"gsp-error": "empty graph"})


def train(pairs: Sequence[Pair], config: TrainConfig, dev: Optional[Sequence[Pair]] = None,
          alignments: Optional[Mapping] = None, bundle: Optional[VocabBundle] = None,
          callback: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Train with Adam and early stopping on dev Smatch (greedy decoding).

    ``combined`` ordering resamples each graph's sibling order every epoch;
    ``relation-freq`` uses one deterministic linearization throughout.
    """
    if not pairs:
        raise ValueError("empty training corpus")
    bundle = bundle or build_vocabularies(pairs, alignments, config.min_concept_freq, config.min_token_freq)
    model = GSPModel(config, bundle)
    strategy = order_strategy(config, [g for _, g in pairs])
    optim = Adam(model.parameters(), config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)
    dev = dev if dev is not None else pairs
    fixed = {}
    if config.order == "relation-freq":
        fixed = {k: linearize(g, strategy, config.seed) for k, (_, g) in enumerate(pairs)}

    result = TrainResult(model, bundle)
    best_state = {k: v.copy() for k, v in model.state_dict().items()}
    last_good = best_state
    since_best = 0
    updates = 0
    pending = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        model.train(True, rng)
        order = rng.permutation(len(pairs))
        sums = {"loss": 0.0, "concept": 0.0, "arc": 0.0, "label": 0.0, "clamped": 0}
        diverged = False
        for k in order:
            sent, graph = pairs[k]
            seed = config.seed * 1_000_003 + epoch * 7_919 + int(k)
            parts = compute_loss(model, graph, sent, strategy, seed, rng, actions=fixed.get(int(k)))
            value = parts.total.item()
            if not math.isfinite(value):
                diverged = True
                break
            parts.total.backward()
            sums["loss"] += value
            sums["concept"] += parts.concept
            sums["arc"] += parts.arc
            sums["label"] += parts.label
            sums["clamped"] += parts.clamped
            pending += 1
            if pending == config.batch_size:
                updates += 1
                lr = learning_rate(updates, config.model_dim, config.warmup, config.lr_scale)
                optim.step(lr, 1.0 / pending)
                optim.zero_grad()
                pending = 0
        if diverged:
            model.load_state_dict(last_good)
            result.stopped = "diverged"
            log.error("loss became non-finite in epoch %d; restored last good parameters", epoch)
            break
        last_good = {k: v.copy() for k, v in model.state_dict().items()}
        record = {"epoch": epoch, "loss": sums["loss"] / len(pairs), "concept_loss": sums["concept"] / len(pairs),
                  "arc_loss": sums["arc"] / len(pairs), "label_loss": sums["label"] / len(pairs),
                  "clamped": sums["clamped"], "lr": learning_rate(max(updates, 1), config.model_dim, config.warmup,
                                                                  config.lr_scale),
                  "updates": updates}
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            model.eval()
            scores = evaluate(model, dev, seed=config.seed)
            record["dev_smatch"] = scores["smatch"]["f1"]
            record["dev_complete_match"] = scores["complete_match"]
            if record["dev_smatch"] > result.best_score:
                result.best_score, result.best_epoch = record["dev_smatch"], epoch
                best_state = {k: v.copy() for k, v in model.state_dict().items()}
                since_best = 0
            else:
                since_best += config.eval_every
        record["seconds"] = time.perf_counter() - t0
        result.log.append(record)
        if callback is not None:
            callback(record)
        log.info("epoch %d loss %.4f dev %s", epoch, record["loss"], record.get("dev_smatch"))
        if result.best_score >= 1.0:
            result.stopped = "perfect-dev"
            break
        if since_best >= config.patience:
            result.stopped = "early-stopping"
            break
    model.load_state_dict(best_state)
    model.eval()
    return result


# ---------------------------------------------------------------------------
# postprocessing


def _is_bare(concept: str) -> bool:
    return not SENSE.match(concept) and not looks_literal(concept) and concept.replace("-", "").isalpha()


def postprocess(graph: AmrGraph, sense_table: Mapping[str, str], predicates: Iterable[str] = (),
                wiki_table: Optional[Mapping[str, str]] = None) -> AmrGraph:
    """Restore word senses on bare predicates and fill ``:wiki`` values.

    A bare concept gets the training-set majority sense when the table has
    one; a concept listed in ``predicates`` but absent from the table gets
    ``-01``. Other concepts are unchanged. ``:wiki`` constants take the most
    frequent training value for the node's name, defaulting to ``-``.
    """
    predicates = set(predicates)
    nodes = []
    for n in graph.nodes:
        c = n.concept
        if not n.is_constant and _is_bare(c):
            if c in sense_table:
                c = c + sense_table[c]
            elif c in predicates:
                c = c + "-01"
        nodes.append(Node(n.id, c, n.is_constant))
    if wiki_table is not None:
        from .vocab import _name_key

        fixed = {}
        for e in graph.edges:
            if e.relation == ":wiki" and graph.node(e.child).is_constant:
                key = _name_key(graph, e.head)
                fixed[e.child] = wiki_table.get(key, "-") if key else "-"
        nodes = [Node(n.id, fixed.get(n.id, n.concept), n.is_constant) for n in nodes]
    return AmrGraph(nodes, graph.edges, graph.root, graph.metadata)


# ---------------------------------------------------------------------------
# persistence


def save_model(path, model: GSPModel, extra: Optional[dict] = None) -> None:
    header = {
        "format": "gsp-amr-checkpoint/1",
        "config": model.config.to_dict(),
        "config_hash": model.config.hash(),
        "vocab": model.bundle.to_json(),
        "vocab_hash": model.bundle.hash(),
    }
    if extra:
        header["extra"] = extra
    save_checkpoint(path, model.state_dict(), header)


def load_model(path, with_header: bool = False):
    """Rebuild a model from a checkpoint; optionally also return the header."""
    header, state = load_checkpoint(path)
    config = TrainConfig.from_dict(header["config"])
    bundle = VocabBundle.from_json(header["vocab"])
    if bundle.hash() != header.get("vocab_hash"):
        raise ValueError(f"{path}: vocabulary hash mismatch")
    model = GSPModel(config, bundle)
    model.load_state_dict(state)
    model.eval()
    return (model, header) if with_header else model
