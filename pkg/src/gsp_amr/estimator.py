"""scikit-learn style wrapper around training and decoding."""

from __future__ import annotations

import logging
from typing import Any, List, Mapping, Optional, Sequence, Union

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .amr import AmrGraph
from .config import TrainConfig
from .decoder import DecodeResult, beam_search, decode_greedy
from .metrics import corpus_scores
from .training import _placeholder, load_model, postprocess, save_model, train
from .validation import check_alignments, check_consistent_length, check_graphs, check_sentences
from .vocab import sentence_features

__all__ = ["GSPParser"]

log = logging.getLogger(__name__)


def _resolve_config(config: Union[None, str, Mapping, TrainConfig]) -> TrainConfig:
    if config is None or config == "toy":
        return TrainConfig.toy()
    if config == "default":
        return TrainConfig()
    if isinstance(config, TrainConfig):
        return config
    if isinstance(config, Mapping):
        data = dict(config)
        return TrainConfig.toy(**data) if data.pop("base", None) == "toy" else TrainConfig.from_dict(data)
    raise TypeError(f"config must be None, 'toy', 'default', a dict or TrainConfig, got {type(config).__name__}")


class GSPParser(BaseEstimator):
    """Sentence -> AMR graph parser.

    ``X`` holds sentences (annotated, raw strings, token lists or JSON
    records) and ``y`` the gold graphs (``AmrGraph`` or PENMAN strings).
    ``config`` may be ``"toy"`` (default), ``"default"`` for the full-size
    settings, a dict of overrides, or a ``TrainConfig``.
    """

    def __init__(self, config: Union[None, str, Mapping, TrainConfig] = "toy", beam_size: int = 8,
                 step_cap: Optional[int] = None, postprocess: bool = True, restarts: int = 4, verbose: int = 0):
        self.config = config
        self.beam_size = beam_size
        self.step_cap = step_cap
        self.postprocess = postprocess
        self.restarts = restarts
        self.verbose = verbose

    def fit(self, X: Sequence[Any], y: Sequence[Any], alignments: Optional[Mapping] = None,
            X_dev: Optional[Sequence[Any]] = None, y_dev: Optional[Sequence[Any]] = None) -> "GSPParser":
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        sentences, graphs = check_sentences(X), check_graphs(y)
        check_consistent_length(sentences, graphs)
        graphs = [g if g.metadata.get("id") else g.with_metadata(id=s.graph_id or f"train-{k}")
                  for k, (s, g) in enumerate(zip(sentences, graphs))]
        dev = None
        if X_dev is not None or y_dev is not None:
            if X_dev is None or y_dev is None:
                raise ValueError("X_dev and y_dev must be given together")
            dev_s, dev_g = check_sentences(X_dev), check_graphs(y_dev)
            check_consistent_length(dev_s, dev_g)
            dev = list(zip(dev_s, dev_g))
        cfg = _resolve_config(self.config)
        callback = (lambda rec: print(rec, flush=True)) if self.verbose else None
        result = train(list(zip(sentences, graphs)), cfg, dev, check_alignments(alignments, graphs),
                       callback=callback)
        self.model_ = result.model
        self.bundle_ = result.bundle
        self.config_ = cfg
        self.history_ = result.log
        self.best_score_ = result.best_score
        self.stopped_ = result.stopped
        self.predicates_ = sorted({lem for s in sentences for lem, tag in zip(s.lemmas, s.pos)
                                   if tag.upper().startswith("VB")})
        return self

    def decode(self, X: Sequence[Any]) -> List[DecodeResult]:
        """Raw decoder results, including failures and truncation flags."""
        check_is_fitted(self, "model_")
        out = []
        for sent in check_sentences(X):
            feats = sentence_features(sent, self.bundle_)
            if self.beam_size == 1:
                out.append(decode_greedy(self.model_, feats, self.step_cap))
            else:
                out.append(beam_search(self.model_, feats, self.beam_size, self.step_cap))
        return out

    def finalize(self, result: DecodeResult) -> AmrGraph:
        """Postprocessed graph for one decode; failures become a placeholder."""
        if result.graph is None:
            log.warning("decoding failed (%s); emitting a placeholder graph", result.error)
            return _placeholder()
        if self.postprocess:
            return postprocess(result.graph, self.bundle_.sense_table, self.predicates_, self.bundle_.wiki_table)
        return result.graph

    def predict(self, X: Sequence[Any]) -> List[AmrGraph]:
        return [self.finalize(res) for res in self.decode(X)]

    def score(self, X: Sequence[Any], y: Sequence[Any]) -> float:
        """Corpus-level ordinary Smatch F1."""
        gold = check_graphs(y)
        pred = self.predict(X)
        check_consistent_length(pred, gold)
        report = corpus_scores(list(zip(pred, gold)), restarts=self.restarts, metrics=("smatch",))
        return report["corpus"]["smatch"]["f1"]

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        extra = {"estimator": {k: v for k, v in self.get_params().items() if k != "config"},
                 "predicates": self.predicates_, "history": self.history_}
        save_model(path, self.model_, extra)

    @classmethod
    def load(cls, path) -> "GSPParser":
        model, header = load_model(path, with_header=True)
        extra = header.get("extra", {})
        est = cls(config=header["config"], **extra.get("estimator", {}))
        est.model_ = model
        est.bundle_ = est.model_.bundle
        est.config_ = est.model_.config
        est.history_ = extra.get("history", [])
        est.predicates_ = extra.get("predicates", [])
        est.best_score_ = max((r.get("dev_smatch", float("-inf")) for r in est.history_), default=float("-inf"))
        est.stopped_ = "loaded"
        return est
