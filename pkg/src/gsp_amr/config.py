"""Model and training hyper-parameters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .nn import stable_hash

__all__ = ["TrainConfig"]


@dataclass(frozen=True)
class TrainConfig:
    # transformer layers (shared settings)
    model_dim: int = 512
    heads: int = 8
    ff_dim: int = 1024
    sentence_layers: int = 4
    graph_layers: int = 1
    focus_layers: int = 3
    arc_heads: int = 8
    # "positive": only gold parents enter the arc term; "binary" adds log(1 - p) for non-parents
    arc_loss: str = "positive"
    # input embeddings
    lemma_dim: int = 200
    pos_dim: int = 32
    ner_dim: int = 16
    concept_dim: int = 300
    char_dim: int = 32
    char_filters: int = 256
    char_width: int = 3
    char_out: int = 128
    rel_dim: int = 100
    # regularization and optimization
    dropout: float = 0.2
    unk_rate: float = 0.33
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-9
    warmup: int = 2000
    lr_scale: float = 1.0
    batch_size: int = 1
    epochs: int = 100
    patience: int = 10
    eval_every: int = 1
    order: str = "combined"
    seed: int = 0
    dtype: str = "float32"
    min_concept_freq: int = 1
    min_token_freq: int = 1

    def __post_init__(self):
        for name in ("dropout", "unk_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if self.model_dim % self.heads or self.model_dim % self.arc_heads:
            raise ValueError("model_dim must be divisible by heads and arc_heads")
        if self.order not in ("random", "relation-freq", "combined"):
            raise ValueError(f"unknown order {self.order!r}")
        if self.arc_loss not in ("positive", "binary"):
            raise ValueError(f"unknown arc_loss {self.arc_loss!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Desk-scale configuration used for verification and the synthetic corpus."""
        base = dict(
            model_dim=16, heads=2, ff_dim=32, sentence_layers=1, graph_layers=1, focus_layers=1, arc_heads=2,
            arc_loss="binary", lemma_dim=16, pos_dim=4, ner_dim=4, concept_dim=16, char_dim=8, char_filters=16,
            char_out=8, rel_dim=8, dropout=0.0, unk_rate=0.0, warmup=200, lr_scale=0.1, epochs=500, patience=500,
            eval_every=5, dtype="float64",
        )
        base.update(overrides)
        return cls.from_dict(base)

    def scaled(self, factor: float) -> "TrainConfig":
        """Shrink every layer size by one factor, keeping head divisibility."""
        def s(v, multiple=1):
            return max(multiple, int(round(v * factor / multiple)) * multiple)

        mult = max(self.heads, self.arc_heads)
        return replace(
            self, model_dim=s(self.model_dim, mult), ff_dim=s(self.ff_dim), lemma_dim=s(self.lemma_dim),
            pos_dim=s(self.pos_dim), ner_dim=s(self.ner_dim), concept_dim=s(self.concept_dim),
            char_dim=s(self.char_dim), char_filters=s(self.char_filters), char_out=s(self.char_out),
            rel_dim=s(self.rel_dim), warmup=max(1, int(round(self.warmup * factor))),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        base = data.pop("base", "default")
        if base == "toy":
            return cls.toy(**data)
        return cls.from_dict(data)

    def hash(self) -> str:
        return stable_hash(self.to_dict())
