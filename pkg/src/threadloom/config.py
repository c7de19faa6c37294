"""Run configuration: flat ``key = value`` files plus command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .loss import HrlWeights
from .model import ModelConfig


@dataclass
class RunConfig:
    # model dims (hidden sizes scaled down from 768 / 300)
    hidden_size: int = 64
    label_embedding_dim: int = 10
    egcn_layer_num: int = 2
    ffnn_hidden_size: int = 32
    hash_buckets: int = 2048
    activate_function: str = "relu"
    omega: int = 50
    # loss
    alpha1: float = 1.0
    alpha2: float = 0.1
    alpha3: float = 0.05
    use_l2: bool = True
    use_l3: bool = True
    # regularisation / training
    dropout: float = 0.2
    teacher_forcing_rate: float = 0.15
    learning_rate: float = 0.05
    clip_norm: float = 5.0
    epoch_size: int = 4
    batch_size: int = 2
    optimizer: str = "sgd"
    seed: int = 0
    # graph ablations
    use_speaker_graph: bool = True
    use_mention_graph: bool = True
    use_distance_graph: bool = True
    use_reply_graph: bool = True
    decoder: str = "easy-first"

    def __post_init__(self):
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        for name in ("dropout", "teacher_forcing_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.decoder not in ("easy-first", "sequential"):
            raise ValueError(f"unknown decoder {self.decoder!r}")
        if self.optimizer != "sgd":
            raise ValueError("only plain SGD is supported")

    @property
    def graphs(self) -> tuple[str, ...]:
        flags = (("S", self.use_speaker_graph), ("M", self.use_mention_graph),
                 ("D", self.use_distance_graph), ("R", self.use_reply_graph))
        return tuple(k for k, on in flags if on)

    @property
    def hrl_weights(self) -> HrlWeights:
        return HrlWeights(self.alpha1, self.alpha2, self.alpha3)

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden=self.hidden_size, label_dim=self.label_embedding_dim,
                           egcn_layers=self.egcn_layer_num, ffnn_hidden=self.ffnn_hidden_size,
                           buckets=self.hash_buckets, window=self.omega, dropout=self.dropout,
                           activation=self.activate_function, graphs=self.graphs, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_overrides(items) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _coerce(types[key], raw)
    return out


def read_config_text(text: str) -> dict:
    items = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            items.append(line)
    return parse_overrides(items)


def load_config(path=None, overrides=()) -> RunConfig:
    values = {}
    if path is not None:
        values.update(read_config_text(Path(path).read_text(encoding="utf-8")))
    values.update(parse_overrides(overrides))
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in cfg.to_dict().items()) + "\n"
