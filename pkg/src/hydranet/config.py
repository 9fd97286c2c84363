from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .hydra import HydraConfig
from .pipeline.features import GROUP_NAMES
from .pipeline.schema import ConfigError

GRANULARITIES = ("point", "game", "set", "match")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 5
    dropout: float = 0.1
    margin: float = 0.5
    heads: int = 4
    head_dim: int = 8
    embed_dim: int = 32
    caam_heads: int = 8
    head_hidden: int = 32
    seed: int = 0
    w_point: float = 1.0
    w_game: float = 1.0
    w_set: float = 1.0
    w_match: float = 1.0
    share_embeddings: bool = False
    ablate: str = ""

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        for name in ("heads", "head_dim", "embed_dim", "caam_heads", "head_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.embed_dim % self.caam_heads:
            raise ConfigError("embed_dim must be divisible by caam_heads")
        if any(w < 0 for w in self.granularity_weights.values()):
            raise ConfigError("granularity weights must be non-negative")
        if self.ablate and self.ablate not in GROUP_NAMES:
            raise ConfigError(f"unknown modality {self.ablate!r}; expected one of {GROUP_NAMES}")

    @property
    def granularity_weights(self) -> dict[str, float]:
        return {g: getattr(self, f"w_{g}") for g in GRANULARITIES}

    @property
    def hydra(self) -> HydraConfig:
        return HydraConfig(heads=self.heads, head_dim=self.head_dim, dropout=self.dropout)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    # key=value files
    def dumps(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def parse_overrides(cls, pairs: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, raw in pairs.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(raw, getattr(base, key), key)
        return base.replace(**changes)

    @classmethod
    def read(cls, path: str | Path, base: "TrainConfig | None" = None) -> "TrainConfig":
        pairs = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            pairs[k.strip()] = v.strip()
        return cls.parse_overrides(pairs, base)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(raw: str, current, key: str):
    try:
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
