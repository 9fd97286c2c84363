"""Named parameter collections, Adam, and the text checkpoint format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .tensor import ContractError, Tensor


class ModelParameters:
    """Ordered mapping ``name -> Tensor`` of learnable leaves."""

    def __init__(self, tensors: Mapping[str, Tensor] | None = None):
        self._t: dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self[name] = t

    def __setitem__(self, name: str, value) -> None:
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
        self._t[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name: str) -> bool:
        return name in self._t

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def items(self):
        return self._t.items()

    def names(self) -> list[str]:
        return list(self._t)

    def scope(self, prefix: str) -> "ParamView":
        return ParamView(self, prefix)

    def zero_grad(self) -> None:
        for t in self._t.values():
            t.grad = np.zeros_like(t.data)

    def copy(self) -> "ModelParameters":
        return ModelParameters({k: Tensor(v.data.copy()) for k, v in self._t.items()})

    def count(self) -> int:
        return sum(t.size for t in self._t.values())


class ParamView:
    """Prefix-scoped read access, e.g. ``view["W_g"]`` -> ``params["hydra1.W_g"]``."""

    def __init__(self, params: ModelParameters, prefix: str):
        self.params = params
        self.prefix = prefix

    def __getitem__(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"]

    def __contains__(self, name: str) -> bool:
        return f"{self.prefix}.{name}" in self.params


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParameters, state: AdamState) -> ModelParameters:
    """One bias-corrected Adam update of every parameter; grads are zeroed after."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = np.zeros_like(p.data)
    return params


# ------------------------------------------------------------- checkpoints


def save_checkpoint(params: ModelParameters, path: str | Path) -> None:
    """One line per parameter: ``name<TAB>d0,d1,...<TAB>v v v`` (row-major, repr floats)."""
    lines = []
    for name, t in params.items():
        shape = ",".join(str(n) for n in t.shape)
        values = " ".join(repr(float(v)) for v in t.data.reshape(-1))
        lines.append(f"{name}\t{shape}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, expected: ModelParameters | None = None) -> ModelParameters:
    """Read a checkpoint; with ``expected`` the names and shapes must match it exactly."""
    params = ModelParameters()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            name, shape_s, values_s = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed checkpoint line") from None
        shape = tuple(int(n) for n in shape_s.split(",")) if shape_s else ()
        values = np.array([float(v) for v in values_s.split()], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{path}:{lineno}: {name} has {values.size} values for shape {shape}")
        params[name] = values.reshape(shape)
    if expected is not None:
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        if missing or extra:
            raise ValueError(f"checkpoint names differ: missing={sorted(missing)} extra={sorted(extra)}")
        for name in expected:
            if expected[name].shape != params[name].shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: {params[name].shape} != {expected[name].shape}"
                )
        params = ModelParameters({name: params[name] for name in expected})
    return params
