"""Prediction targets at four granularities, the score head, and the losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .config import GRANULARITIES
from .optim import ModelParameters, ParamView
from .pipeline.features import MatchSequence
from .tensor import Tensor

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class GranularitySample:
    granularity: str
    index: int  # 0-based source point
    label: int  # 1 if player1 wins the predicted unit
    match_id: str = ""


def half_time_point(n_points: int) -> int:
    """1-based half-time point ``ceil(N/2)``."""
    if n_points < 1:
        raise ValueError("a match needs at least one point")
    return math.ceil(n_points / 2)


def assemble_granularity_targets(match: MatchSequence) -> list[GranularitySample]:
    mid = match.match_id
    out = [GranularitySample("point", t, int(y), mid) for t, y in enumerate(match.y_point)]
    for g, nxt in zip(match.games, match.games[1:]):
        out.append(GranularitySample("game", g.end - 1, int(nxt.winner == 1), mid))
    for s, nxt in zip(match.sets, match.sets[1:]):
        last_point = match.games[s.end_game - 1].end - 1
        out.append(GranularitySample("set", last_point, int(nxt.winner == 1), mid))
    out.append(GranularitySample("match", half_time_point(match.n_points) - 1, int(match.y_match), mid))
    return out


def group_targets(samples: Sequence[GranularitySample]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Granularity -> (indices, labels) arrays."""
    out = {}
    for g in GRANULARITIES:
        sel = [s for s in samples if s.granularity == g]
        out[g] = (np.array([s.index for s in sel], dtype=int), np.array([s.label for s in sel], dtype=float))
    return out


# ------------------------------------------------------------------- head


def init_head_params(params: ModelParameters, rng: np.random.Generator, d: int = 16, hidden: int = 32) -> None:
    b1, b2 = math.sqrt(6.0 / (2 * d + hidden)), math.sqrt(6.0 / (hidden + 1))
    params["head.w1"] = rng.uniform(-b1, b1, size=(2 * d, hidden))
    params["head.b1"] = np.zeros(hidden)
    params["head.w2"] = rng.uniform(-b2, b2, size=(hidden, 1))
    params["head.b2"] = np.zeros(1)


def predict_momentum_score(z1, z2, p: ParamView) -> Tensor:
    """Player1's Momentum Score in (0, 1); accepts ``(d,)`` or ``(L, d)`` inputs."""
    z1, z2 = T.as_tensor(z1), T.as_tensor(z2)
    single = z1.ndim == 1
    if single:
        z1, z2 = z1.reshape(1, -1), z2.reshape(1, -1)
    h = T.silu(T.linear(T.concat([z1, z2], axis=-1), p["w1"], p["b1"]))
    ms = T.sigmoid(T.linear(h, p["w2"], p["b2"])).reshape(-1)
    return ms.reshape(()) if single else ms


# ----------------------------------------------------------------- losses


def classification_loss(scores, labels) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    s = T.clip(T.as_tensor(scores), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape:
        raise T.ShapeError(f"scores {s.shape} vs labels {y.shape}")
    if y.size == 0:
        return Tensor(0.0)
    ll = T.log(s) * y + T.log(1.0 - s) * (1.0 - y)
    return -T.mean(ll)


def total_loss(l_ver, l_cla: Mapping[str, object], weights: Mapping[str, float] | None = None) -> Tensor:
    total = T.as_tensor(l_ver)
    for g, value in l_cla.items():
        w = 1.0 if weights is None else weights.get(g, 1.0)
        if w:
            total = total + T.as_tensor(value) * w
    return total
