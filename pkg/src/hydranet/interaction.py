"""Adversarial separation between the players and per-point modality attention."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .optim import ModelParameters, ParamView
from .pipeline.features import GROUP_NAMES, GROUP_OFFSETS, GROUP_WIDTHS
from .tensor import ShapeError, Tensor

NORM_FLOOR = 1e-12


def versus_loss(y1, y2, margin: float = 0.5) -> Tensor:
    """Mean hinge ``max(0, m + cos(y1_t, y2_t))`` over rows."""
    y1, y2 = T.as_tensor(y1), T.as_tensor(y2)
    if y1.ndim == 1:
        y1, y2 = y1.reshape(1, -1), y2.reshape(1, -1)

    def unit(y):
        sq = T.clip(T.tsum(y * y, axis=-1, keepdims=True), NORM_FLOOR**2, np.inf)
        return y / T.sqrt(sq)

    cos = T.tsum(unit(y1) * unit(y2), axis=-1)
    return T.mean(T.relu(cos + margin))


class ModalityGroups(NamedTuple):
    serve: Tensor
    return_: Tensor
    psychology: Tensor
    fatigue: Tensor


def split_modality_groups(y) -> ModalityGroups:
    y = T.as_tensor(y)
    if y.shape[-1] != GROUP_OFFSETS[-1]:
        raise ShapeError(f"expected width {GROUP_OFFSETS[-1]}, got {y.shape[-1]}")
    parts = [y[..., GROUP_OFFSETS[k] : GROUP_OFFSETS[k + 1]] for k in range(len(GROUP_NAMES))]
    return ModalityGroups(*parts)


def init_interaction_params(
    params: ModelParameters,
    rng: np.random.Generator,
    d: int = 16,
    embed_dim: int = 32,
    share_embeddings: bool = False,
) -> None:
    def uniform(shape):
        # Glorot bound keeps activation scale through the stacked maps
        b = math.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-b, b, size=shape)

    roles = ("shared",) if share_embeddings else ("p1", "p2")
    for role in roles:
        for name, width in zip(GROUP_NAMES, GROUP_WIDTHS):
            pre = f"embed.{role}.{name}"
            params[f"{pre}.w1"] = uniform((width, embed_dim))
            params[f"{pre}.b1"] = np.zeros(embed_dim)
            params[f"{pre}.w2"] = uniform((embed_dim, embed_dim))
            params[f"{pre}.b2"] = np.zeros(embed_dim)
    for role in ("wq", "wk", "wv"):
        params[f"caam.{role}"] = uniform((embed_dim, embed_dim))
    params["caam.out.weight"] = uniform((embed_dim, d))
    params["caam.out.bias"] = np.zeros(d)


def embed_modalities(
    groups: ModalityGroups,
    p: ParamView,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Two-layer SiLU perceptron per modality, stacked to ``(L, 4, D_e)``."""
    outs = []
    for name, g in zip(GROUP_NAMES, groups):
        h = T.silu(T.linear(g, p[f"{name}.w1"], p[f"{name}.b1"]))
        h = T.dropout(h, dropout, rng, training)
        outs.append(T.linear(h, p[f"{name}.w2"], p[f"{name}.b2"]))
    return T.stack(outs, axis=-2)


class CaamOutput(NamedTuple):
    z1: Tensor
    z2: Tensor
    weights1: np.ndarray  # (L, heads, 4, 8)
    weights2: np.ndarray


def caam_attention(F1, F2, p: ParamView, heads: int = 8) -> CaamOutput:
    """Each player's four modality embeddings attend over all eight.

    ``F1``/``F2`` are ``(4, D_e)`` for one point or ``(L, 4, D_e)`` for a batch
    of points; points never attend to each other. Outputs are ``(d,)`` or
    ``(L, d)``.
    """
    F1, F2 = T.as_tensor(F1), T.as_tensor(F2)
    single = F1.ndim == 2
    if single:
        F1, F2 = F1.reshape((1,) + F1.shape), F2.reshape((1,) + F2.shape)
    n, m, de = F1.shape
    if de % heads:
        raise ShapeError(f"embedding width {de} not divisible by {heads} heads")
    hd = de // heads
    kv = T.concat([F1, F2], axis=1)  # (L, 8, De)
    K = (kv @ p["wk"]).reshape(n, 2 * m, heads, hd)
    V = (kv @ p["wv"]).reshape(n, 2 * m, heads, hd)
    inv = 1.0 / math.sqrt(hd)
    outs, weights = [], []
    for F in (F1, F2):
        Q = (F @ p["wq"]).reshape(n, m, heads, hd)
        logits = T.scale(T.einsum("lqhe,lkhe->lhqk", Q, K), inv)
        att = T.softmax_masked(logits, axis=-1)
        mixed = T.einsum("lhqk,lkhe->lqhe", att, V).reshape(n, m, de)
        pooled = T.tsum(mixed, axis=1)  # sum over the four modalities
        z = T.linear(pooled, p["out.weight"], p["out.bias"])
        outs.append(z.reshape(-1) if single else z)
        weights.append(att.data)
    return CaamOutput(outs[0], outs[1], weights[0], weights[1])
