"""The full match model: two self-momentum encoders, modality attention, score head."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .hydra import CROSS_GAME, CROSS_SET, forward_game, init_hydra_params, init_implicit_momentum, update_implicit_momentum
from .interaction import caam_attention, embed_modalities, init_interaction_params, split_modality_groups, versus_loss
from .multigran import classification_loss, group_targets, assemble_granularity_targets, init_head_params, predict_momentum_score, total_loss
from .optim import ModelParameters
from .pipeline.features import N_FEATURES, MatchSequence, group_slice
from .tensor import Tensor

PLAYER_PREFIXES = ("hydra1", "hydra2")


class MatchForward(NamedTuple):
    y1: Tensor  # (N, d) encoder outputs per point
    y2: Tensor
    z1: Tensor  # (N, d) fused vectors
    z2: Tensor
    ms: Tensor  # (N,) player1 Momentum Score


class LossBreakdown(NamedTuple):
    total: Tensor
    versus: float
    classification: dict[str, float]


class HydraNet:
    def __init__(self, config: TrainConfig | None = None, params: ModelParameters | None = None):
        self.config = config or TrainConfig()
        self.hydra_cfg = self.config.hydra
        if params is None:
            params = init_params(self.config)
        self.params = params

    # ------------------------------------------------------------ forward
    def _output_mask(self) -> np.ndarray | None:
        if not self.config.ablate:
            return None
        mask = np.ones(N_FEATURES)
        mask[group_slice(self.config.ablate)] = 0.0
        return mask

    def encode_player(self, points: np.ndarray, match: MatchSequence, prefix: str,
                      training: bool, rng: np.random.Generator | None) -> Tensor:
        """Run one player's encoder game by game, carrying implicit momentum."""
        p = self.params.scope(prefix)
        momentum, _ = init_implicit_momentum(self.hydra_cfg.d)
        rows = []
        games = match.games
        for k, g in enumerate(games):
            out = forward_game(Tensor(points[g.start : g.end]), momentum.vector, p, self.hydra_cfg, training, rng)
            rows.append(out.points)
            if k + 1 < len(games):
                transition = CROSS_SET if games[k + 1].set_index != g.set_index else CROSS_GAME
                momentum = update_implicit_momentum(out.last, transition, p)
        return T.concat(rows, axis=0)

    def forward_match(self, match: MatchSequence, training: bool = False,
                      rng: np.random.Generator | None = None) -> MatchForward:
        cfg = self.config
        m = match.masked(cfg.ablate or None)
        y1 = self.encode_player(m.p1, m, PLAYER_PREFIXES[0], training, rng)
        y2 = self.encode_player(m.p2, m, PLAYER_PREFIXES[1], training, rng)
        mask = self._output_mask()
        if mask is not None:
            y1, y2 = y1 * mask, y2 * mask
        roles = ("shared", "shared") if cfg.share_embeddings else ("p1", "p2")
        F1 = embed_modalities(split_modality_groups(y1), self.params.scope(f"embed.{roles[0]}"), cfg.dropout, training, rng)
        F2 = embed_modalities(split_modality_groups(y2), self.params.scope(f"embed.{roles[1]}"), cfg.dropout, training, rng)
        att = caam_attention(F1, F2, self.params.scope("caam"), cfg.caam_heads)
        ms = predict_momentum_score(att.z1, att.z2, self.params.scope("head"))
        return MatchForward(y1, y2, att.z1, att.z2, ms)

    def match_loss(self, match: MatchSequence, training: bool = False,
                   rng: np.random.Generator | None = None) -> LossBreakdown:
        fwd = self.forward_match(match, training, rng)
        l_ver = versus_loss(fwd.y1, fwd.y2, self.config.margin)
        parts = {}
        for g, (idx, labels) in group_targets(assemble_granularity_targets(match)).items():
            parts[g] = classification_loss(fwd.ms[idx], labels) if idx.size else Tensor(0.0)
        total = total_loss(l_ver, parts, self.config.granularity_weights)
        return LossBreakdown(total, l_ver.item(), {g: v.item() for g, v in parts.items()})

    def momentum_scores(self, match: MatchSequence) -> np.ndarray:
        with T.no_grad():
            return self.forward_match(match, training=False).ms.data.copy()


def init_params(config: TrainConfig, rng: np.random.Generator | None = None) -> ModelParameters:
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    params = ModelParameters()
    hcfg = config.hydra
    for prefix in PLAYER_PREFIXES:
        init_hydra_params(params, prefix, hcfg, rng)
    init_interaction_params(params, rng, hcfg.d, config.embed_dim, config.share_embeddings)
    init_head_params(params, rng, hcfg.d, config.head_hidden)
    return params
