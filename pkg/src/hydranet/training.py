"""Per-match Adam training and batched prediction."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .config import GRANULARITIES, TrainConfig
from .model import HydraNet
from .multigran import assemble_granularity_targets, group_targets
from .optim import AdamState, ModelParameters, adam_step
from .pipeline.features import MatchSequence
from .pipeline.schema import ConfigError


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    batch: int
    L_ver: float
    L_point: float
    L_game: float
    L_set: float
    L_match: float
    total: float


LOG_COLUMNS = tuple(f.name for f in fields(LossRecord))


@dataclass
class TrainResult:
    params: ModelParameters
    log: list[LossRecord]

    def epoch_means(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for r in self.log:
            by_epoch.setdefault(r.epoch, []).append(r.total)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def _select(matches: Sequence[MatchSequence], ids: Iterable[str] | None) -> list[MatchSequence]:
    if ids is None:
        return list(matches)
    by_id = {m.match_id: m for m in matches}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ConfigError(f"unknown match ids: {missing[:3]}")
    return [by_id[i] for i in ids]


def train(matches: Sequence[MatchSequence], config: TrainConfig, ids: Iterable[str] | None = None,
          log_path: str | Path | None = None) -> TrainResult:
    """Train from scratch; one Adam step per match, matches shuffled per epoch."""
    train_set = _select(matches, ids)
    if not train_set:
        raise ConfigError("training split is empty")
    train_set.sort(key=lambda m: m.match_id)
    model = HydraNet(config)
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])
    state = AdamState(lr=config.lr)
    log: list[LossRecord] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        for batch, k in enumerate(order, 1):
            T.current_tape().clear()
            out = model.match_loss(train_set[k], training=True, rng=dropout_rng)
            T.backward(out.total)
            adam_step(model.params, state)
            c = out.classification
            log.append(LossRecord(epoch, batch, out.versus, *(c[g] for g in GRANULARITIES), out.total.item()))
    if log_path is not None:
        write_loss_log(log, log_path)
    return TrainResult(model.params, log)


def write_loss_log(log: Sequence[LossRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in log:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_loss_log(path: str | Path) -> list[LossRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [LossRecord(int(r["epoch"]), int(r["batch"]), *(float(r[c]) for c in LOG_COLUMNS[2:])) for r in rows]


def collect_predictions(model: HydraNet, matches: Iterable[MatchSequence]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Granularity -> (scores, labels) pooled over matches in the given order."""
    scores = {g: [] for g in GRANULARITIES}
    labels = {g: [] for g in GRANULARITIES}
    for m in matches:
        ms = model.momentum_scores(m)
        for g, (idx, y) in group_targets(assemble_granularity_targets(m)).items():
            scores[g].append(ms[idx])
            labels[g].append(y)
    return {g: (np.concatenate(scores[g]), np.concatenate(labels[g]).astype(int)) for g in GRANULARITIES}
