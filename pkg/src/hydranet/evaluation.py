"""Metrics, p-value combination, modality ablation, and Momentum Score traces."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .config import GRANULARITIES, TrainConfig
from .model import HydraNet
from .multigran import half_time_point
from .pipeline.features import GROUP_NAMES, MatchSequence
from .pipeline.split import DatasetSplit
from .training import collect_predictions, train

METRICS = ("auc", "auprc", "acc", "f1", "recall", "precision")
P_FLOOR = 1e-300


# ---------------------------------------------------------------- metrics


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half. ``nan`` for single-class input."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = stats.rankdata(s)  # average ranks give ties half credit
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc_score(scores, labels) -> float:
    """Area under the precision-recall step curve, one step per distinct score."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        return math.nan
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    predicted = last_of_group + 1
    recall = tp / n_pos
    precision = tp / predicted
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def compute_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ValueError(f"scores {s.shape} and labels {y.shape} differ")
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "auc": auc_score(s, y),
        "auprc": auprc_score(s, y),
        "acc": float(np.mean(pred == pos)) if y.size else math.nan,
        "f1": f1,
        "recall": recall,
        "precision": precision,
    }


# ------------------------------------------------------------ significance


@dataclass(frozen=True)
class FisherResult:
    statistic: float
    p_value: float
    k: int


def fisher_combined(p_values: Sequence[float]) -> FisherResult:
    """``-2 sum ln p`` referred to chi-square with ``2k`` degrees of freedom."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p > 1):
        raise ValueError(f"p-values must lie in (0, 1], got {p.tolist()}")
    stat = float(-2.0 * np.sum(np.log(np.maximum(p, P_FLOOR)))) + 0.0  # no negative zero
    return FisherResult(stat, float(stats.chi2.sf(stat, 2 * p.size)), int(p.size))


def welch_p(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Welch t-test; undefined cases (constant or nan samples) give 1.0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if a.size < 2 or b.size < 2:
        return 1.0
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p = stats.ttest_ind(a, b, equal_var=False).pvalue
    p = float(p)
    return max(p, P_FLOOR) if math.isfinite(p) else 1.0


# ----------------------------------------------------------------- reports

FoldMetrics = dict[str, dict[str, float]]  # granularity -> metric -> value


@dataclass
class MetricReport:
    folds: list[FoldMetrics]
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict[str, dict[str, dict[str, float]]]:
        out = {}
        for g in GRANULARITIES:
            out[g] = {}
            for m in METRICS:
                vals = np.array([f[g][m] for f in self.folds if g in f], dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size == 0:
                    out[g][m] = {"mean": math.nan, "std": math.nan}
                else:
                    out[g][m] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
        return out

    def values(self, granularity: str, metric: str) -> np.ndarray:
        return np.array([f[granularity][metric] for f in self.folds], dtype=float)

    def to_json(self) -> str:
        body = {"metrics": self.summary(), "folds": len(self.folds), "meta": self.meta}
        return json.dumps(_nan_to_none(body), indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def evaluate_model(model: HydraNet, matches: Iterable[MatchSequence]) -> FoldMetrics:
    preds = collect_predictions(model, matches)
    return {g: compute_metrics(s, y) for g, (s, y) in preds.items()}


def cross_validate(matches: Sequence[MatchSequence], split: DatasetSplit, config: TrainConfig) -> MetricReport:
    """Train on all folds but k, score fold k, for every k."""
    by_id = {m.match_id: m for m in matches}
    folds = []
    for k, held in enumerate(split.folds):
        result = train(matches, config, ids=split.fold_train(k))
        folds.append(evaluate_model(HydraNet(config, result.params), [by_id[i] for i in held]))
    return MetricReport(folds, {"ablate": config.ablate or None, "seed": config.seed})


@dataclass
class AblationReport:
    modality: str
    baseline: MetricReport
    ablated: MetricReport
    deltas: dict[str, dict[str, float]]  # ablated mean - baseline mean
    p_values: dict[str, dict[str, float]]
    combined: dict[str, FisherResult]

    def to_json(self) -> str:
        body = {
            "modality": self.modality,
            "test": "welch",  # stand-in: the per-metric test behind the published p-values is unstated
            "baseline": self.baseline.summary(),
            "ablated": self.ablated.summary(),
            "deltas": self.deltas,
            "p_values": self.p_values,
            "combined": {g: {"statistic": r.statistic, "p_value": r.p_value, "k": r.k} for g, r in self.combined.items()},
        }
        return json.dumps(_nan_to_none(body), indent=2, sort_keys=True) + "\n"


def run_mlmm_ablation(matches: Sequence[MatchSequence], split: DatasetSplit, config: TrainConfig,
                      modality: str, baseline: MetricReport | None = None) -> AblationReport:
    """Retrain every fold with one modality zeroed and compare fold metrics to the baseline."""
    if modality not in GROUP_NAMES:
        raise ValueError(f"unknown modality {modality!r}; expected one of {GROUP_NAMES}")
    if baseline is None:
        baseline = cross_validate(matches, split, config.replace(ablate=""))
    ablated = cross_validate(matches, split, config.replace(ablate=modality))
    base_s, abl_s = baseline.summary(), ablated.summary()
    deltas, pvals, combined = {}, {}, {}
    for g in GRANULARITIES:
        deltas[g] = {m: abl_s[g][m]["mean"] - base_s[g][m]["mean"] for m in METRICS}
        pvals[g] = {m: welch_p(baseline.values(g, m), ablated.values(g, m)) for m in METRICS}
        combined[g] = fisher_combined(list(pvals[g].values()))
    return AblationReport(modality, baseline, ablated, deltas, pvals, combined)


# ------------------------------------------------------------------ traces

TRACE_COLUMNS = (
    "match_id", "set_no", "game_no", "point_no", "points_victor", "ms_p1", "ms_p2",
    "cross_game", "cross_set", "half_time", "streak", "streak_mean_ms",
)


@dataclass(frozen=True)
class Streak:
    start: int  # 0-based, inclusive
    end: int  # exclusive
    winner: int
    mean_ms: float  # mean Momentum Score of the streak winner


def complement_pair(x: float) -> tuple[float, float]:
    """``(a, b)`` with ``a + b == 1`` exactly in binary floating point and ``a`` closest to ``x``."""
    if x < 0.5:
        b = 1.0 - x
        return 1.0 - b, b
    return x, 1.0 - x


def find_streaks(victors: Sequence[int], ms_p1: Sequence[float]) -> list[Streak]:
    victors = np.asarray(victors)
    ms = np.asarray(ms_p1, dtype=float)
    out, start = [], 0
    for t in range(1, victors.size + 1):
        if t == victors.size or victors[t] != victors[start]:
            w = int(victors[start])
            seg = ms[start:t] if w == 1 else 1.0 - ms[start:t]
            out.append(Streak(start, t, w, float(seg.mean())))
            start = t
    return out


@dataclass
class MomentumTrace:
    rows: list[dict]
    streaks: list[Streak]

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def build_trace(match: MatchSequence, ms_p1: Sequence[float]) -> MomentumTrace:
    n = match.n_points
    ms_p1 = np.asarray(ms_p1, dtype=float)
    if ms_p1.shape != (n,):
        raise ValueError(f"expected {n} scores, got shape {ms_p1.shape}")
    cross_game, cross_set = set(), set()
    for k, g in enumerate(match.games[:-1]):
        if match.games[k + 1].set_index != g.set_index:
            cross_set.add(g.end - 1)
        else:
            cross_game.add(g.end - 1)
    hm = half_time_point(n) - 1
    streaks = find_streaks(match.victors, ms_p1)
    streak_of = np.empty(n, dtype=int)
    for k, s in enumerate(streaks):
        streak_of[s.start : s.end] = k
    keys = match.point_keys or [(0, 0, t + 1) for t in range(n)]
    rows = []
    for t in range(n):
        a, b = complement_pair(float(ms_p1[t]))
        st = streaks[streak_of[t]]
        rows.append({
            "match_id": match.match_id,
            "set_no": keys[t][0],
            "game_no": keys[t][1],
            "point_no": keys[t][2],
            "points_victor": int(match.victors[t]),
            "ms_p1": a,
            "ms_p2": b,
            "cross_game": int(t in cross_game),
            "cross_set": int(t in cross_set),
            "half_time": int(t == hm),
            "streak": int(streak_of[t]),
            "streak_mean_ms": st.mean_ms,
        })
    return MomentumTrace(rows, streaks)


def export_ms_trace(match: MatchSequence, model: HydraNet, path: str | Path | None = None) -> MomentumTrace:
    trace = build_trace(match, model.momentum_scores(match))
    if path is not None:
        trace.write(path)
    return trace


def summarize_streaks(traces: Mapping[str, MomentumTrace]) -> dict[str, float]:
    """Mean winner MS over all streaks, split by streak length 1 vs longer."""
    short = [s.mean_ms for t in traces.values() for s in t.streaks if s.end - s.start == 1]
    long_ = [s.mean_ms for t in traces.values() for s in t.streaks if s.end - s.start > 1]
    return {
        "single_point": float(np.mean(short)) if short else math.nan,
        "multi_point": float(np.mean(long_)) if long_ else math.nan,
    }
