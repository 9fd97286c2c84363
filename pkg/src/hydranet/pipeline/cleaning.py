"""Cleaning, serve-speed imputation, and normalization of point records."""

from __future__ import annotations

import math
import re
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .schema import (
    BINARY_FIELDS,
    COLUMNS,
    SCORE_TOKENS,
    ConfigError,
    DataError,
    PointRecord,
    RowError,
    parse_point_csv,
    write_point_csv,
)

DROP_SCORES = frozenset({"0X", "0Y"})
RETURN_DEPTH = {"": 0, "D": 1, "ND": 0, "0": 0, "1": 1}
SERVE_DEPTH = {"": 0, "CTL": 1, "NCTL": 0, "0": 0, "1": 1}
MISSING = frozenset({"", "NA", "NAN", "NONE", "NULL"})
_ELAPSED = re.compile(r"^\d{1,2}:\d{2}:\d{2}$")

# recomputed by clean_points, so blank input is fine
_DERIVED = frozenset(
    {"p1_points_won", "p2_points_won"}
    | {f"p{i}_{k}_diff" for i in (1, 2) for k in ("points", "game", "set")}
)
_OPTIONAL_ZERO = frozenset({"game_victor", "set_victor"})
_STRINGS = frozenset({"match_id", "player1", "player2", "elapsed_time"})
_FLOATS = frozenset({"p1_distance_run", "p2_distance_run", "p1_serve_speed", "p2_serve_speed"})
_DEPTHS = {
    "p1_serve_depth": SERVE_DEPTH,
    "p2_serve_depth": SERVE_DEPTH,
    "p1_return_depth": RETURN_DEPTH,
    "p2_return_depth": RETURN_DEPTH,
}


def _to_int(value: str, column: str, row: int) -> int:
    s = value.strip()
    if s.upper() in SCORE_TOKENS and column in ("p1_score", "p2_score"):
        return SCORE_TOKENS[s.upper()]
    if not s:
        if column in _DERIVED or column in _OPTIONAL_ZERO:
            return 0
        raise RowError(f"column {column} is empty", row)
    try:
        f = float(s)
    except ValueError:
        raise RowError(f"column {column} has non-numeric value {s!r}", row) from None
    if not f.is_integer():
        raise RowError(f"column {column} has non-integer value {s!r}", row)
    return int(f)


def _to_float(value: str) -> float | None:
    s = value.strip()
    if s.upper() in MISSING:
        return None
    f = float(s)
    return None if math.isnan(f) else f


def _depth(value: str, column: str, row: int) -> int:
    token = value.strip().upper()
    if token.endswith(".0"):
        token = token[:-2]
    if token.upper() in MISSING:
        token = ""
    table = _DEPTHS[column]
    if token not in table:
        raise ValueError(f"row {row}: unknown {column} token {value!r}")
    return table[token]


def clean_points(raw: Iterable[dict[str, str]]) -> list[PointRecord]:
    """Drop unusable rows and convert the rest to typed, validated records.

    Rows whose score is ``0X``/``0Y`` or that have no server are removed.
    Depth tokens become 0/1, the six difference columns and the per-point
    won flags are recomputed. ``row`` in error messages is the 1-based data
    row (header excluded).
    """
    out: list[PointRecord] = []
    for row_no, rec in enumerate(raw, 1):
        if rec.get("p1_score", "").strip().upper() in DROP_SCORES or rec.get("p2_score", "").strip().upper() in DROP_SCORES:
            continue
        values: dict[str, object] = {}
        for col in COLUMNS:
            v = rec.get(col, "")
            if col in _STRINGS:
                values[col] = v.strip()
            elif col in _FLOATS:
                try:
                    values[col] = _to_float(v)
                except ValueError:
                    raise RowError(f"column {col} has non-numeric value {v!r}", row_no) from None
            elif col in _DEPTHS:
                values[col] = _depth(v, col, row_no)
            else:
                values[col] = _to_int(v, col, row_no)
        if values["p1_serve"] == 0 and values["p2_serve"] == 0:
            continue
        if values["p1_serve"] == values["p2_serve"]:
            raise RowError("both players marked as server", row_no)
        victor = values["points_victor"]
        values["p1_points_won"] = int(victor == 1)
        values["p2_points_won"] = int(victor == 2)
        for key, a, b in (
            ("points", "p1_points_sum", "p2_points_sum"),
            ("game", "p1_games_won", "p2_games_won"),
            ("set", "p1_sets_won", "p2_sets_won"),
        ):
            diff = values[a] - values[b]
            values[f"p1_{key}_diff"] = diff
            values[f"p2_{key}_diff"] = -diff
        _validate(values, row_no)
        out.append(PointRecord(**values))
    return out


def _validate(v: dict, row: int) -> None:
    for col in ("set_no", "game_no", "point_no"):
        if v[col] < 1:
            raise RowError(f"{col} must be positive, got {v[col]}", row)
    if v["points_victor"] not in (1, 2):
        raise RowError(f"points_victor must be 1 or 2, got {v['points_victor']}", row)
    for col in ("game_victor", "set_victor"):
        if v[col] not in (0, 1, 2):
            raise RowError(f"{col} must be 0, 1 or 2, got {v[col]}", row)
    for col in BINARY_FIELDS:
        if v[col] not in (0, 1):
            raise RowError(f"{col} must be 0 or 1, got {v[col]}", row)
    if not _ELAPSED.match(v["elapsed_time"]):
        raise RowError(f"elapsed_time {v['elapsed_time']!r} is not H:MM:SS", row)


# ---------------------------------------------------------------- imputation


def _game_winners(records: Sequence[PointRecord]) -> dict[tuple, int]:
    last: dict[tuple, tuple[int, int]] = {}
    for i, r in enumerate(records):
        key = (r.match_id, r.set_no, r.game_no)
        order = (r.point_no, i)
        if key not in last or order >= last[key][0]:
            last[key] = (order, r.points_victor)
    return {k: v[1] for k, v in last.items()}


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order] / weights.sum()
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, 0.5 - 1e-12))
    if abs(cum[k] - 0.5) <= 1e-12 and k + 1 < len(v):
        return 0.5 * (v[k] + v[k + 1])
    return float(v[k])


def serve_speed_mixture(player: Sequence[float], global_: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Player and global empirical distributions merged at equal total weight."""
    g = np.asarray(global_, dtype=float)
    if g.size == 0:
        raise DataError("no known serve speeds to impute from")
    p = np.asarray(player, dtype=float)
    if p.size == 0:
        return g, np.full(g.size, 1.0 / g.size)
    return np.concatenate([p, g]), np.concatenate([np.full(p.size, 0.5 / p.size), np.full(g.size, 0.5 / g.size)])


def impute_serve_speed(records: Sequence[PointRecord], seed: int) -> list[PointRecord]:
    """Fill missing server speeds by sampling the player/global mixture.

    Points in service games the server went on to win sample from the upper
    half of the mixture (at or above its median), lost games from the lower
    half. Present speeds are never modified.
    """
    rng = np.random.default_rng(seed)
    known_by_player: dict[str, list[float]] = defaultdict(list)
    known_all: list[float] = []
    missing = False
    for r in records:
        speed = r.p1_serve_speed if r.server == 1 else r.p2_serve_speed
        if speed is None:
            missing = True
            continue
        name = r.player1 if r.server == 1 else r.player2
        known_by_player[name].append(speed)
        known_all.append(speed)
    if not missing:
        return list(records)
    if not known_all:
        raise DataError("no known serve speeds to impute from")
    winners = _game_winners(records)
    cache: dict[str, tuple] = {}
    out = []
    for r in records:
        field = "p1_serve_speed" if r.server == 1 else "p2_serve_speed"
        if getattr(r, field) is not None:
            out.append(r)
            continue
        name = r.player1 if r.server == 1 else r.player2
        if name not in cache:
            vals, wts = serve_speed_mixture(known_by_player.get(name, ()), known_all)
            cache[name] = (vals, wts, _weighted_median(vals, wts))
        vals, wts, med = cache[name]
        won = winners[(r.match_id, r.set_no, r.game_no)] == r.server
        keep = vals >= med if won else vals <= med
        if not keep.any():
            keep = np.ones_like(vals, dtype=bool)
        w = wts[keep] / wts[keep].sum()
        draw = float(rng.choice(vals[keep], p=w))
        out.append(r.replace(**{field: draw}))
    return out


# ------------------------------------------------------------- normalization


def normalize_serve_speed(x: float, x_min: float, x_max: float) -> float:
    """Map mph into [-1, 1]: ``2 (x - min) / (max - min) - 1`` after clamping."""
    if not x_min < x_max:
        raise ConfigError(f"serve speed range is empty: min={x_min}, max={x_max}")
    x = min(max(x, x_min), x_max)
    return 2.0 * (x - x_min) / (x_max - x_min) - 1.0


class ZScore(NamedTuple):
    values: list[float]
    mean: float
    std: float
    degenerate: bool


def zscore_distance_run(values: Sequence[float]) -> ZScore:
    """Standardize with the population standard deviation.

    Zero spread returns all zeros and sets ``degenerate``.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DataError("no distance values to standardize")
    mu = float(x.mean())
    sigma = float(x.std())
    if sigma == 0.0:
        warnings.warn("distance_run has zero spread; standardized values set to 0", RuntimeWarning)
        return ZScore([0.0] * x.size, mu, 0.0, True)
    return ZScore(((x - mu) / sigma).tolist(), mu, sigma, False)


@dataclass(frozen=True)
class NormalizationMeta:
    speed_min: float
    speed_max: float
    dist_mu: float
    dist_sigma: float

    def write(self, path: str | Path) -> None:
        text = "".join(f"{k}={v!r}\n" for k, v in self.__dict__.items())
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "NormalizationMeta":
        kv = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip() and not line.lstrip().startswith("#"):
                k, _, v = line.partition("=")
                kv[k.strip()] = float(v)
        missing = {"speed_min", "speed_max", "dist_mu", "dist_sigma"} - set(kv)
        if missing:
            raise ConfigError(f"normalization metadata lacks {sorted(missing)}")
        return cls(**{k: kv[k] for k in ("speed_min", "speed_max", "dist_mu", "dist_sigma")})


def normalize_records(
    records: Sequence[PointRecord], meta: NormalizationMeta | None = None
) -> tuple[list[PointRecord], NormalizationMeta]:
    """Scale server speeds into [-1, 1] and z-score running distance.

    Without ``meta`` the ranges come from ``records`` (after imputation).
    The non-server's speed column is set to 0. Missing distances become 0,
    the standardized mean.
    """
    if meta is None:
        speeds = [r.p1_serve_speed if r.server == 1 else r.p2_serve_speed for r in records]
        speeds = [s for s in speeds if s is not None]
        if not speeds:
            raise DataError("no serve speeds to normalize")
        dists = [d for r in records for d in (r.p1_distance_run, r.p2_distance_run) if d is not None]
        z = zscore_distance_run(dists)
        meta = NormalizationMeta(min(speeds), max(speeds), z.mean, z.std)
    out = []
    for r in records:
        speed = r.p1_serve_speed if r.server == 1 else r.p2_serve_speed
        if speed is None:
            raise DataError(f"serve speed still missing in match {r.match_id} (impute first)")
        norm = normalize_serve_speed(speed, meta.speed_min, meta.speed_max)

        def zd(d):
            if d is None or meta.dist_sigma == 0.0:
                return 0.0
            return (d - meta.dist_mu) / meta.dist_sigma

        out.append(
            r.replace(
                p1_serve_speed=norm if r.server == 1 else 0.0,
                p2_serve_speed=norm if r.server == 2 else 0.0,
                p1_distance_run=zd(r.p1_distance_run),
                p2_distance_run=zd(r.p2_distance_run),
            )
        )
    return out, meta


def ingest(
    raw_csv: str | Path, out_csv: str | Path, meta_path: str | Path, seed: int = 0
) -> tuple[list[PointRecord], NormalizationMeta]:
    """Raw CSV -> cleaned, imputed, normalized CSV plus ``key=value`` metadata."""
    records = clean_points(parse_point_csv(raw_csv))
    records = impute_serve_speed(records, seed)
    records, meta = normalize_records(records)
    write_point_csv(records, out_csv)
    meta.write(meta_path)
    return records, meta


def load_clean_csv(path: str | Path) -> list[PointRecord]:
    return clean_points(parse_point_csv(path))
