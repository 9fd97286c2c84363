"""Per-player momentum features and match sequences."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .schema import DataError, PointRecord

# (group, factors) in fixed order; "{i}" is the player index
FEATURE_GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("serve", ("serve", "double_fault", "break_pt_missed", "ace", "serve_speed", "serve_depth")),
    ("return", ("break_pt_won", "return_depth")),
    ("psychology", ("unf_err", "net_pt", "net_pt_won", "winner", "points_diff", "game_diff", "set_diff")),
    ("fatigue", ("distance_run",)),
)
FACTORS: tuple[str, ...] = tuple(f for _, fs in FEATURE_GROUPS for f in fs)
GROUP_WIDTHS: tuple[int, ...] = tuple(len(fs) for _, fs in FEATURE_GROUPS)
GROUP_NAMES: tuple[str, ...] = tuple(g for g, _ in FEATURE_GROUPS)
GROUP_OFFSETS: tuple[int, ...] = tuple(int(x) for x in np.cumsum((0,) + GROUP_WIDTHS))
N_FEATURES = len(FACTORS)


def group_slice(name: str) -> slice:
    k = GROUP_NAMES.index(name)
    return slice(GROUP_OFFSETS[k], GROUP_OFFSETS[k + 1])


def extract_momentum_features(point: PointRecord) -> tuple[np.ndarray, np.ndarray]:
    """Both players' 16-factor vectors for one cleaned, normalized point."""
    vecs = []
    for i in (1, 2):
        vals = []
        for f in FACTORS:
            v = getattr(point, f"p{i}_{f}")
            vals.append(0.0 if v is None else float(v))
        vecs.append(np.array(vals))
    return vecs[0], vecs[1]


@dataclass(frozen=True)
class GameSpan:
    start: int  # first point index
    end: int  # one past the last point
    set_index: int
    winner: int  # 1 or 2


@dataclass(frozen=True)
class SetSpan:
    first_game: int
    end_game: int  # one past the last game
    winner: int


@dataclass
class MatchSequence:
    match_id: str
    p1: np.ndarray  # (N, 16)
    p2: np.ndarray  # (N, 16)
    y_point: np.ndarray  # (N,) 1 if player1 won the point
    games: list[GameSpan]
    sets: list[SetSpan]
    y_match: int
    player1: str = ""
    player2: str = ""
    point_keys: list[tuple[int, int, int]] = field(default_factory=list)  # (set_no, game_no, point_no)
    victors: np.ndarray | None = None

    def __post_init__(self):
        if self.victors is None:
            self.victors = np.where(self.y_point == 1, 1, 2)
        self.validate()

    @property
    def n_points(self) -> int:
        return int(self.p1.shape[0])

    def game_bounds(self) -> np.ndarray:
        return np.array([g.start for g in self.games])

    def validate(self) -> None:
        n = self.n_points
        if n == 0 or not self.games:
            raise DataError(f"{self.match_id}: empty match")
        if self.p1.shape != (n, N_FEATURES) or self.p2.shape != (n, N_FEATURES):
            raise DataError(f"{self.match_id}: feature arrays must be ({n}, {N_FEATURES})")
        pos = 0
        for g in self.games:
            if g.start != pos or g.end <= g.start:
                raise DataError(f"{self.match_id}: game boundaries must tile the points")
            if g.winner != self.victors[g.end - 1]:
                raise DataError(f"{self.match_id}: game winner differs from its last point's victor")
            pos = g.end
        if pos != n:
            raise DataError(f"{self.match_id}: games do not cover all points")
        gpos = 0
        for k, s in enumerate(self.sets):
            if s.first_game != gpos or s.end_game <= s.first_game:
                raise DataError(f"{self.match_id}: set boundaries must tile the games")
            if any(g.set_index != k for g in self.games[s.first_game : s.end_game]):
                raise DataError(f"{self.match_id}: game assigned to the wrong set")
            if s.winner != self.games[s.end_game - 1].winner:
                raise DataError(f"{self.match_id}: set winner differs from its last game's winner")
            gpos = s.end_game
        if gpos != len(self.games):
            raise DataError(f"{self.match_id}: sets do not cover all games")
        if self.y_match != int(self.sets[-1].winner == 1):
            raise DataError(f"{self.match_id}: match label differs from the last set's winner")

    def masked(self, group: str | None) -> "MatchSequence":
        """Copy with one feature group zeroed for both players."""
        if group is None:
            return self
        sl = group_slice(group)
        p1, p2 = self.p1.copy(), self.p2.copy()
        p1[:, sl] = 0.0
        p2[:, sl] = 0.0
        return MatchSequence(
            self.match_id, p1, p2, self.y_point, self.games, self.sets, self.y_match,
            self.player1, self.player2, self.point_keys, self.victors,
        )


def build_match_sequences(records: Sequence[PointRecord]) -> list[MatchSequence]:
    """Group cleaned records by match (sorted by match_id) and order points chronologically."""
    by_match: "OrderedDict[str, list[tuple[int, PointRecord]]]" = OrderedDict()
    for i, r in enumerate(records):
        by_match.setdefault(r.match_id, []).append((i, r))
    out = []
    for match_id in sorted(by_match):
        rows = [r for _, r in sorted(by_match[match_id], key=lambda t: (t[1].set_no, t[1].game_no, t[1].point_no, t[0]))]
        out.append(_sequence_from_rows(match_id, rows))
    return out


def _sequence_from_rows(match_id: str, rows: list[PointRecord]) -> MatchSequence:
    feats = [extract_momentum_features(r) for r in rows]
    p1 = np.array([f[0] for f in feats])
    p2 = np.array([f[1] for f in feats])
    victors = np.array([r.points_victor for r in rows])
    games: list[GameSpan] = []
    sets: list[SetSpan] = []
    set_first_game = 0
    set_index = 0
    start = 0
    for t, r in enumerate(rows):
        last_of_game = t + 1 == len(rows) or (rows[t + 1].set_no, rows[t + 1].game_no) != (r.set_no, r.game_no)
        if not last_of_game:
            continue
        winner = int(victors[t])
        if r.game_victor and r.game_victor != winner:
            raise DataError(f"{match_id}: game_victor {r.game_victor} at set {r.set_no} game {r.game_no} "
                            f"differs from the last point's victor {winner}")
        games.append(GameSpan(start, t + 1, set_index, winner))
        start = t + 1
        if t + 1 == len(rows) or rows[t + 1].set_no != r.set_no:
            sets.append(SetSpan(set_first_game, len(games), winner))
            set_first_game = len(games)
            set_index += 1
    return MatchSequence(
        match_id=match_id,
        p1=p1,
        p2=p2,
        y_point=(victors == 1).astype(int),
        games=games,
        sets=sets,
        y_match=int(sets[-1].winner == 1),
        player1=rows[0].player1,
        player2=rows[0].player2,
        point_keys=[(r.set_no, r.game_no, r.point_no) for r in rows],
        victors=victors,
    )
