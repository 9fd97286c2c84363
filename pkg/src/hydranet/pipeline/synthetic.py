"""Seeded synthetic matches that follow Grand Slam scoring.

Two signals can be planted:

* point signal: every point carries a decisive indicator (ace, winner,
  double fault, unforced error) attributed consistently with the victor,
  with probability ``point_signal``;
* carryover: the winner of game g+1 equals the winner of game g's last point
  with probability ``carryover``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cleaning import clean_points, impute_serve_speed, normalize_records
from .features import MatchSequence, build_match_sequences
from .schema import COLUMNS

_REGULAR = ("0", "15", "30", "40")


@dataclass(frozen=True)
class SignalConfig:
    point_signal: float = 1.0
    carryover: float = 0.8
    point_win_prob: float = 0.62
    best_of: int = 3
    missing_speed_rate: float = 0.05
    missing_depth_rate: float = 0.05
    n_players: int = 32
    zero_groups: tuple[str, ...] = ()  # e.g. ("fatigue",) writes zeros for that group


def _score_strings(a: int, b: int, tiebreak: bool) -> tuple[str, str]:
    if tiebreak:
        return str(a), str(b)
    if a >= 3 and b >= 3:
        if a == b:
            return "40", "40"
        return ("AD", "40") if a > b else ("40", "AD")
    return _REGULAR[min(a, 3)], _REGULAR[min(b, 3)]


def play_game(winner: int, tiebreak: bool, q: float, rng: np.random.Generator) -> list[int]:
    """Point victors (1/2) of one game won by ``winner``."""
    target = 7 if tiebreak else 4
    a = b = 0
    seq = []
    while True:
        if rng.random() < q:
            a += 1
            seq.append(0)
        else:
            b += 1
            seq.append(1)
        if (a >= target or b >= target) and abs(a - b) >= 2:
            break
    favoured_won = a > b
    loser = 3 - winner
    return [(winner if s == 0 else loser) if favoured_won else (loser if s == 0 else winner) for s in seq]


def _clock(seconds: int) -> str:
    return f"{seconds // 3600}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


def generate_match_rows(match_id: str, players: tuple[str, str], plant: SignalConfig,
                        rng: np.random.Generator, speed_base: dict[str, float]) -> list[dict[str, str]]:
    sets_needed = plant.best_of // 2 + 1
    sets_won = [0, 0]
    points_sum = [0, 0]
    elapsed = 0
    server = int(rng.integers(1, 3))
    prev_game_winner = None
    rows: list[dict[str, str]] = []
    set_no = 0
    while max(sets_won) < sets_needed:
        set_no += 1
        games_won = [0, 0]
        game_no = 0
        while True:
            game_no += 1
            tiebreak = games_won == [6, 6]
            if prev_game_winner is None:
                gw = int(rng.integers(1, 3))
            elif rng.random() < plant.carryover:
                gw = prev_game_winner
            else:
                gw = 3 - prev_game_winner
            victors = play_game(gw, tiebreak, plant.point_win_prob, rng)
            counts = [0, 0]
            for k, v in enumerate(victors):
                if tiebreak:
                    srv = server if ((k + 1) // 2) % 2 == 0 else 3 - server
                else:
                    srv = server
                ret = 3 - srv
                s1, s2 = _score_strings(counts[0], counts[1], tiebreak)
                break_pt = (not tiebreak) and counts[ret - 1] >= 3 and counts[ret - 1] > counts[srv - 1]
                counts[v - 1] += 1
                points_sum[v - 1] += 1
                last_point = k == len(victors) - 1
                g_after = list(games_won)
                if last_point:
                    g_after[v - 1] += 1
                set_over = last_point and _set_over(g_after)
                row = _point_row(
                    plant, rng, speed_base, players, v, srv, ret, break_pt
                )
                elapsed += int(rng.integers(20, 70))
                row.update(
                    match_id=match_id,
                    player1=players[0],
                    player2=players[1],
                    elapsed_time=_clock(elapsed),
                    set_no=str(set_no),
                    game_no=str(game_no),
                    point_no=str(k + 1),
                    p1_sets_won=str(sets_won[0]),
                    p2_sets_won=str(sets_won[1]),
                    p1_games_won=str(games_won[0]),
                    p2_games_won=str(games_won[1]),
                    p1_score=s1,
                    p2_score=s2,
                    points_victor=str(v),
                    p1_points_sum=str(points_sum[0]),
                    p2_points_sum=str(points_sum[1]),
                    game_victor=str(v) if last_point else "0",
                    set_victor=str(v) if set_over else "0",
                )
                rows.append(row)
            games_won[gw - 1] += 1
            prev_game_winner = gw
            server = 3 - server
            if _set_over(games_won):
                sets_won[gw - 1] += 1
                break
    for row in rows:
        row.update({f"p{i}_{k}_diff": "" for i in (1, 2) for k in ("points", "game", "set")})
        row.update(p1_points_won="", p2_points_won="")
    return rows


def _set_over(games: list[int]) -> bool:
    a, b = games
    return (max(a, b) >= 6 and abs(a - b) >= 2) or max(a, b) == 7


def _point_row(plant, rng, speed_base, players, victor, srv, ret, break_pt) -> dict[str, str]:
    row = {c: "0" for c in COLUMNS}
    flag = {i: {} for i in (1, 2)}
    consistent = rng.random() < plant.point_signal
    won_by = victor if consistent else int(rng.integers(1, 3))
    u = rng.random()
    if won_by == srv:
        if u < 0.25:
            flag[srv]["ace"] = 1
        elif u < 0.70:
            flag[srv]["winner"] = 1
        else:
            flag[ret]["unf_err"] = 1
    else:
        if u < 0.15:
            flag[srv]["double_fault"] = 1
        elif u < 0.60:
            flag[ret]["winner"] = 1
        else:
            flag[srv]["unf_err"] = 1
    for i in (1, 2):
        if rng.random() < 0.15:
            flag[i]["net_pt"] = 1
            flag[i]["net_pt_won"] = int(victor == i)
    if break_pt:
        flag[ret]["break_pt"] = 1
        flag[ret]["break_pt_won"] = int(victor == ret)
        flag[ret]["break_pt_missed"] = int(victor != ret)
    for i in (1, 2):
        for k, v in flag[i].items():
            row[f"p{i}_{k}"] = str(v)
    row[f"p{srv}_serve"] = "1"
    row[f"p{ret}_serve"] = "0"

    name = players[srv - 1]
    speed = rng.normal(speed_base[name], 6.0) + (8.0 if flag[srv].get("ace") else 0.0)
    row[f"p{srv}_serve_speed"] = "" if rng.random() < plant.missing_speed_rate else f"{speed:.1f}"
    row[f"p{ret}_serve_speed"] = ""
    row[f"p{srv}_serve_depth"] = "" if rng.random() < plant.missing_depth_rate else ("CTL" if rng.random() < 0.5 else "NCTL")
    row[f"p{ret}_serve_depth"] = ""
    returned = not (flag[srv].get("ace") or flag[srv].get("double_fault"))
    if returned and rng.random() >= plant.missing_depth_rate:
        row[f"p{ret}_return_depth"] = "D" if rng.random() < 0.5 else "ND"
    else:
        row[f"p{ret}_return_depth"] = ""
    row[f"p{srv}_return_depth"] = ""
    rally = 1 + rng.geometric(0.3) if returned else 1
    for i in (1, 2):
        row[f"p{i}_distance_run"] = f"{rally * rng.uniform(2.0, 5.0) + rng.uniform(0.0, 2.0):.2f}"

    for group in plant.zero_groups:
        _zero_group(row, group)
    return row


_GROUP_COLUMNS = {
    "serve": ("serve", "double_fault", "break_pt_missed", "ace", "serve_speed", "serve_depth"),
    "return": ("break_pt_won", "return_depth"),
    "psychology": ("unf_err", "net_pt", "net_pt_won", "winner"),
    "fatigue": ("distance_run",),
}


def _zero_group(row: dict[str, str], group: str) -> None:
    for f in _GROUP_COLUMNS[group]:
        if f in ("serve", "serve_speed"):
            continue  # the server flag and speed must stay usable by the pipeline
        for i in (1, 2):
            row[f"p{i}_{f}"] = "0"


def generate_synthetic_rows(count: int, seed: int, plant: SignalConfig | None = None) -> list[dict[str, str]]:
    """Raw CSV rows (strings, Table-5 columns) for ``count`` matches."""
    if count < 1:
        raise ValueError("count must be at least 1")
    plant = plant or SignalConfig()
    rng = np.random.default_rng(seed)
    names = [f"Player {k:03d}" for k in range(plant.n_players)]
    speed_base = {n: float(rng.uniform(100.0, 125.0)) for n in names}
    rows = []
    for m in range(count):
        a, b = rng.choice(len(names), size=2, replace=False)
        rows.extend(generate_match_rows(f"synth-{seed}-{m:04d}", (names[a], names[b]), plant, rng, speed_base))
    return rows


def generate_synthetic_matches(count: int, seed: int, plant: SignalConfig | None = None) -> list[MatchSequence]:
    """Generate, clean, impute, normalize, and featurize synthetic matches."""
    records = clean_points(generate_synthetic_rows(count, seed, plant))
    records = impute_serve_speed(records, seed)
    records, _ = normalize_records(records)
    return build_match_sequences(records)
