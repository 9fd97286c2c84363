"""Point-level record schema (54 columns) and CSV round-tripping."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

COLUMNS: tuple[str, ...] = (
    "match_id",
    "player1",
    "player2",
    "elapsed_time",
    "set_no",
    "game_no",
    "point_no",
    "p1_sets_won",
    "p2_sets_won",
    "p1_games_won",
    "p2_games_won",
    "p1_score",
    "p2_score",
    "p1_serve",
    "p2_serve",
    "points_victor",
    "p1_points_won",
    "p2_points_won",
    "p1_points_sum",
    "p2_points_sum",
    "game_victor",
    "set_victor",
    "p1_ace",
    "p2_ace",
    "p1_winner",
    "p2_winner",
    "p1_double_fault",
    "p2_double_fault",
    "p1_unf_err",
    "p2_unf_err",
    "p1_net_pt",
    "p2_net_pt",
    "p1_net_pt_won",
    "p2_net_pt_won",
    "p1_break_pt",
    "p2_break_pt",
    "p1_break_pt_won",
    "p2_break_pt_won",
    "p1_break_pt_missed",
    "p2_break_pt_missed",
    "p1_distance_run",
    "p2_distance_run",
    "p1_points_diff",
    "p1_game_diff",
    "p1_set_diff",
    "p2_points_diff",
    "p2_game_diff",
    "p2_set_diff",
    "p1_serve_speed",
    "p2_serve_speed",
    "p1_serve_depth",
    "p2_serve_depth",
    "p1_return_depth",
    "p2_return_depth",
)

BINARY_FIELDS: tuple[str, ...] = tuple(
    f"p{i}_{name}"
    for name in (
        "serve",
        "points_won",
        "ace",
        "winner",
        "double_fault",
        "unf_err",
        "net_pt",
        "net_pt_won",
        "break_pt",
        "break_pt_won",
        "break_pt_missed",
    )
    for i in (1, 2)
)

# score tokens other than plain integers
SCORE_TOKENS = {"AD": 50}


class SchemaError(ValueError):
    pass


class RowError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PointRecord:
    match_id: str
    player1: str
    player2: str
    elapsed_time: str
    set_no: int
    game_no: int
    point_no: int
    p1_sets_won: int
    p2_sets_won: int
    p1_games_won: int
    p2_games_won: int
    p1_score: int
    p2_score: int
    p1_serve: int
    p2_serve: int
    points_victor: int
    p1_points_won: int
    p2_points_won: int
    p1_points_sum: int
    p2_points_sum: int
    game_victor: int
    set_victor: int
    p1_ace: int
    p2_ace: int
    p1_winner: int
    p2_winner: int
    p1_double_fault: int
    p2_double_fault: int
    p1_unf_err: int
    p2_unf_err: int
    p1_net_pt: int
    p2_net_pt: int
    p1_net_pt_won: int
    p2_net_pt_won: int
    p1_break_pt: int
    p2_break_pt: int
    p1_break_pt_won: int
    p2_break_pt_won: int
    p1_break_pt_missed: int
    p2_break_pt_missed: int
    p1_distance_run: Optional[float]
    p2_distance_run: Optional[float]
    p1_points_diff: int
    p1_game_diff: int
    p1_set_diff: int
    p2_points_diff: int
    p2_game_diff: int
    p2_set_diff: int
    p1_serve_speed: Optional[float]
    p2_serve_speed: Optional[float]
    p1_serve_depth: int
    p2_serve_depth: int
    p1_return_depth: int
    p2_return_depth: int

    @property
    def server(self) -> int:
        return 1 if self.p1_serve else 2

    def replace(self, **changes) -> "PointRecord":
        return dataclasses.replace(self, **changes)

    def as_row(self) -> dict[str, str]:
        return {name: format_value(getattr(self, name)) for name in COLUMNS}


assert tuple(f.name for f in dataclasses.fields(PointRecord)) == COLUMNS


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_point_csv(path: str | Path) -> list[dict[str, str]]:
    """Read a point-by-point CSV into raw records keyed by column name."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {missing}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise RowError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            rows.append(dict(zip(header, row)))
    return rows


def write_point_csv(records: Iterable[PointRecord | dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for rec in records:
            row = rec.as_row() if isinstance(rec, PointRecord) else rec
            writer.writerow([row.get(c, "") for c in COLUMNS])
