import csv
import math
from pathlib import Path

import numpy as np
import pytest

from hydranet.pipeline import (
    COLUMNS,
    FACTORS,
    GROUP_WIDTHS,
    ConfigError,
    DataError,
    RowError,
    SchemaError,
    build_match_sequences,
    clean_points,
    extract_momentum_features,
    impute_serve_speed,
    ingest,
    normalize_records,
    normalize_serve_speed,
    parse_point_csv,
    split_dataset,
    write_point_csv,
    zscore_distance_run,
)
from hydranet.pipeline.cleaning import NormalizationMeta, serve_speed_mixture

FIXTURES = Path(__file__).parent / "fixtures"
RAW = FIXTURES / "cleaning_raw.csv"
EXPECTED = FIXTURES / "cleaning_expected.csv"


def _raw_rows():
    return parse_point_csv(RAW)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------- parsing


def test_parse_counts_rows():
    assert len(_raw_rows()) == 20


def test_parse_three_rows(tmp_path):
    rows = _raw_rows()[:3]
    _write(tmp_path / "three.csv", COLUMNS, [[r[c] for c in COLUMNS] for r in rows])
    assert len(parse_point_csv(tmp_path / "three.csv")) == 3


def test_parse_is_order_insensitive(tmp_path):
    rows = _raw_rows()[:2]
    header = list(reversed(COLUMNS))
    _write(tmp_path / "rev.csv", header, [[r[c] for c in header] for r in rows])
    assert parse_point_csv(tmp_path / "rev.csv") == rows


def test_missing_column_is_schema_error(tmp_path):
    header = [c for c in COLUMNS if c != "p1_ace"]
    _write(tmp_path / "bad.csv", header, [])
    with pytest.raises(SchemaError, match="p1_ace"):
        parse_point_csv(tmp_path / "bad.csv")


def test_header_only_file_is_empty(tmp_path):
    _write(tmp_path / "empty.csv", COLUMNS, [])
    assert parse_point_csv(tmp_path / "empty.csv") == []


def test_wrong_arity_reports_line(tmp_path):
    rows = _raw_rows()[:2]
    body = [[r[c] for c in COLUMNS] for r in rows]
    body[1] = body[1][:-1]
    _write(tmp_path / "short.csv", COLUMNS, body)
    with pytest.raises(RowError) as err:
        parse_point_csv(tmp_path / "short.csv")
    assert err.value.line == 3


# ---------------------------------------------------------------- cleaning


def test_cleaning_fixture_row_by_row():
    got = [r.as_row() for r in clean_points(_raw_rows())]
    with open(EXPECTED, newline="") as fh:
        expected = list(csv.DictReader(fh))
    assert len(got) == len(expected) == 16
    for k, (g, e) in enumerate(zip(got, expected)):
        assert g == e, f"row {k}: " + str({c: (g[c], e[c]) for c in e if g[c] != e[c]})


def test_cleaning_examples():
    rows = _raw_rows()
    assert clean_points([rows[1]]) == []  # "0X" score
    first = clean_points([rows[0]])[0]
    assert first.p2_return_depth == 1
    rec = clean_points([dict(rows[0], p1_points_sum="10", p2_points_sum="7")])[0]
    assert (rec.p1_points_diff, rec.p2_points_diff) == (3, -3)


def test_unknown_depth_token_names_token_and_row():
    rows = _raw_rows()[:3]
    rows[2] = dict(rows[2], p1_return_depth="DEEP")
    with pytest.raises(ValueError, match=r"row 3.*DEEP"):
        clean_points(rows)


def test_round_trip_after_cleaning(tmp_path):
    records = clean_points(_raw_rows())
    write_point_csv(records, tmp_path / "c.csv")
    assert clean_points(parse_point_csv(tmp_path / "c.csv")) == records


# -------------------------------------------------------------- imputation


def _records_with_speed(speeds, won):
    """One server (player1) with a game per entry; ``won`` marks the server's game outcome."""
    base = clean_points(_raw_rows()[:1])[0]
    out = []
    for k, (s, w) in enumerate(zip(speeds, won), 1):
        out.append(base.replace(game_no=k, p1_serve_speed=s, points_victor=1 if w else 2))
    return out


def test_imputation_identity_without_missing():
    recs = _records_with_speed([100.0, 120.0], [True, False])
    assert impute_serve_speed(recs, 0) == recs


def test_imputation_uses_upper_half_for_won_games():
    for seed in range(20):
        recs = _records_with_speed([100.0, 120.0, None], [True, False, True])
        out = impute_serve_speed(recs, seed)
        assert out[2].p1_serve_speed >= 110.0
        assert out[:2] == recs[:2]


def test_imputation_uses_lower_half_for_lost_games():
    for seed in range(20):
        recs = _records_with_speed([100.0, 120.0, None], [True, False, False])
        assert impute_serve_speed(recs, seed)[2].p1_serve_speed <= 110.0


def test_imputation_deterministic_and_needs_data():
    recs = _records_with_speed([100.0, 105.0, 120.0, None, None], [True, False, True, True, False])
    assert impute_serve_speed(recs, 4) == impute_serve_speed(recs, 4)
    with pytest.raises(DataError):
        impute_serve_speed(_records_with_speed([None], [True]), 0)


def test_mixture_weights_are_one_to_one():
    vals, wts = serve_speed_mixture([100.0], [100.0, 120.0, 130.0])
    assert wts[0] == pytest.approx(0.5)
    assert wts.sum() == pytest.approx(1.0)


# ----------------------------------------------------------- normalization


def test_speed_normalization_endpoints():
    assert normalize_serve_speed(80.0, 80.0, 140.0) == -1.0
    assert normalize_serve_speed(110.0, 80.0, 140.0) == 0.0
    assert normalize_serve_speed(140.0, 80.0, 140.0) == 1.0
    assert normalize_serve_speed(200.0, 80.0, 140.0) == 1.0
    with pytest.raises(ConfigError):
        normalize_serve_speed(1.0, 5.0, 5.0)


def test_zscore_examples():
    z = zscore_distance_run([1.0, 2.0, 3.0])
    np.testing.assert_allclose(z.values, [-1.224745, 0.0, 1.224745], atol=1e-6)
    assert z.std == pytest.approx(math.sqrt(2 / 3))
    with pytest.warns(RuntimeWarning):
        flat = zscore_distance_run([5.0, 5.0, 5.0])
    assert flat.values == [0.0, 0.0, 0.0] and flat.degenerate


def test_zscore_random_moments():
    x = np.random.default_rng(0).gamma(2.0, 3.0, size=500)
    z = np.array(zscore_distance_run(x).values)
    assert abs(z.mean()) < 1e-12
    assert abs(z.var() - 1.0) < 1e-10


def test_normalize_records_and_meta_round_trip(tmp_path):
    recs = impute_serve_speed(clean_points(_raw_rows()), 0)
    out, meta = normalize_records(recs)
    for r in out:
        speed = r.p1_serve_speed if r.server == 1 else r.p2_serve_speed
        other = r.p2_serve_speed if r.server == 1 else r.p1_serve_speed
        assert -1.0 <= speed <= 1.0 and other == 0.0
    meta.write(tmp_path / "meta.txt")
    assert NormalizationMeta.read(tmp_path / "meta.txt") == meta
    again, _ = normalize_records(recs, meta)
    assert again == out


def test_ingest_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    ingest(RAW, a / "clean.csv", a / "meta.txt", seed=11)
    ingest(RAW, b / "clean.csv", b / "meta.txt", seed=11)
    assert (a / "clean.csv").read_bytes() == (b / "clean.csv").read_bytes()
    assert (a / "meta.txt").read_bytes() == (b / "meta.txt").read_bytes()


# ---------------------------------------------------------------- features


def test_feature_layout():
    assert GROUP_WIDTHS == (6, 2, 7, 1)
    assert len(FACTORS) == 16
    rec = clean_points(_raw_rows()[:1])[0]
    zero = rec.replace(**{f"p{i}_{f}": 0 for i in (1, 2) for f in FACTORS})
    v1, v2 = extract_momentum_features(zero)
    assert not v1.any() and not v2.any()
    v1, _ = extract_momentum_features(zero.replace(p1_ace=1))
    assert np.flatnonzero(v1).tolist() == [FACTORS.index("ace")] and FACTORS.index("ace") < 6


def test_match_sequences_from_fixture():
    recs, _ = normalize_records(impute_serve_speed(clean_points(_raw_rows()), 0))
    seqs = build_match_sequences(recs)
    assert [s.match_id for s in seqs] == ["fx-1", "fx-2"]
    fx1 = seqs[0]
    assert fx1.n_points == 14
    assert [(g.start, g.end) for g in fx1.games] == [(0, 6), (6, 12), (12, 14)]
    assert fx1.y_point.tolist() == [1 if v == 1 else 0 for v in fx1.victors]


def test_game_victor_conflict_is_data_error():
    recs = clean_points(_raw_rows())
    bad = [r.replace(game_victor=2) if (r.game_no, r.point_no) == (1, 6) and r.match_id == "fx-1" else r for r in recs]
    with pytest.raises(DataError):
        build_match_sequences(bad)


# ------------------------------------------------------------------ split


def test_split_example():
    s = split_dataset([f"m{k}" for k in range(10)], seed=0)
    assert len(s.test) == 2
    assert [len(f) for f in s.folds] == [2, 2, 2, 1, 1]
    assert not set(s.test) & set(s.train)
    assert sorted(m for f in s.folds for m in f) == sorted(s.train)
    assert split_dataset([f"m{k}" for k in range(10)], seed=0) == s


def test_split_too_small():
    with pytest.raises(ConfigError):
        split_dataset([f"m{k}" for k in range(5)], seed=0)
