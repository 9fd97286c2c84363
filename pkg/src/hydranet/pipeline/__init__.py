from .cleaning import (
    NormalizationMeta,
    clean_points,
    impute_serve_speed,
    ingest,
    load_clean_csv,
    normalize_records,
    normalize_serve_speed,
    zscore_distance_run,
)
from .features import (
    FACTORS,
    GROUP_NAMES,
    GROUP_OFFSETS,
    GROUP_WIDTHS,
    MatchSequence,
    build_match_sequences,
    extract_momentum_features,
    group_slice,
)
from .schema import COLUMNS, ConfigError, DataError, PointRecord, RowError, SchemaError, parse_point_csv, write_point_csv
from .split import DatasetSplit, split_dataset
from .synthetic import SignalConfig, generate_synthetic_matches, generate_synthetic_rows
