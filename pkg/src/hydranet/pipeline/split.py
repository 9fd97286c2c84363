from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .schema import ConfigError


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]
    folds: tuple[tuple[str, ...], ...]

    def fold_train(self, k: int) -> tuple[str, ...]:
        """Training ids for CV fold ``k`` (every fold but ``k``)."""
        return tuple(m for i, f in enumerate(self.folds) if i != k for m in f)


def split_dataset(match_ids: Iterable, test_fraction: float = 0.2, folds: int = 5, seed: int = 0) -> DatasetSplit:
    """Split by whole matches: seeded shuffle, last ceil(fraction*n) to test, rest into folds.

    Accepts ids or objects with a ``match_id`` attribute. Fold sizes differ by at
    most one, larger folds first.
    """
    ids = sorted({getattr(m, "match_id", m) for m in match_ids})
    n = len(ids)
    n_test = math.ceil(test_fraction * n)
    n_train = n - n_test
    if folds < 1 or n_train < folds:
        raise ConfigError(f"{n_train} training matches cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    train, test = shuffled[:n_train], shuffled[n_train:]
    base, extra = divmod(n_train, folds)
    parts, pos = [], 0
    for k in range(folds):
        size = base + (1 if k < extra else 0)
        parts.append(tuple(train[pos : pos + size]))
        pos += size
    return DatasetSplit(tuple(train), tuple(test), tuple(parts))
