"""Deterministic five-fold 7:1:2 dataset splitting."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeError

FOLD_COUNT = 5
RATIOS = (0.7, 0.1, 0.2)


@dataclass
class SplitPlan:
    seed: int
    fold_count: int
    folds: list[dict[str, list[str]]]  # each {"train": [...], "val": [...], "test": [...]}

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "fold_count": self.fold_count,
                           "folds": self.folds}, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "SplitPlan":
        obj = json.loads(text)
        return SplitPlan(seed=obj["seed"], fold_count=obj["fold_count"],
                         folds=obj["folds"])


def split_folds(image_ids, seed: int, fold_count: int = FOLD_COUNT) -> SplitPlan:
    """Partition ids into ``fold_count`` folds of disjoint test sets.

    Rounding rule: the shuffled id list is cut into ``fold_count`` test chunks
    of size n // fold_count, the first n % fold_count chunks taking one extra.
    Within a fold, validation takes the first n // 10 of the remaining ids in
    shuffled order and training takes everything else (remainders go to train).
    """
    ids = sorted(set(image_ids))
    n = len(ids)
    if n < 10:
        raise SizeError(f"need at least 10 images to split, got {n}")
    if len(ids) != len(list(image_ids)):
        raise SizeError("duplicate image ids in split input")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]

    base, extra = divmod(n, fold_count)
    chunks = []
    start = 0
    for i in range(fold_count):
        size = base + (1 if i < extra else 0)
        chunks.append(shuffled[start:start + size])
        start += size

    val_size = n // 10
    folds = []
    for i in range(fold_count):
        test = chunks[i]
        test_set = set(test)
        rest = [x for x in shuffled if x not in test_set]
        folds.append({"train": rest[val_size:], "val": rest[:val_size], "test": test})
    return SplitPlan(seed=seed, fold_count=fold_count, folds=folds)


def save_plan(plan: SplitPlan, path) -> None:
    Path(path).write_text(plan.to_json() + "\n")


def load_plan(path) -> SplitPlan:
    return SplitPlan.from_json(Path(path).read_text())
