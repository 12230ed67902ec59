"""Subjective score pipeline: screening, outlier removal, MOS, and analysis.

The pipeline runs in the order the study does: per-rater session screening
against golden and repeated items first, then standard-deviation screening
across the surviving pool, then MOS aggregation on the raw 1-5 scale (no
Z-score rescaling). All thresholds are named config fields with the study
defaults. Everything is a pure function of its input multiset: records are
processed under sorted keys, so input order never matters.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import (IncompleteSessionError, SingularDesignError,
                     UndefinedCorrelationError)
from .profiles import TASK_ORDER

N_DIMS = 6
ROLE_TEST = "test"
ROLE_GOLDEN = "golden"
ROLE_REPEAT_FIRST = "repeated_first"
ROLE_REPEAT_SECOND = "repeated_second"
ROLES = (ROLE_TEST, ROLE_GOLDEN, ROLE_REPEAT_FIRST, ROLE_REPEAT_SECOND)

# Roles whose scores enter MOS; golden and second showings are screening-only.
MOS_ROLES = (ROLE_TEST, ROLE_REPEAT_FIRST)


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    session_id: str
    image_id: str
    scores: tuple[int, ...]
    role: str = ROLE_TEST
    timestamp: float = 0.0

    def __post_init__(self):
        if len(self.scores) != N_DIMS:
            raise ValueError(f"expected {N_DIMS} scores, got {len(self.scores)}")
        if any(int(s) != s or not 1 <= s <= 5 for s in self.scores):
            raise ValueError(f"scores must be integers in [1,5], got {self.scores}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        object.__setattr__(self, "scores", tuple(int(s) for s in self.scores))


@dataclass
class SessionSpec:
    session_id: str
    test_image_ids: list[str]
    golden: list[tuple[str, tuple[int, ...]]]  # (image_id, expert six-score)
    repeated: list[str]  # shown twice; their ids also appear in test_image_ids

    @property
    def presented_count(self) -> int:
        return len(self.test_image_ids) + len(self.golden) + len(self.repeated)


@dataclass
class ScreeningConfig:
    """Named thresholds with the study defaults."""

    golden_deviation: int = 1          # > 1 point from expert flags a golden rating
    repeat_deviation: int = 1          # > 1 point between showings flags a pair
    session_outlier_fraction: float = 0.10   # above this, the rater-session is discarded
    rater_outlier_fraction: float = 0.05     # above this, the rater is excluded entirely
    kurtosis_normal_range: tuple[float, float] = (2.0, 4.0)
    k_normal: float = 2.0
    k_other: float = math.sqrt(20.0)
    min_cell_ratings: int = 2
    pilot_srcc_threshold: float = 0.9


@dataclass
class SessionScreenResult:
    rater_id: str
    session_id: str
    outlier_count: int
    total: int
    discard: bool


def screen_session(ratings: list[RatingRecord], spec: SessionSpec,
                   config: ScreeningConfig | None = None) -> SessionScreenResult:
    """Screen one rater's completed session against golden and repeated items.

    A golden rating is an outlier when any dimension deviates from the expert
    score by more than the threshold; a repeated pair is an outlier when any
    dimension differs between showings by more than the threshold.
    """
    config = config or ScreeningConfig()
    raters = {r.rater_id for r in ratings}
    if len(raters) != 1:
        raise ValueError(f"expected ratings from one rater, got {sorted(raters)}")
    rater_id = next(iter(raters))

    by_role: dict[str, dict[str, list[RatingRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in ratings:
        by_role[r.role][r.image_id].append(r)

    repeated_set = set(spec.repeated)
    missing = []
    for image_id in spec.test_image_ids:
        role = ROLE_REPEAT_FIRST if image_id in repeated_set else ROLE_TEST
        if not by_role[role].get(image_id):
            missing.append(image_id)
    for image_id, _ in spec.golden:
        if not by_role[ROLE_GOLDEN].get(image_id):
            missing.append(image_id)
    for image_id in spec.repeated:
        if not by_role[ROLE_REPEAT_SECOND].get(image_id):
            missing.append(image_id)
    if missing:
        raise IncompleteSessionError(sorted(set(missing)))

    outliers = 0
    for image_id, expert in sorted(spec.golden):
        got = by_role[ROLE_GOLDEN][image_id][0].scores
        if any(abs(g - e) > config.golden_deviation for g, e in zip(got, expert)):
            outliers += 1
    for image_id in sorted(spec.repeated):
        first = by_role[ROLE_REPEAT_FIRST][image_id][0].scores
        second = by_role[ROLE_REPEAT_SECOND][image_id][0].scores
        if any(abs(a - b) > config.repeat_deviation for a, b in zip(first, second)):
            outliers += 1

    total = len(spec.golden) + len(spec.repeated)
    discard = total > 0 and outliers / total > config.session_outlier_fraction
    return SessionScreenResult(rater_id, spec.session_id, outliers, total, discard)


# -- BT.500-style standard-deviation screening --------------------------------

@dataclass
class Bt500Result:
    removed: set  # (rater_id, image_id, dim_index) triples flagged or swept by exclusion
    flagged: set  # triples flagged by the k*sigma rule alone
    excluded_raters: set

    @property
    def removed_count(self) -> int:
        return len(self.removed)


def _cell_threshold(values: np.ndarray, config: ScreeningConfig) -> tuple[float, float]:
    """Return (mean, k*sigma) for one image-dimension cell."""
    n = values.size
    mu = float(values.mean())
    d = values - mu
    s2 = float((d * d).sum() / (n - 1))
    if s2 == 0.0:
        return mu, 0.0
    m4 = float((d ** 4).sum() / n)
    beta2 = m4 / (s2 * s2)
    lo, hi = config.kurtosis_normal_range
    k = config.k_normal if lo <= beta2 <= hi else config.k_other
    return mu, k * math.sqrt(s2)


def bt500_screen(records: list[RatingRecord],
                 config: ScreeningConfig | None = None) -> Bt500Result:
    """Flag per-dimension ratings deviating more than k*sigma from their cell mean.

    k is 2 when the cell's kurtosis (population fourth moment over squared
    sample variance) lies in the normal range, else sqrt(20). Raters whose
    flagged fraction exceeds the exclusion threshold lose all their ratings.
    Cells with zero variance, or fewer ratings than ``min_cell_ratings``,
    flag nothing.
    """
    config = config or ScreeningConfig()
    pool = [r for r in records if r.role in MOS_ROLES]
    cells: dict[tuple[str, int], list[tuple[str, int]]] = defaultdict(list)
    per_rater_total: dict[str, int] = defaultdict(int)
    for r in pool:
        for dim in range(N_DIMS):
            cells[(r.image_id, dim)].append((r.rater_id, r.scores[dim]))
            per_rater_total[r.rater_id] += 1

    flagged: set = set()
    for (image_id, dim) in sorted(cells):
        entries = cells[(image_id, dim)]
        if len(entries) < config.min_cell_ratings:
            continue
        values = np.array([score for _, score in entries], dtype=np.float64)
        mu, limit = _cell_threshold(values, config)
        if limit == 0.0:
            continue
        for rater_id, score in entries:
            if abs(score - mu) > limit:
                flagged.add((rater_id, image_id, dim))

    per_rater_flagged: dict[str, int] = defaultdict(int)
    for rater_id, _, _ in flagged:
        per_rater_flagged[rater_id] += 1
    excluded = {rid for rid, n in per_rater_flagged.items()
                if n / per_rater_total[rid] > config.rater_outlier_fraction}

    removed = set(flagged)
    for r in pool:
        if r.rater_id in excluded:
            for dim in range(N_DIMS):
                removed.add((r.rater_id, r.image_id, dim))
    return Bt500Result(removed=removed, flagged=flagged, excluded_raters=excluded)


# -- MOS aggregation -----------------------------------------------------------

@dataclass
class MosEntry:
    mos: np.ndarray     # six means on the raw 1-5 scale
    count: np.ndarray   # surviving ratings per dimension
    std: np.ndarray     # per-dimension sample std (0 for a single rating)


@dataclass
class MosTable:
    entries: dict[str, MosEntry]
    dropped: list[str] = field(default_factory=list)

    def matrix(self) -> tuple[list[str], np.ndarray]:
        ids = sorted(self.entries)
        return ids, np.stack([self.entries[i].mos for i in ids])


def compute_mos(records: list[RatingRecord], removed: set = frozenset(),
                excluded_raters: set = frozenset()) -> MosTable:
    """Average surviving per-dimension ratings into MOS, raw 1-5 scale."""
    cells: dict[str, list[list[int]]] = defaultdict(lambda: [[] for _ in range(N_DIMS)])
    seen: set[str] = set()
    for r in records:
        if r.role not in MOS_ROLES:
            continue
        seen.add(r.image_id)
        if r.rater_id in excluded_raters:
            continue
        for dim in range(N_DIMS):
            if (r.rater_id, r.image_id, dim) in removed:
                continue
            cells[r.image_id][dim].append(r.scores[dim])

    entries: dict[str, MosEntry] = {}
    dropped: list[str] = []
    for image_id in sorted(seen):
        dims = cells[image_id]
        if any(len(v) == 0 for v in dims):
            dropped.append(image_id)
            continue
        mos = np.array([np.mean(v) for v in dims])
        count = np.array([len(v) for v in dims])
        std = np.array([np.std(v, ddof=1) if len(v) > 1 else 0.0 for v in dims])
        entries[image_id] = MosEntry(mos=mos, count=count, std=std)
    return MosTable(entries=entries, dropped=dropped)


# -- correlation metrics ---------------------------------------------------------

def _ranks(x: np.ndarray) -> np.ndarray:
    """1-based fractional ranks, ties averaged."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def plcc(x, y) -> float:
    """Pearson linear correlation."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError("inputs must have equal length")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = float((xc * xc).sum()), float((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return float((xc * yc).sum() / math.sqrt(sx * sy))


def srcc(x, y) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError("inputs must have equal length")
    if x.size < 2:
        raise ValueError("need at least two samples")
    return plcc(_ranks(x), _ranks(y))


@dataclass
class PilotGateResult:
    passed: bool
    per_dimension_srcc: list[float | None]
    diagnostics: list[str]


def pilot_gate(trainee: np.ndarray, expert: np.ndarray,
               config: ScreeningConfig | None = None) -> PilotGateResult:
    """Gate a trainee on per-dimension rank agreement with the expert scores.

    Both arguments are (n_items, 6). The gate passes only when every
    dimension's SRCC reaches the threshold; a constant trainee column cannot
    be ranked and fails with a diagnostic instead of raising.
    """
    config = config or ScreeningConfig()
    trainee = np.asarray(trainee, dtype=np.float64)
    expert = np.asarray(expert, dtype=np.float64)
    if trainee.shape != expert.shape or trainee.ndim != 2 or trainee.shape[1] != N_DIMS:
        raise ValueError(f"expected matching (n,{N_DIMS}) matrices")
    per_dim: list[float | None] = []
    diagnostics: list[str] = []
    passed = True
    for dim, name in enumerate(TASK_ORDER):
        try:
            rho = srcc(trainee[:, dim], expert[:, dim])
        except UndefinedCorrelationError:
            per_dim.append(None)
            diagnostics.append(f"{name}: constant ratings cannot be ranked")
            passed = False
            continue
        per_dim.append(rho)
        if rho < config.pilot_srcc_threshold:
            passed = False
    return PilotGateResult(passed=passed, per_dimension_srcc=per_dim,
                           diagnostics=diagnostics)


# -- overall-quality regression ---------------------------------------------------

@dataclass
class RegressionFit:
    coefficients: np.ndarray      # five weights, task order up to fidelity
    intercept: float
    r_squared: float
    coefficients_no_intercept: np.ndarray  # through-origin fit of the same data


def fit_overall_regression(mos) -> RegressionFit:
    """Least-squares fit of overall quality on the five dimension MOS columns.

    The intercept is estimated but reported separately from the five
    coefficients; a through-origin coefficient set is included as well.
    """
    if isinstance(mos, MosTable):
        _, matrix = mos.matrix()
    else:
        matrix = np.asarray(mos, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != N_DIMS:
        raise ValueError(f"expected an (n,{N_DIMS}) MOS matrix")
    n = matrix.shape[0]
    if n < N_DIMS:
        raise SingularDesignError(f"need at least {N_DIMS} images, got {n}")
    x = matrix[:, :5]
    y = matrix[:, 5]
    design = np.hstack([np.ones((n, 1)), x])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesignError("design matrix is rank deficient")
    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residual = y - design @ beta
    ss_res = float(residual @ residual)
    yc = y - y.mean()
    ss_tot = float(yc @ yc)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    beta0, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    return RegressionFit(coefficients=beta[1:], intercept=float(beta[0]),
                         r_squared=r2, coefficients_no_intercept=beta0)


# -- whole-pipeline driver ---------------------------------------------------------

@dataclass
class PipelineReport:
    session_results: list[SessionScreenResult]
    discarded_sessions: list[tuple[str, str]]
    bt500: Bt500Result
    mos: MosTable


def run_pipeline(records: list[RatingRecord], specs: dict[str, SessionSpec],
                 config: ScreeningConfig | None = None) -> PipelineReport:
    """Session screening, then BT.500 screening, then MOS, in study order."""
    config = config or ScreeningConfig()
    groups: dict[tuple[str, str], list[RatingRecord]] = defaultdict(list)
    for r in records:
        groups[(r.rater_id, r.session_id)].append(r)

    session_results = []
    discarded = []
    survivors: list[RatingRecord] = []
    for key in sorted(groups):
        rater_id, session_id = key
        result = screen_session(groups[key], specs[session_id], config)
        session_results.append(result)
        if result.discard:
            discarded.append(key)
        else:
            survivors.extend(groups[key])

    bt = bt500_screen(survivors, config)
    mos = compute_mos(survivors, removed=bt.removed, excluded_raters=bt.excluded_raters)
    return PipelineReport(session_results=session_results, discarded_sessions=discarded,
                          bt500=bt, mos=mos)
