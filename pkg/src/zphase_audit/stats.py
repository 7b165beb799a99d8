"""Sensitivity estimation with percentile-bootstrap confidence intervals.

All resampling is per nodule, vectorized, and deterministic for a given
seed. Tables derive each cell's seed from the table seed and the cell's
position, so adding or removing cells never perturbs the others.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EmptyCellError
from .geometry import DEFAULT_PHASE_BINS, bin_phase, phase_bins
from .matching import Condition, NoduleOutcome

DEFAULT_RESAMPLES = 2000
DEFAULT_CI_LEVEL = 0.95

# Sub-seed namespaces, so different tables draw from unrelated streams.
NS_CELL = 1
NS_SWEEP_NOISE = 2
NS_SWEEP_CI = 3


class RatioStratum(enum.Enum):
    """Interval/diameter strata. Boundaries are lower-closed."""

    WELL_SAMPLED = ("well_sampled", 0.0, 0.5)
    CRITICAL = ("critical", 0.5, 1.0)
    UNDERSAMPLED = ("undersampled", 1.0, math.inf)

    def __init__(self, label: str, lower: float, upper: float) -> None:
        self.label = label
        self.lower = lower
        self.upper = upper

    @classmethod
    def classify(cls, ratio: float) -> "RatioStratum":
        if not (math.isfinite(ratio) and ratio > 0):
            raise ValueError(f"ratio must be a positive finite value, got {ratio}")
        if ratio < cls.WELL_SAMPLED.upper:
            return cls.WELL_SAMPLED
        if ratio < cls.CRITICAL.upper:
            return cls.CRITICAL
        return cls.UNDERSAMPLED


@dataclass(frozen=True)
class SensitivityCell:
    """Counts and interval estimate for one table cell.

    Empty cells (total == 0) carry None for the estimate and bounds; they
    are reported as empty, never as zero sensitivity.
    """

    label: str
    detected: int
    total: int
    sensitivity: float | None
    ci_low: float | None
    ci_high: float | None

    def __post_init__(self) -> None:
        if not 0 <= self.detected <= self.total:
            raise ValueError(f"detected must lie in [0, total], got {self.detected}/{self.total}")

    @property
    def empty(self) -> bool:
        return self.total == 0


@dataclass(frozen=True)
class PhaseRow:
    bin_center: float
    cell: SensitivityCell


@dataclass(frozen=True)
class RatioRow:
    stratum: RatioStratum
    bin_center: float | None
    cell: SensitivityCell


def subseed(seed: int, *key: int) -> int:
    """Derive a deterministic sub-stream seed from a base seed and a cell key."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])


def sensitivity(outcomes: list[NoduleOutcome]) -> float:
    """Fraction of outcomes detected. Raises EmptyCellError on an empty cell."""
    if not outcomes:
        raise EmptyCellError("sensitivity is undefined for an empty cell")
    return sum(1 for o in outcomes if o.detected) / len(outcomes)


def _nearest_rank(q: float, n: int) -> int:
    """Zero-based nearest-rank index: smallest k with (k + 1) / n >= q."""
    return min(n - 1, max(0, math.ceil(q * n) - 1))


def proportion_ci(
    flags: np.ndarray,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    *,
    seed: int,
) -> tuple[float, float]:
    """Percentile-bootstrap CI for the mean of a boolean sample.

    Draws ``resamples`` same-size resamples with replacement, computes each
    resample's mean, and reads the interval off the sorted means by
    nearest rank.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        raise EmptyCellError("cannot bootstrap an empty cell")
    if resamples < 1:
        raise ValueError(f"resamples must be >= 1, got {resamples}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"ci level must lie in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, flags.size, size=(resamples, flags.size))
    means = flags[indices].mean(axis=1)
    means.sort()
    alpha = (1.0 - level) / 2.0
    low = means[_nearest_rank(alpha, resamples)]
    high = means[_nearest_rank(1.0 - alpha, resamples)]
    return float(low), float(high)


def bootstrap_ci(
    outcomes: list[NoduleOutcome],
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    *,
    seed: int,
) -> tuple[float, float]:
    """Percentile-bootstrap CI for the sensitivity of a set of outcomes."""
    if not outcomes:
        raise EmptyCellError("cannot bootstrap an empty cell")
    flags = np.fromiter((o.detected for o in outcomes), dtype=bool, count=len(outcomes))
    return proportion_ci(flags, resamples, level, seed=seed)


def make_cell(
    label: str,
    outcomes: list[NoduleOutcome],
    *,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int,
) -> SensitivityCell:
    """Build one table cell; empty input yields an empty cell, not zeros."""
    if not outcomes:
        return SensitivityCell(label, 0, 0, None, None, None)
    detected = sum(1 for o in outcomes if o.detected)
    low, high = bootstrap_ci(outcomes, resamples, level, seed=seed)
    return SensitivityCell(label, detected, len(outcomes), detected / len(outcomes), low, high)


def summarize_conditions(
    outcomes_by_condition: dict[Condition, list[NoduleOutcome]],
    *,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int,
) -> list[tuple[Condition, SensitivityCell]]:
    """One overall sensitivity cell per condition, in definition order."""
    rows = []
    for index, condition in enumerate(Condition):
        if condition not in outcomes_by_condition:
            continue
        cell_seed = subseed(seed, NS_CELL, 0, index)
        rows.append(
            (
                condition,
                make_cell(
                    condition.label,
                    outcomes_by_condition[condition],
                    resamples=resamples,
                    level=level,
                    seed=cell_seed,
                ),
            )
        )
    return rows


def stratify_by_phase(
    outcomes: list[NoduleOutcome],
    *,
    bin_count: int = DEFAULT_PHASE_BINS,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int,
) -> list[PhaseRow]:
    """One sensitivity cell per phase bin, for a single condition's outcomes.

    Mixing conditions in one phase table would average incomparable grids,
    so that is refused.
    """
    conditions = {o.condition for o in outcomes}
    if len(conditions) > 1:
        raise ConfigurationError(
            "phase table expects outcomes from a single condition; "
            f"got {sorted(c.label for c in conditions)}"
        )
    bins = phase_bins(bin_count)
    groups: dict[int, list[NoduleOutcome]] = {b.index: [] for b in bins}
    for outcome in outcomes:
        groups[bin_phase(outcome.zphase, bin_count).index].append(outcome)
    rows = []
    for b in bins:
        cell_seed = subseed(seed, NS_CELL, 1, b.index)
        cell = make_cell(
            f"{b.center:.2f}", groups[b.index], resamples=resamples, level=level, seed=cell_seed
        )
        rows.append(PhaseRow(b.center, cell))
    return rows


def stratify_by_ratio(
    outcomes: list[NoduleOutcome],
    *,
    crossed: bool = False,
    bin_count: int = DEFAULT_PHASE_BINS,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int,
) -> list[RatioRow]:
    """Sensitivity by interval/diameter stratum, optionally crossed with phase.

    Outcomes without a ratio (no usable diameter) are excluded. Outcomes may
    be pooled across conditions: the ratio already carries each condition's
    interval.
    """
    valid = [o for o in outcomes if o.ratio is not None]
    rows = []
    for stratum_index, stratum in enumerate(RatioStratum):
        members = [o for o in valid if RatioStratum.classify(o.ratio) is stratum]
        if not crossed:
            cell_seed = subseed(seed, NS_CELL, 2, stratum_index)
            cell = make_cell(
                stratum.label, members, resamples=resamples, level=level, seed=cell_seed
            )
            rows.append(RatioRow(stratum, None, cell))
            continue
        for b in phase_bins(bin_count):
            sub = [o for o in members if bin_phase(o.zphase, bin_count).index == b.index]
            cell_seed = subseed(seed, NS_CELL, 3, stratum_index, b.index)
            cell = make_cell(
                f"{stratum.label}:{b.center:.2f}",
                sub,
                resamples=resamples,
                level=level,
                seed=cell_seed,
            )
            rows.append(RatioRow(stratum, b.center, cell))
    return rows
