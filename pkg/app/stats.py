"""
Trial Statistics

Handles:
- Per-condition mean and sample standard deviation (n - 1 denominator)
- Welch's unequal-variance t-test, two-sided
- F-test for variance reduction, one-sided (is a's variance smaller than b's?)

Degenerate comparisons (both groups constant) return a result flagged
`degenerate` with NaN statistics instead of dividing by zero.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return _finite({"t": self.t, "df": self.df, "p": self.p, "degenerate": self.degenerate})


@dataclass(frozen=True)
class FTestResult:
    F: float
    df1: int
    df2: int
    p: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return _finite({"F": self.F, "df1": self.df1, "df2": self.df2, "p": self.p, "degenerate": self.degenerate})


@dataclass(frozen=True)
class TrialStats:
    mean: float
    sample_std: Optional[float]
    n: int
    welch: Optional[WelchResult] = None
    f_test: Optional[FTestResult] = None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sample_std": self.sample_std,
            "n": self.n,
            "welch": self.welch.to_dict() if self.welch else None,
            "f_test": self.f_test.to_dict() if self.f_test else None,
        }


def _finite(values: dict) -> dict:
    # NaN and inf are not valid JSON
    out = {}
    for key, value in values.items():
        if isinstance(value, float) and not math.isfinite(value):
            value = None if math.isnan(value) else ("inf" if value > 0 else "-inf")
        out[key] = value
    return out


def _sample(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DegenerateSample(f"Sample {name} needs at least 2 values, got {arr.size}")
    return arr


# -----------------------------------------------------------------------------
# Tests
# -----------------------------------------------------------------------------

def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """
    Welch's t-test.

    t = (mean_a - mean_b) / sqrt(va/na + vb/nb), df by Welch-Satterthwaite,
    p two-sided from the t distribution.

    Raises:
        DegenerateSample: a sample has fewer than two values
    """
    a, b = _sample(a, "a"), _sample(b, "b")
    na, nb = a.size, b.size
    va, vb = a.var(ddof=1), b.var(ddof=1)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0:
        logger.warning("Welch t-test on two constant samples; t is undefined")
        return WelchResult(math.nan, math.nan, math.nan, degenerate=True)

    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = float(se2 ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1)))
    p = float(2 * stats.t.sf(abs(t), df))
    return WelchResult(t, df, min(p, 1.0))


def f_variance_test(a: Sequence[float], b: Sequence[float]) -> FTestResult:
    """
    F = va / vb with df = (na - 1, nb - 1).

    p is one-sided for variance reduction: the probability of an F this
    small or smaller when the variances are equal.

    Raises:
        DegenerateSample: a sample has fewer than two values
    """
    a, b = _sample(a, "a"), _sample(b, "b")
    df1, df2 = a.size - 1, b.size - 1
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    if va == 0 and vb == 0:
        logger.warning("F-test on two constant samples; F is undefined")
        return FTestResult(math.nan, df1, df2, math.nan, degenerate=True)
    if vb == 0:
        return FTestResult(math.inf, df1, df2, 1.0)

    F = va / vb
    p = float(stats.f.cdf(F, df1, df2))
    return FTestResult(F, df1, df2, p)


# -----------------------------------------------------------------------------
# Summaries
# -----------------------------------------------------------------------------

def describe(values: Sequence[float]):
    """(mean, sample standard deviation); the deviation is None below two values."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DegenerateSample("Cannot describe an empty sample")
    std = float(arr.std(ddof=1)) if arr.size >= 2 else None
    return float(arr.mean()), std


def trial_stats(a: Sequence[float], b: Optional[Sequence[float]] = None) -> TrialStats:
    """
    Summary of sample a, compared against b when given.

    The comparison is skipped when either sample has fewer than two values.
    """
    mean, std = describe(a)
    welch = f_test = None
    if b is not None and len(a) >= 2 and len(b) >= 2:
        welch = welch_t_test(a, b)
        f_test = f_variance_test(a, b)
    return TrialStats(mean, std, len(a), welch, f_test)
