"""
Tests for trial statistics.

The Welch p-values are checked against an independent continued-fraction
evaluation of the regularized incomplete beta function.

Run: pytest tests/test_stats.py -v
"""

import math
import random
import sys
from pathlib import Path

import pytest

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.errors import DegenerateSample
from app.stats import describe, f_variance_test, trial_stats, welch_t_test


def _betacf(a, b, x, iterations=200, eps=3e-12):
    """Lentz continued fraction for the incomplete beta function."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, iterations + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betai(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(1.0 - x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _two_sided_p(t, df):
    return _betai(df / 2.0, 0.5, df / (df + t * t))


def _welch_oracle(a, b):
    """Textbook t, Welch-Satterthwaite df and two-sided p."""
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    t = (ma - mb) / math.sqrt(va / na + vb / nb)
    df = (va / na + vb / nb) ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, df, _two_sided_p(t, df)


def _f_cdf(F, df1, df2):
    return _betai(df1 / 2.0, df2 / 2.0, df1 * F / (df1 * F + df2))


def _random_pairs(count=20, seed=1729):
    rng = random.Random(seed)
    for _ in range(count):
        a = [rng.gauss(rng.uniform(5, 10), rng.uniform(0.1, 2.0)) for _ in range(rng.randint(3, 12))]
        b = [rng.gauss(rng.uniform(5, 10), rng.uniform(0.1, 2.0)) for _ in range(rng.randint(3, 12))]
        yield a, b


class TestDescribe:
    """Test mean and sample deviation."""

    def test_sample_std_uses_n_minus_one(self):
        mean, std = describe([9.0, 10.0, 10.0, 9.0, 10.0])
        assert mean == pytest.approx(9.6)
        assert std == pytest.approx(math.sqrt(0.3))

    def test_single_value(self):
        """One value has a mean but no deviation."""
        assert describe([7.5]) == (7.5, None)

    def test_empty(self):
        with pytest.raises(DegenerateSample):
            describe([])


class TestWelch:
    """Test Welch's t-test."""

    def test_against_oracle(self):
        """t, df and p agree with a hand computation and the continued-fraction oracle."""
        a = [9.8214, 10.0, 9.4643, 10.0, 9.7321]
        b = [8.1, 7.9, 9.2, 6.5, 8.8, 7.4]
        result = welch_t_test(a, b)

        na, nb = len(a), len(b)
        ma, mb = sum(a) / na, sum(b) / nb
        va = sum((x - ma) ** 2 for x in a) / (na - 1)
        vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
        t = (ma - mb) / math.sqrt(va / na + vb / nb)
        df = (va / na + vb / nb) ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))

        assert result.t == pytest.approx(t, rel=1e-9)
        assert result.df == pytest.approx(df, rel=1e-9)
        assert result.p == pytest.approx(_two_sided_p(t, df), rel=1e-6)
        assert not result.degenerate

    def test_random_pairs_against_oracle(self):
        """Twenty seeded random pairs agree with the continued-fraction oracle."""
        for a, b in _random_pairs():
            t, df, p = _welch_oracle(a, b)
            result = welch_t_test(a, b)
            assert result.t == pytest.approx(t, rel=1e-9)
            assert result.df == pytest.approx(df, rel=1e-9)
            assert result.p == pytest.approx(p, rel=1e-6, abs=1e-12)

    def test_affine_invariance(self):
        """Rescaling and shifting both groups the same way changes nothing."""
        for a, b in _random_pairs(count=5, seed=11):
            base = welch_t_test(a, b)
            scaled = welch_t_test([3.5 * x + 2 for x in a], [3.5 * x + 2 for x in b])
            assert scaled.t == pytest.approx(base.t, rel=1e-9)
            assert scaled.df == pytest.approx(base.df, rel=1e-9)
            assert scaled.p == pytest.approx(base.p, rel=1e-9)

    def test_symmetric(self):
        """Swapping the groups flips t and keeps p."""
        a, b = [1.0, 2.0, 3.0], [2.0, 4.0, 6.0, 8.0]
        forward, backward = welch_t_test(a, b), welch_t_test(b, a)
        assert forward.t == pytest.approx(-backward.t)
        assert forward.p == pytest.approx(backward.p)

    def test_constant_groups_degenerate(self):
        """Two constant groups give a flagged result, not a division by zero."""
        result = welch_t_test([10.0, 10.0, 10.0], [10.0, 10.0])
        assert result.degenerate
        assert math.isnan(result.t)
        assert result.to_dict()["t"] is None

    def test_too_few_values(self):
        with pytest.raises(DegenerateSample):
            welch_t_test([1.0], [1.0, 2.0])


class TestFTest:
    """Test the one-sided variance-reduction F-test."""

    def test_smaller_variance_small_p(self):
        """A much tighter first group gives a small p."""
        result = f_variance_test([10.0, 10.1, 9.9, 10.0, 10.05], [6.0, 9.5, 7.0, 10.0, 8.0])
        assert result.F < 1
        assert (result.df1, result.df2) == (4, 4)
        assert result.p < 0.01

    def test_random_pairs_against_oracle(self):
        """F and its one-sided p agree with the incomplete-beta oracle."""
        for a, b in _random_pairs():
            result = f_variance_test(a, b)
            ma, mb = sum(a) / len(a), sum(b) / len(b)
            F = (sum((x - ma) ** 2 for x in a) / (len(a) - 1)) / (sum((x - mb) ** 2 for x in b) / (len(b) - 1))
            assert result.F == pytest.approx(F, rel=1e-9)
            assert result.p == pytest.approx(_f_cdf(F, len(a) - 1, len(b) - 1), rel=1e-6, abs=1e-12)

    def test_swap_inverts(self):
        """Swapping the groups inverts F and complements p."""
        for a, b in _random_pairs(count=5, seed=23):
            forward, backward = f_variance_test(a, b), f_variance_test(b, a)
            assert forward.F * backward.F == pytest.approx(1.0)
            assert (forward.df1, forward.df2) == (backward.df2, backward.df1)
            assert forward.p + backward.p == pytest.approx(1.0)

    def test_scale_invariance(self):
        """Scaling both groups by the same factor leaves F unchanged."""
        a, b = [10.0, 10.1, 9.9, 10.0, 10.05], [6.0, 9.5, 7.0, 10.0, 8.0]
        base, scaled = f_variance_test(a, b), f_variance_test([4 * x for x in a], [4 * x for x in b])
        assert scaled.F == pytest.approx(base.F)
        assert scaled.p == pytest.approx(base.p)

    def test_equal_samples(self):
        """Identical spreads give F = 1 and p = 0.5."""
        result = f_variance_test([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert result.F == pytest.approx(1.0)
        assert result.p == pytest.approx(0.5)

    def test_constant_reference(self):
        """A constant second group makes F infinite."""
        result = f_variance_test([1.0, 2.0], [5.0, 5.0])
        assert math.isinf(result.F)
        assert result.to_dict()["F"] == "inf"

    def test_both_constant(self):
        assert f_variance_test([10.0, 10.0], [10.0, 10.0]).degenerate


class TestTrialStats:
    """Test the combined summary."""

    def test_single_group(self):
        stats = trial_stats([10.0, 10.0])
        assert stats.mean == 10.0 and stats.sample_std == 0.0
        assert stats.welch is None and stats.f_test is None

    def test_comparison(self):
        stats = trial_stats([10.0, 9.8, 10.0], [8.0, 9.0, 7.5])
        assert stats.n == 3
        assert stats.welch.t > 0
        assert stats.to_dict()["f_test"]["df1"] == 2

    def test_small_group_skips_comparison(self):
        """A one-trial group is summarized but not compared."""
        assert trial_stats([9.0], [8.0, 9.0]).welch is None


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
