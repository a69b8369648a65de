import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitep.diagnostics import (ChainSet, autocorrelation, between_chain_var, credible_interval,
                                 pooled_estimates, psrf, report_lines, within_chain_var)


def _two_pass_between(s):
    means = [sum(c) / len(c) for c in s]
    g = sum(means) / len(means)
    return sum((u - g) ** 2 for u in means) / (len(means) - 1)


def _two_pass_within(s):
    out = 0.0
    for c in s:
        mu = sum(c) / len(c)
        out += sum((v - mu) ** 2 for v in c) / (len(c) - 1)
    return out / len(s)


class TestChainSet:
    def test_shape(self):
        c = ChainSet.from_lists([[1, 2, 3], [4, 5, 6]])
        assert (c.m, c.n) == (2, 3)

    def test_ragged(self):
        with pytest.raises(ValueError):
            ChainSet.from_lists([[1, 2], [1]])


class TestVariances:
    def test_identical_chains_between_zero(self):
        assert between_chain_var(ChainSet([[1.0, 2.0, 3.0]] * 3)) == 0.0

    def test_two_means(self):
        assert between_chain_var(ChainSet([[0.0, 0.0], [2.0, 2.0]])) == pytest.approx(2.0)

    def test_constant_within_zero(self):
        assert within_chain_var(ChainSet([[1.0] * 4, [3.0] * 4])) == 0.0

    def test_within_example(self):
        assert within_chain_var(ChainSet([[0.0, 2.0], [0.0, 2.0]])) == pytest.approx(2.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            between_chain_var(ChainSet([[1.0, 2.0]]))
        with pytest.raises(ValueError):
            within_chain_var(ChainSet([[1.0], [2.0]]))

    def test_summation_oracles(self, rng):
        s = rng.normal(size=(5, 37))
        c = ChainSet(s)
        assert between_chain_var(c) == pytest.approx(_two_pass_between(s.tolist()), rel=1e-12)
        assert within_chain_var(c) == pytest.approx(_two_pass_within(s.tolist()), rel=1e-12)

    @given(shift=st.floats(-1e3, 1e3), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_shift_invariance(self, shift, seed):
        s = np.random.default_rng(seed).normal(size=(3, 20))
        a, b = ChainSet(s), ChainSet(s + shift)
        assert between_chain_var(b) == pytest.approx(between_chain_var(a), rel=1e-6, abs=1e-9)
        assert within_chain_var(b) == pytest.approx(within_chain_var(a), rel=1e-6, abs=1e-9)


class TestPooled:
    def test_table_row(self):
        s2, v = pooled_estimates(68.32, 98.53, 10, 1000)
        assert s2 == pytest.approx(166.75, abs=0.01)
        assert v == pytest.approx(173.58, abs=0.01)

    def test_no_between(self):
        s2, v = pooled_estimates(0.0, 4.0, 3, 10)
        assert s2 == pytest.approx(3.6) and v == pytest.approx(3.6)

    @given(b=st.floats(0, 100), w=st.floats(0, 100), m=st.integers(2, 50), n=st.integers(2, 5000))
    @settings(max_examples=60, deadline=None)
    def test_identities(self, b, w, m, n):
        s2, v = pooled_estimates(b, w, m, n)
        assert s2 == pytest.approx((n - 1) / n * w + b, rel=1e-12, abs=1e-300)
        assert v == pytest.approx(s2 + b / m, rel=1e-12, abs=1e-300)

    def test_errors(self):
        with pytest.raises(ValueError):
            pooled_estimates(1.0, 1.0, 1, 10)


class TestPsrf:
    def test_identical_n1000(self, rng):
        c = ChainSet(np.tile(rng.normal(size=1000), (4, 1)))
        assert psrf(c).psrf_paper == pytest.approx(0.999, abs=1e-12)

    def test_formula_oracle(self, rng):
        s = rng.normal(size=(6, 50)) + rng.normal(size=(6, 1))
        m, n = s.shape
        w = np.mean(np.var(s, axis=1, ddof=1))
        b = np.var(s.mean(axis=1), ddof=1)
        s2 = (n - 1) / n * w + b
        r = psrf(ChainSet(s))
        assert r.psrf_paper == pytest.approx((m + 1) / m * s2 / w - (n - 1) / (m * n), rel=1e-12)
        assert r.psrf_ratio == pytest.approx((s2 + b / m) / w, rel=1e-12)

    def test_sentinels(self):
        assert math.isinf(psrf(ChainSet([[1.0, 1.0], [2.0, 2.0]])).psrf_paper)
        assert math.isnan(psrf(ChainSet([[1.0, 1.0], [1.0, 1.0]])).psrf_paper)


class TestAcf:
    def test_lag_zero(self, rng):
        assert autocorrelation(rng.normal(size=50), 0) == pytest.approx(1.0)

    def test_alternating(self):
        x = np.array([1.0, -1.0] * 500)
        direct = sum(x[t] * x[t + 1] for t in range(999)) / sum(x * x)
        assert autocorrelation(x, 1) == pytest.approx(direct)
        assert autocorrelation(x, 1) == pytest.approx(-1.0, abs=2e-3)

    def test_white_noise(self, rng):
        n = 20000
        assert abs(autocorrelation(rng.normal(size=n), 1)) < 3 / math.sqrt(n)

    def test_errors(self):
        assert math.isnan(autocorrelation([2.0, 2.0, 2.0], 1))
        with pytest.raises(ValueError):
            autocorrelation([1.0, 2.0], 2)


class TestCredibleInterval:
    def test_constant(self):
        assert credible_interval([3.0] * 10) == (3.0, 3.0)

    def test_order_statistics(self):
        # linear interpolation: position p (n-1) in the sorted sample
        x = np.arange(1, 101, dtype=float)
        lo, hi = credible_interval(x, 0.95)
        assert lo == pytest.approx(1 + 0.025 * 99)
        assert hi == pytest.approx(1 + 0.975 * 99)

    def test_brackets_mean(self, rng):
        x = rng.normal(size=5000)
        lo, hi = credible_interval(x)
        assert lo <= x.mean() <= hi

    def test_errors(self):
        with pytest.raises(ValueError):
            credible_interval([])
        with pytest.raises(ValueError):
            credible_interval([1.0], 1.0)


def test_report_lines_are_key_value(rng):
    lines = report_lines(ChainSet(rng.normal(size=(3, 100))))
    keys = [ln.split(": ", 1)[0] for ln in lines]
    assert {"W", "B_over_n", "sigma2_plus", "V_hat", "psrf_paper", "psrf_ratio"} <= set(keys)
    for ln in lines:
        float(ln.split(": ", 1)[1])
