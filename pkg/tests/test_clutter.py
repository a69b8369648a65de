import math

import numpy as np
import pytest
from scipy import integrate

from splitep.clutter import (ClutterModel, EnumerationError, clutter_loglik, default_grid,
                             ep_clutter, epadmm_clutter, epmc_clutter, exact_posterior,
                             simulate_clutter, snis_tilted_moments, tilted_moments)
from splitep.epadmm import AdmmConfig
from splitep.epmc import McConfig


def _npdf(x, m, v):
    return math.exp(-0.5 * (x - m) ** 2 / v) / math.sqrt(2 * math.pi * v)


def quad_tilted(y, m_c, v_c, cm):
    def f(t):
        return _npdf(t, m_c, v_c) * ((1 - cm.w) * _npdf(y, t, 1.0) + cm.w * _npdf(y, 0.0, cm.clutter_var))

    s = math.sqrt(v_c)
    lo, hi = m_c - 40 * s, m_c + 40 * s
    pts = [p for p in (y, m_c) if lo < p < hi]
    kw = dict(points=pts, limit=500, epsabs=0, epsrel=1e-12)
    z = integrate.quad(f, lo, hi, **kw)[0]
    mean = integrate.quad(lambda t: t * f(t), lo, hi, **kw)[0] / z
    var = integrate.quad(lambda t: (t - mean) ** 2 * f(t), lo, hi, **kw)[0] / z
    return mean, var


class TestLikelihood:
    def test_w0(self):
        assert clutter_loglik(0.3, 1.0, ClutterModel(0.0)) == pytest.approx(math.log(_npdf(0.3, 1.0, 1.0)))

    def test_w1_independent_of_theta(self):
        cm = ClutterModel(1.0)
        assert clutter_loglik(0.3, -4.0, cm) == clutter_loglik(0.3, 7.0, cm)

    def test_half(self):
        val = clutter_loglik(0.0, 0.0, ClutterModel(0.5))
        assert val == pytest.approx(math.log(0.5 * _npdf(0, 0, 1) + 0.5 * _npdf(0, 0, 10)))

    def test_validation(self):
        with pytest.raises(ValueError):
            ClutterModel(1.5)
        with pytest.raises(ValueError):
            ClutterModel(dim=2)


class TestExact:
    def test_empty(self):
        p = exact_posterior([], ClutterModel())
        assert (p.mean, p.variance) == (0.0, 100.0)

    def test_single_conjugate(self):
        p = exact_posterior([1.0], ClutterModel(0.0))
        assert p.mean == pytest.approx(100 / 101)
        assert p.variance == pytest.approx(100 / 101)

    def test_grid_density_against_quadrature(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(8, cm, seed=4)
        grid = default_grid(data, cm, 2001)
        p = exact_posterior(data, cm, grid)

        def f(t):
            v = _npdf(t, 0, cm.prior_var)
            for y in data:
                v *= (1 - cm.w) * _npdf(y, t, 1.0) + cm.w * _npdf(y, 0, cm.clutter_var)
            return v

        z = integrate.quad(f, -80, 80, points=list(data), limit=500, epsabs=0, epsrel=1e-12)[0]
        direct = np.array([f(t) for t in grid]) / z
        np.testing.assert_allclose(p.density, direct, rtol=1e-8, atol=1e-14)
        assert np.trapezoid(p.density, grid) == pytest.approx(1.0, abs=1e-6)

    def test_cap(self):
        data = simulate_clutter(21, ClutterModel(), seed=0)
        with pytest.raises(EnumerationError):
            exact_posterior(data, ClutterModel())
        approx = exact_posterior(data, ClutterModel(), approx_oracle=True)
        assert np.isfinite(approx.mean)


class TestTiltedMoments:
    @pytest.mark.parametrize("y,m_c,v_c,w", [(1.0, 0.0, 1.0, 0.5), (4.0, 2.0, 0.3, 0.2),
                                             (-3.0, 1.0, 5.0, 0.8), (0.0, 0.0, 100.0, 0.5)])
    def test_against_quadrature(self, y, m_c, v_c, w):
        cm = ClutterModel(w)
        assert tilted_moments(y, m_c, v_c, cm) == pytest.approx(quad_tilted(y, m_c, v_c, cm),
                                                                rel=1e-8, abs=1e-10)

    def test_rao_blackwell_exact_at_w0(self, rng):
        cm = ClutterModel(0.0)
        got = snis_tilted_moments(1.3, 0.2, 2.0, cm, rng, 5)
        assert got == pytest.approx(tilted_moments(1.3, 0.2, 2.0, cm), abs=1e-12)


class TestFits:
    def test_ep_w0_is_conjugate(self):
        cm = ClutterModel(0.0)
        data = simulate_clutter(6, cm, seed=2)
        fit = ep_clutter(data, cm)
        prec = 1 / cm.prior_var + data.size
        assert fit.mean == pytest.approx(data.sum() / prec, abs=1e-10)
        assert fit.variance == pytest.approx(1 / prec, abs=1e-10)

    def test_ep_close_to_exact(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(10, cm, seed=1)
        assert abs(ep_clutter(data, cm).mean - exact_posterior(data, cm).mean) <= 0.15

    def test_admm_rho0_equals_ep(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(10, cm, seed=3)
        a, b = ep_clutter(data, cm), epadmm_clutter(data, cm)
        assert a.mean == pytest.approx(b.mean, abs=1e-10)
        assert a.variance == pytest.approx(b.variance, abs=1e-10)

    def test_admm_variance_bound(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(10, cm, seed=3)
        fit = epadmm_clutter(data, cm, AdmmConfig(rho=0.0, b=1e-3))
        assert fit.variance >= 1e-3

    def test_epmc_large_k_matches_ep(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(10, cm, seed=1)
        ep = ep_clutter(data, cm)
        mc = epmc_clutter(data, cm, McConfig(samples=20000, seed=0))
        assert mc.mean == pytest.approx(ep.mean, abs=0.05)

    def test_epmc_k1_terminates(self):
        cm = ClutterModel(0.5)
        fit = epmc_clutter(simulate_clutter(10, cm, seed=1), cm, McConfig(samples=1, seed=0))
        assert math.isfinite(fit.mean) or fit.failures > 0

    def test_epmc_seeded(self):
        cm = ClutterModel(0.5)
        data = simulate_clutter(10, cm, seed=1)
        a = epmc_clutter(data, cm, McConfig(samples=64, seed=9))
        b = epmc_clutter(data, cm, McConfig(samples=64, seed=9))
        assert (a.mean, a.variance) == (b.mean, b.variance)

    def test_no_data(self):
        with pytest.raises(ValueError):
            ep_clutter([], ClutterModel())
