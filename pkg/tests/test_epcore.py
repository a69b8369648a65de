import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from splitep.epcore import (CavityCollapse, EpConfig, EpState, ExponentialBelief, converged,
                            ep_sweep, exponential_cavity, gaussian_cavity, gaussian_site_update,
                            moment_match_gaussian, run_ep)


def _npdf(x, m, v):
    return np.exp(-0.5 * (x - m) ** 2 / v) / np.sqrt(2 * np.pi * v)


class TestCavity:
    def test_vacuous_site(self):
        assert gaussian_cavity((1.5, 0.3), (0.0, math.inf)) == pytest.approx((1.5, 0.3))

    def test_division_oracle(self):
        # divide the densities on a grid and renormalise by quadrature
        grid = np.linspace(-20, 20, 200001)
        ratio = _npdf(grid, 1.0, 0.5) / _npdf(grid, 2.0, 1.0)
        z = np.trapezoid(ratio, grid)
        mean = np.trapezoid(grid * ratio, grid) / z
        var = np.trapezoid((grid - mean) ** 2 * ratio, grid) / z
        m, v = gaussian_cavity((1.0, 0.5), (2.0, 1.0))
        assert (m, v) == pytest.approx((0.0, 1.0), abs=1e-12)
        assert (mean, var) == pytest.approx((m, v), abs=1e-6)

    def test_collapse(self):
        with pytest.raises(CavityCollapse):
            gaussian_cavity((0.0, 1.0), (0.0, 0.5))

    def test_collapse_indices(self):
        with pytest.raises(CavityCollapse) as e:
            gaussian_cavity(([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), ([0.0] * 3, [2.0, 0.5, 0.25]))
        assert e.value.indices == (1, 2)

    def test_exponential(self):
        assert exponential_cavity(10.0, 2.0) == 8.0
        assert exponential_cavity(3.0, 0.0) == 3.0
        with pytest.raises(CavityCollapse):
            exponential_cavity(1.0, 1.0)

    def test_exponential_belief(self):
        assert ExponentialBelief(4.0).mean == 0.25
        with pytest.raises(ValueError):
            ExponentialBelief(0.0)


class TestMomentMatching:
    def test_identity(self):
        assert moment_match_gaussian(0.0, 1.0) == (0.0, 1.0)

    def test_projection_is_idempotent(self):
        once = moment_match_gaussian(0.3, 2.0)
        assert moment_match_gaussian(*once) == once

    def test_nonpositive_variance(self):
        with pytest.raises(ValueError):
            moment_match_gaussian(0.0, 0.0)

    def test_minimises_kl(self):
        # tilted = two-component mixture; KL(p || q) is smallest at p's moments
        def p(x):
            return 0.3 * _npdf(x, -1.0, 0.5) + 0.7 * _npdf(x, 2.0, 1.0)

        mean = integrate.quad(lambda x: x * p(x), -30, 30)[0]
        var = integrate.quad(lambda x: (x - mean) ** 2 * p(x), -30, 30)[0]
        m, v = moment_match_gaussian(mean, var)

        def kl(mq, vq):
            return integrate.quad(lambda x: p(x) * (math.log(p(x)) - math.log(_npdf(x, mq, vq))),
                                  -30, 30, limit=200)[0]

        best = kl(m, v)
        for dm, dv in [(0.1, 0), (-0.1, 0), (0, 0.2), (0, -0.2), (0.05, 0.1)]:
            assert best < kl(m + dm, v + dv)

    def test_conjugate_product(self):
        # N(x; 0, 1) N(1; x, 1) has moments (0.5, 0.5)
        f = lambda x: _npdf(x, 0, 1) * _npdf(1, x, 1)  # noqa: E731
        z = integrate.quad(f, -30, 30)[0]
        mean = integrate.quad(lambda x: x * f(x), -30, 30)[0] / z
        var = integrate.quad(lambda x: (x - mean) ** 2 * f(x), -30, 30)[0] / z
        assert moment_match_gaussian(mean, var) == pytest.approx((0.5, 0.5), abs=1e-10)


class TestSiteUpdate:
    def test_identity_gives_vacuous(self):
        m, v = gaussian_site_update((0.2, 0.4), (0.2, 0.4))
        assert v == math.inf and m == 0.0

    def test_example(self):
        m, v = gaussian_site_update((0.5, 0.5), (0.0, 1.0))
        assert (m, 1.0 / v) == pytest.approx((1.0, 1.0))

    @given(m=st.floats(-5, 5), v=st.floats(0.05, 5), mc=st.floats(-5, 5), vc=st.floats(0.05, 5))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, m, v, mc, vc):
        site = gaussian_site_update((m, v), (mc, vc))
        if math.isinf(site[1]):
            return
        # cavity times site must reproduce the belief
        prec = 1 / vc + 1 / site[1]
        shift = mc / vc + site[0] / site[1]
        assert 1 / prec == pytest.approx(v, rel=1e-9)
        assert shift / prec == pytest.approx(m, rel=1e-9, abs=1e-9)
        if v < vc:
            assert gaussian_cavity((m, v), site) == pytest.approx((mc, vc), rel=1e-9, abs=1e-9)


def _single_site_state():
    return EpState([0.0], [1.0], [0])


class TestSweep:
    def test_cavity_hook_is_fixed_point(self):
        st_ = EpState([0.0, 1.0], [1.0, 2.0], [0, 1, 1])
        res = ep_sweep(st_, None, None, lambda s, m, v, model: (m, v))
        assert res.max_change == 0.0
        np.testing.assert_array_equal(res.state.site_prec, 0.0)

    def test_conjugate_one_sweep(self):
        # prior N(0, 1), likelihood N(y=1 | x, 1): posterior N(0.5, 0.5)
        def hook(s, m, v, model):
            return m + v * (1.0 - m) / (v + 1.0), v / (v + 1.0)

        res = ep_sweep(_single_site_state(), None, None, hook)
        m, v = res.state.belief()
        assert (m[0], v[0]) == pytest.approx((0.5, 0.5), abs=1e-14)

    def test_converged_after_fixed_point(self):
        def hook(s, m, v, model):
            return m + v * (1.0 - m) / (v + 1.0), v / (v + 1.0)

        run = run_ep(_single_site_state(), None, hook, EpConfig(tol=1e-12))
        assert run.converged and run.sweeps == 2
        again = ep_sweep(run.state, None, None, hook)
        assert converged(run.state, again.state, 1e-12)

    def test_schedule_must_cover_sites(self):
        with pytest.raises(ValueError):
            ep_sweep(EpState([0.0], [1.0], [0, 0]), None, [0, 0], lambda *a: (0.0, 1.0))

    def test_collapse_and_failure_are_skipped(self):
        st_ = EpState([0.0], [1.0], [0, 0], site_prec=np.array([0.0, 0.5]),
                      site_shift=np.zeros(2))

        def hook(s, m, v, model):
            raise FloatingPointError("bad site")

        res = ep_sweep(st_, None, None, hook)
        assert res.collapses == 0 and res.failures == 2
        st2 = EpState([0.0], [1.0], [0, 0], site_prec=np.array([3.0, -3.5]),
                      site_shift=np.zeros(2))
        res2 = ep_sweep(st2, None, None, lambda s, m, v, model: (m, v))
        assert res2.collapses == 1

    def test_damping(self):
        def hook(s, m, v, model):
            return 0.5, 0.5

        res = ep_sweep(_single_site_state(), None, None, hook, damping=0.5)
        assert res.state.site_prec[0] == pytest.approx(0.5)
        assert res.state.site_shift[0] == pytest.approx(0.5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EpConfig(damping=0.0)
        with pytest.raises(ValueError):
            EpConfig(max_sweeps=0)


class TestConverged:
    def _pair(self, delta):
        a = EpState([0.0], [1.0], [0, 0])
        b = a.copy()
        b.site_prec[1] += delta
        return a, b

    def test_identical(self):
        assert converged(*self._pair(0.0), 1e-6)

    def test_differs_by_one(self):
        assert not converged(*self._pair(1.0), 1e-6)

    def test_strict_boundary(self):
        a, b = self._pair(0.25)
        assert not converged(a, b, 0.25)
