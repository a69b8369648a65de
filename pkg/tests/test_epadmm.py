import math

import numpy as np
import pytest
from scipy import integrate

from splitep.epadmm import (AdmmConfig, AdmmState, HyperInit, admm_dual_update, admm_update_site,
                            closed_form_zx, epadmm_reconstruct)
from splitep.epcore import EpConfig
from splitep.imaging import relative_error
from splitep.model import HierarchicalModel, LinearOperatorSpec
from splitep.phantoms_io import PhantomSpec, make_phantom, simulate_observation


def _npdf(x, m, v):
    return math.exp(-0.5 * (x - m) ** 2 / v) / math.sqrt(2 * math.pi * v)


def quad_zx(y, g, m_c, v_c, lam):
    s = math.sqrt(v_c)
    f = lambda x: _npdf(y, g * x, lam) * _npdf(x, m_c, v_c)  # noqa: E731
    return integrate.quad(f, m_c - 40 * s, m_c + 40 * s, points=[m_c], limit=400,
                          epsabs=0, epsrel=1e-12)[0]


class TestZx:
    def test_example(self):
        z, m_y, v_y = closed_form_zx(1.0, 1.0, 0.0, 1.0, 1.0)
        assert (m_y, v_y) == (0.0, 2.0)
        assert z == pytest.approx(0.21970, abs=1e-5)
        assert z == pytest.approx(quad_zx(1.0, 1.0, 0.0, 1.0, 1.0), rel=1e-9)

    def test_decoupled(self):
        z, _, _ = closed_form_zx(0.7, 0.0, 5.0, 3.0, 0.4)
        assert z == pytest.approx(_npdf(0.7, 0.0, 0.4))

    def test_domain(self):
        with pytest.raises(ValueError):
            closed_form_zx(0.0, 1.0, 0.0, -2.0, 1.0)

    def test_mean_shift_derivative(self, rng):
        for _ in range(10):
            y, g, m_c = rng.normal(size=3)
            v_c, lam = rng.uniform(0.1, 3, size=2)
            h = 1e-5
            fd = (math.log(closed_form_zx(y, g, m_c + h, v_c, lam)[0])
                  - math.log(closed_form_zx(y, g, m_c - h, v_c, lam)[0])) / (2 * h)
            assert fd == pytest.approx(g * (y - g * m_c) / (v_c * g * g + lam), abs=1e-6)


class TestSiteUpdate:
    def test_conjugate_example(self):
        admm = AdmmState.zeros(1)
        m, v = admm_update_site(1.0, 1.0, 0.0, 1.0, 1.0, admm, 0)
        assert (float(m), float(v)) == pytest.approx((0.5, 0.5))

    def test_tilted_moments_oracle(self, rng):
        admm = AdmmState.zeros(1)
        for _ in range(10):
            y, g, m_c = rng.normal(size=3)
            v_c, lam = rng.uniform(0.2, 3, size=2)
            f = lambda x: _npdf(y, g * x, lam) * _npdf(x, m_c, v_c)  # noqa: E731
            s = math.sqrt(v_c)
            kw = dict(points=[m_c], limit=400, epsabs=0, epsrel=1e-13)
            z = integrate.quad(f, m_c - 40 * s, m_c + 40 * s, **kw)[0]
            mean = integrate.quad(lambda x: x * f(x), m_c - 40 * s, m_c + 40 * s, **kw)[0] / z
            var = integrate.quad(lambda x: (x - mean) ** 2 * f(x), m_c - 40 * s, m_c + 40 * s, **kw)[0] / z
            m, v = admm_update_site(y, g, m_c, v_c, lam, admm, 0)
            assert float(m) == pytest.approx(mean, abs=1e-10)
            assert float(v) == pytest.approx(var, abs=1e-10)

    def test_zero_innovation(self):
        m, _ = admm_update_site(0.6, 2.0, 0.3, 1.0, 0.5, AdmmState.zeros(1), 0)
        assert float(m) == pytest.approx(0.3)

    def test_penalty_only(self):
        admm = AdmmState(np.array([0.1]), np.zeros(1), rho=1.0, a=0.0)
        m, _ = admm_update_site(5.0, 0.0, 0.3, 1.0, 1.0, admm, 0)
        assert float(m) - 0.3 == pytest.approx(0.4)

    def test_variance_clamp(self):
        admm = AdmmState(np.zeros(1), np.array([-10.0]), b=1e-3)
        _, v = admm_update_site(0.0, 1.0, 0.0, 1.0, 1.0, admm, 0)
        assert float(v) == 1e-3 and admm.clamps == 1


class TestDual:
    def test_rho_zero(self):
        admm = admm_dual_update(AdmmState(np.array([0.2]), np.array([0.3])), 5.0, 5.0, 0)
        assert (admm.alpha[0], admm.beta[0]) == (0.2, 0.3)

    def test_example(self):
        admm = admm_dual_update(AdmmState(np.zeros(1), np.zeros(1), rho=0.5), 2.0, 1.0, 0)
        assert admm.alpha[0] == 1.0

    def test_linear_growth(self):
        admm = AdmmState(np.zeros(1), np.zeros(1), rho=0.5)
        for k in range(1, 6):
            admm_dual_update(admm, 2.0, 1.0, 0)
            assert admm.alpha[0] == pytest.approx(k)

    def test_config(self):
        with pytest.raises(ValueError):
            AdmmConfig(rho=-1.0)


class TestReconstruct:
    def test_noise_free_identity_limit(self, rng):
        # vague prior, tiny noise: the posterior mean is the data
        model = HierarchicalModel(LinearOperatorSpec(), LinearOperatorSpec())
        y = rng.normal(size=(8, 8))
        belief, rep = epadmm_reconstruct(y, model, estimate_hyper=False,
                                         init=HyperInit(rate_tau=1e-8, rate_lambda=1e10))
        np.testing.assert_allclose(belief.mean, y, atol=1e-6)
        assert rep.sweeps <= 3

    def test_improves_on_data(self):
        model = HierarchicalModel(LinearOperatorSpec.blur(0.5), LinearOperatorSpec("laplacian"))
        x = make_phantom(PhantomSpec(rows=32, cols=32))
        y = simulate_observation(x, model, 0.1, 11)
        belief, rep = epadmm_reconstruct(y, model, ep_cfg=EpConfig(max_sweeps=30))
        assert relative_error(belief.mean, x) < relative_error(y, x)
        assert rep.variance_violations == 0 and rep.rate_violations == 0
        assert np.all(belief.variance >= 1e-6)
