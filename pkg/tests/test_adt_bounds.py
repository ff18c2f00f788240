import itertools
import math
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adtcert import kfun
from adtcert.adt_bounds import (
    PsiFunction, build_phi, build_psi, build_W, compute_zeta_star, eval_W, power_law_psi, w_flow_rate,
    zeta_star_linear,
)
from adtcert.errors import ConfigError, ConstructionError, DivergentBound


def linear_psi(a):
    return build_psi([kfun.linear(a)], a)


class TestPsi:
    def test_linear_rates(self):
        psi = build_psi([kfun.linear(2.0), kfun.linear(3.0)], 2.0)
        assert isinstance(psi.psi, kfun.Linear)
        assert psi.psi.a == 2.0

    def test_below_every_rate(self):
        alphas = [kfun.linear(1.5), kfun.power_law(2.0, 2.0), kfun.power_law(1.0, 0.5)]
        psi = build_psi(alphas, 1.0)
        grid = np.logspace(-4, 4, 81)
        for alpha in alphas:
            assert np.all(psi(grid) <= alpha(grid) * (1.0 + 1e-12))
        assert np.all(psi(grid) <= grid * (1.0 + 1e-12))

    def test_super_linear_recipe(self):
        psi = power_law_psi('super_linear', 1.0, 2.0)
        assert_allclose(psi(np.array([0.5, 3.0])), [0.25, 3.0])

    def test_sub_linear_recipe(self):
        psi = power_law_psi('sub_linear', 1.0, 0.5)
        assert_allclose(psi(np.array([0.25, 4.0])), [0.25, 2.0])

    def test_unknown_recipe(self):
        with pytest.raises(ConfigError):
            power_law_psi('super_linear', 1.0, 0.5)

    def test_bounded_rate_rejected(self):
        with pytest.raises(ConstructionError):
            build_psi([kfun.Tabulated((0.0, 1.0), (0.0, 1.0))], 1.0)


class TestPhi:
    def test_square_for_linear_psi(self):
        phi = build_phi(linear_psi(0.7))
        grid = np.logspace(-6, 6, 100)
        assert_allclose(phi(grid), grid ** 2, rtol=1e-8)

    def test_one_at_one(self):
        assert_allclose(build_phi(linear_psi(2.0))(1.0), 1.0)

    def test_quadratic_psi(self):
        phi = build_phi(PsiFunction(psi=kfun.power_law(1.0, 2.0), c0=1.0))
        assert_allclose(phi(2.0), math.e, rtol=1e-10)

    def test_tabulated_matches_integral(self):
        phi = build_phi(power_law_psi('super_linear', 1.0, 2.0))
        assert phi.closed_form is None
        # log φ = 2 − 2/s below 1 and 2·ln s above
        assert_allclose(phi(np.array([0.5, 1.0, 2.0])), [math.exp(-2.0), 1.0, 4.0], rtol=1e-8)

    def test_zero_at_origin(self):
        phi = build_phi(linear_psi(1.0))
        assert phi(0.0) == 0.0
        assert phi.is_continuous_at_zero()


class TestZetaStar:
    def test_linear_example(self):
        zs = compute_zeta_star(kfun.linear(2.0), linear_psi(1.0), 0.1, closed_form=False)
        assert not zs.divergent
        assert_allclose(zs.value, math.log(2.2), atol=1e-6)

    def test_linear_grid_matches_closed_form(self):
        started = time.monotonic()
        for a, mu, eps in itertools.product((0.5, 1.0, 2.0), (1.5, 2.0, 10.0), (0.01, 0.1, 0.5)):
            zs = compute_zeta_star(kfun.linear(mu), linear_psi(a), eps, closed_form=False)
            assert_allclose(zs.value, math.log((1.0 + eps) * mu) / a, atol=1e-6)
        assert time.monotonic() - started < 5.0

    def test_closed_form_shortcut(self):
        zs = compute_zeta_star(kfun.linear(2.0), linear_psi(1.0), 0.1)
        assert zs.closed_form
        assert_allclose(zs.value, zeta_star_linear(2.0, 1.0, 0.1))

    def test_identity_gain_without_margin(self):
        zs = compute_zeta_star(kfun.linear(1.0), linear_psi(1.0), 0.0)
        assert zs.value == 0.0

    def test_nonlinear_gain(self):
        chi = kfun.pointwise_min(kfun.linear(3.0), kfun.fsum(kfun.linear(1.0), kfun.power_law(1.0, 0.5)))
        zs = compute_zeta_star(chi, linear_psi(1.0), 0.1)
        assert not zs.divergent
        assert_allclose(zs.value, math.log(3.3), rtol=1e-6)

    def test_sub_linear_decay_diverges(self):
        zs = compute_zeta_star(kfun.linear(2.0), power_law_psi('sub_linear', 1.0, 0.5), 0.1)
        assert zs.divergent
        with pytest.raises(DivergentBound):
            zs.require_finite()

    @pytest.mark.parametrize('closed_form', [True, False])
    def test_inflated_gain_never_lowers_the_bound(self, closed_form):
        gains = [kfun.linear(mu) for mu in (1.5, 2.0, 10.0)]
        gains.append(kfun.pointwise_min(kfun.linear(3.0), kfun.fsum(kfun.linear(1.0), kfun.power_law(1.0, 0.5))))
        for chi, a, eps in itertools.product(gains, (0.5, 1.0, 2.0), (0.0, 0.1)):
            base = compute_zeta_star(chi, linear_psi(a), eps, closed_form=closed_form)
            inflated = compute_zeta_star(kfun.scale(1.1, chi), linear_psi(a), eps, closed_form=closed_form)
            assert not base.divergent and not inflated.divergent
            assert inflated.value >= base.value - 1e-9 * max(1.0, base.value)

    def test_negative_margin(self):
        with pytest.raises(ConfigError):
            compute_zeta_star(kfun.linear(2.0), linear_psi(1.0), -0.1)


class TestW:
    @pytest.fixture
    def wf(self, scalar_cascade):
        psi = build_psi(scalar_cascade.alphas(), 0.25)
        zs = compute_zeta_star(scalar_cascade.chi, psi, 0.0)
        return build_W(scalar_cascade, psi, zs, tau_a=1.0)

    def test_origin(self, wf):
        assert eval_W(wf, {'x': np.zeros(1), 'e': np.zeros(1), 'p': 1, 'tau': 0.7}) == 0.0

    def test_timer_zero(self, wf, scalar_cascade):
        x, e = np.array([0.3]), np.array([-0.4])
        v = scalar_cascade.V(1, x, e)
        assert_allclose(eval_W(wf, {'x': x, 'e': e, 'p': 1, 'tau': 0.0}), wf.phi(v))

    def test_midpoint_and_rates(self, wf):
        assert_allclose(wf.zeta, 0.5)
        assert wf.jump_contraction < 1.0
        assert_allclose(w_flow_rate(wf), 2.0 * 0.25 * (1.0 - 0.5))

    def test_zeta_outside_interval(self, scalar_cascade):
        psi = build_psi(scalar_cascade.alphas(), 0.25)
        with pytest.raises(ConfigError):
            build_W(scalar_cascade, psi, 0.0, tau_a=1.0, zeta=1.5)
