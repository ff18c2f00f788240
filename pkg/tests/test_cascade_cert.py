import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adtcert import kfun
from adtcert.builtins import get_jumps, get_mode
from adtcert.cascade_cert import QuadraticForm, build_nu_bar, compose_cascade
from adtcert.errors import AssumptionViolation, ConfigError, ConstructionError


class TestNuBar:
    def test_scalar_cascade_ratio(self, scalar_mode):
        nu_bar = build_nu_bar(scalar_mode.certificate(1))
        assert isinstance(nu_bar, kfun.Constant)
        assert_allclose(nu_bar.c, 0.5)

    def test_identical_gains(self, scalar_mode):
        cert = dataclasses.replace(scalar_mode.certificate(1), gamma_c=kfun.linear(2.0))
        assert_allclose(build_nu_bar(cert)(1.0), 1.0)

    def test_vanishing_ratio_passes(self, scalar_mode):
        cert = dataclasses.replace(scalar_mode.certificate(1), gamma_c=kfun.power_law(1.0, 2.0),
                                   alpha_o=kfun.linear(1.0))
        nu_bar = build_nu_bar(cert)
        assert_allclose(nu_bar(np.array([1e-1, 1e-6])), [1e-1, 1e-6])

    def test_blowup_at_origin(self, scalar_mode):
        cert = dataclasses.replace(scalar_mode.certificate(1), gamma_c=kfun.power_law(1.0, 0.5))
        with pytest.raises(AssumptionViolation):
            build_nu_bar(cert)


class TestComposedLyapunov:
    def test_scalar_cascade_function(self, scalar_cascade):
        mode = scalar_cascade.mode(1)
        assert_allclose(mode.nu(3.0), 2.0)
        assert_allclose(mode.ell(3.0), 6.0)
        x, e = np.array([0.7]), np.array([-1.3])
        assert_allclose(scalar_cascade.V(1, x, e), 2.0 * 1.3 ** 2 + 0.7 ** 2)

    def test_origin(self, scalar_cascade):
        assert scalar_cascade.V(1, np.zeros(1), np.zeros(1)) == 0.0

    def test_gradient(self, scalar_cascade):
        gx, ge = scalar_cascade.mode(1).V.gradient(np.array([1.0]), np.array([1.0]))
        assert_allclose(gx, [2.0])
        assert_allclose(ge, [4.0])

    def test_rates(self, scalar_cascade):
        mode = scalar_cascade.mode(1)
        assert_allclose(mode.alpha(1.0), 0.25)
        assert_allclose(mode.gamma(2.0), 4.0)
        assert mode.alpha(0.0) == 0.0
        assert mode.gamma(0.0) == 0.0

    def test_sandwich(self, scalar_cascade):
        mode = scalar_cascade.mode(1)
        assert_allclose(mode.alpha_lower(2.0), 2.0)
        assert_allclose(mode.alpha_upper(2.0), 12.0)

    def test_no_interconnection_needs_floor(self, scalar_mode):
        cert = dataclasses.replace(scalar_mode.certificate(1), gamma_c=kfun.Zero())
        with pytest.raises(ConstructionError):
            compose_cascade([cert])
        cascade = compose_cascade([cert], nu_floor=1.0)
        assert_allclose(cascade.V(1, np.array([1.0]), np.array([1.0])), 2.0)


class TestJumpGains:
    def test_single_mode_identity(self, scalar_cascade):
        assert_allclose(scalar_cascade.chi(np.array([0.5, 3.0])), [0.5, 3.0])
        assert isinstance(scalar_cascade.rho, kfun.Zero)

    def test_two_modes_bound_the_mode_change(self, rng):
        certs = [get_mode('scalar_cascade').certificate(1), get_mode('scalar_cascade_strong').certificate(2)]
        cascade = compose_cascade(certs)
        xs, es = rng.uniform(-5.0, 5.0, size=(2, 200, 1))
        for p in (1, 2):
            for q in (1, 2):
                v_p = np.array([cascade.V(p, x, e) for x, e in zip(xs, es)])
                v_q = np.array([cascade.V(q, x, e) for x, e in zip(xs, es)])
                assert np.all(v_q <= cascade.chi(v_p) * (1.0 + 1e-12))
        assert cascade.chi(1.0) > 1.0

    def test_identical_modes_symmetric(self, scalar_mode):
        cascade = compose_cascade([scalar_mode.certificate(1), scalar_mode.certificate(2)])
        assert_allclose(cascade.chi(np.array([0.1, 1.0, 10.0])), [0.1, 1.0, 10.0])

    def test_halving_resets(self, scalar_mode):
        cascade = compose_cascade([scalar_mode.certificate(1)], jumps=get_jumps('halving'))
        assert isinstance(cascade.rho, kfun.Zero)
        assert cascade.chi(1.0) > 0.0

    def test_duplicate_mode(self, scalar_mode):
        with pytest.raises(ConfigError):
            compose_cascade([scalar_mode.certificate(1), scalar_mode.certificate(1)])

    def test_unknown_mode(self, scalar_cascade):
        with pytest.raises(ConfigError):
            scalar_cascade.mode(7)


class TestQuadraticForm:
    def test_evaluation_and_gradient(self):
        V = QuadraticForm([[2.0, 0.5], [0.5, 1.0]])
        v = np.array([1.0, -2.0])
        assert_allclose(V(v), 2.0 - 2.0 + 4.0)
        assert_allclose(V.gradient(v), 2.0 * V.P @ v)

    def test_asymmetric_rejected(self):
        with pytest.raises(ConfigError):
            QuadraticForm([[1.0, 1.0], [0.0, 1.0]])
