import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg

from adtcert import kfun
from adtcert.errors import ConfigError, ConstructionError, NotHurwitz
from adtcert.linear_synth import (
    LinearCascadeMode, cascade_from_quadratic, chibar_identity_jumps, corollary_bound, quad_cert_rates,
    solve_lyapunov, spectral_abscissa, synth_sampled_gains,
)
from adtcert.sampled_loop import two_mode_cascade_modes


def scalar_mode(mode=1):
    return LinearCascadeMode(A=[[-1.0]], B=[[1.0]], F=[[-2.0]], G=[[1.0]], mode=mode)


def random_hurwitz(rng, n):
    M = rng.standard_normal((n, n))
    return M - (spectral_abscissa(M) + rng.uniform(0.1, 2.0)) * np.eye(n)


class TestLyapunov:
    def test_negative_identity(self):
        assert_allclose(solve_lyapunov(-np.eye(2), 2.0 * np.eye(2)), np.eye(2), atol=1e-12)

    def test_companion_matrix(self):
        A = np.array([[0.0, 1.0], [-2.0, -3.0]])
        P = solve_lyapunov(A, np.eye(2))
        assert_allclose(P, [[1.25, 0.25], [0.25, 0.25]], atol=1e-10)
        assert_allclose(A.T @ P + P @ A, -np.eye(2), atol=1e-10)

    def test_unstable(self):
        with pytest.raises(NotHurwitz):
            solve_lyapunov([[0.1, 0.0], [0.0, -1.0]], np.eye(2))

    def test_residual_random(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 9))
            A = random_hurwitz(rng, n)
            Q = np.eye(n)
            P = solve_lyapunov(A, Q)
            assert linalg.norm(A.T @ P + P @ A + Q, 'fro') <= 1e-10 * linalg.norm(Q, 'fro')

    def test_residual_two_mode_loop(self):
        for mode in two_mode_cascade_modes().values():
            for M in (mode.A, mode.F):
                Q = np.eye(M.shape[0])
                P = solve_lyapunov(M, Q)
                assert linalg.norm(M.T @ P + P @ M + Q, 'fro') <= 1e-10 * linalg.norm(Q, 'fro')


class TestQuadraticCertificate:
    def test_scalar_rates(self):
        cert = quad_cert_rates(scalar_mode(), Q_c=[[2.0]], Q_o=[[4.0]])
        assert_allclose(cert.P_c, [[1.0]])
        assert_allclose(cert.P_o, [[1.0]])
        assert_allclose([cert.a_c, cert.a_o, cert.gbar_o, cert.gbar_c, cert.nu_bar], [1.0, 2.0, 0.5, 1.0, 0.5])

    def test_no_interconnection(self):
        mode = LinearCascadeMode(A=[[-1.0]], B=[[0.0]], F=[[-2.0]], G=[[1.0]])
        cert = quad_cert_rates(mode)
        assert cert.gbar_c == 0.0
        assert cert.nu_bar == 0.0

    def test_unmodelled_drift(self):
        mode = LinearCascadeMode(A=[[-1.0]], B=[[1.0]], F=[[-2.0]], G=[[1.0]], lipschitz_c=0.25)
        cert = quad_cert_rates(mode, Q_c=[[2.0]], Q_o=[[4.0]])
        assert_allclose(cert.q_c, 1.5)
        assert_allclose([cert.a_c, cert.gbar_c], [0.75, 4.0 / 3.0])
        assert LinearCascadeMode.from_record(mode.to_record(), mode=1).lipschitz_c == 0.25
        with pytest.raises(ConstructionError):
            quad_cert_rates(LinearCascadeMode(A=[[-1.0]], B=[[1.0]], F=[[-2.0]], G=[[1.0]], lipschitz_c=2.0),
                            Q_c=[[2.0]], Q_o=[[4.0]])

    def test_two_mode_loop_rates(self):
        for mode in two_mode_cascade_modes().values():
            cert = quad_cert_rates(mode)
            assert all(v > 0.0 and math.isfinite(v) for v in (cert.a_c, cert.a_o, cert.gbar_c, cert.gbar_o))

    def test_bad_weight(self):
        with pytest.raises(ConfigError):
            quad_cert_rates(scalar_mode(), Q_c=[[-1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            LinearCascadeMode(A=[[-1.0, 0.0], [0.0, -1.0]], B=[[1.0]], F=[[-2.0]], G=[[1.0]])


class TestCorollaryBound:
    def test_single_scalar_mode(self):
        bound = corollary_bound([quad_cert_rates(scalar_mode())])
        assert_allclose(bound.chibar, 1.0)
        assert bound.tau_a_min == 0.0

    def test_identical_modes(self):
        single = chibar_identity_jumps([quad_cert_rates(scalar_mode())])
        double = chibar_identity_jumps([quad_cert_rates(scalar_mode(1)), quad_cert_rates(scalar_mode(2))])
        assert_allclose(single, double)

    def test_doubled_weights(self):
        certs = [quad_cert_rates(scalar_mode(1), Q_c=[[2.0]], Q_o=[[4.0]]),
                 quad_cert_rates(scalar_mode(2), Q_c=[[4.0]], Q_o=[[8.0]])]
        bound = corollary_bound(certs)
        assert_allclose(bound.chibar, 2.0)
        assert_allclose(bound.a, 1.0)
        assert_allclose(bound.tau_a_min, math.log(2.0))

    def test_scale_invariance(self, linear_modes):
        base = corollary_bound([quad_cert_rates(m) for m in linear_modes.values()])
        scaled = corollary_bound([quad_cert_rates(m, Q_c=3.0 * np.eye(m.n_c), Q_o=3.0 * np.eye(m.n_o))
                                  for m in linear_modes.values()])
        assert_allclose([scaled.a, scaled.chibar, scaled.tau_a_min], [base.a, base.chibar, base.tau_a_min])

    def test_cascade_rates(self, linear_certs):
        cascade = cascade_from_quadratic(linear_certs)
        bound = corollary_bound(linear_certs)
        assert isinstance(cascade.chi, kfun.Linear)
        assert_allclose(cascade.chi.a, bound.chibar)
        assert isinstance(cascade.rho, kfun.Zero)
        for p, cert in linear_certs.items():
            assert_allclose(cascade.mode(p).alpha(1.0), cert.a_p)


class TestSampledGains:
    def test_output_filter_gain(self):
        cert = quad_cert_rates(scalar_mode(), Q_c=[[2.0]], Q_o=[[4.0]])
        pack = synth_sampled_gains([cert], {1: 1.0}, 0.25, admissible=False)
        assert_allclose(pack.modes[1].rho_o, 0.5)

    def test_gain_vanishes_at_half(self):
        cert = quad_cert_rates(scalar_mode(), Q_c=[[2.0]], Q_o=[[4.0]])
        pack = synth_sampled_gains([cert], {1: 1.0}, 0.4999999, admissible=False)
        assert pack.modes[1].rho_o < 1e-6

    def test_two_mode_pack(self):
        certs = {p: quad_cert_rates(m) for p, m in two_mode_cascade_modes().items()}
        pack = synth_sampled_gains(certs, {1: 1.0, 2: 1.0}, 0.2)
        assert pack.chibar >= 1.0
        assert_allclose(pack.tau_a_min, math.log(pack.chibar) / 0.2)
        for g in pack.modes.values():
            assert all(math.isfinite(v) and v > 0.0 for v in (g.rho_o, g.rho_c, g.mu_o, g.mu_c, g.nu_bar))

    @pytest.mark.parametrize('epsilon', [0.0, 0.5, 0.7])
    def test_epsilon_range(self, epsilon):
        cert = quad_cert_rates(scalar_mode())
        with pytest.raises(ConfigError):
            synth_sampled_gains([cert], {1: 1.0}, epsilon)
