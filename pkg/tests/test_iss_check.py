import copy
import dataclasses

import numpy as np
import pytest

from adtcert import kfun
from adtcert.adt_bounds import build_psi, build_W, compute_zeta_star
from adtcert.builtins import get_jumps
from adtcert.cascade_cert import QuadraticForm, compose_cascade
from adtcert.hybrid_sim import HybridSystemDef, SimConfig, simulate
from adtcert.iss_check import (
    check_asymptotic_ratio, check_flow_decay, check_gain_classes, check_jump_bounds, check_jump_growth,
    check_sandwich, compare, grad_check, interevent_stats, sample_box, violation_mask,
)
from adtcert.linear_synth import cascade_from_quadratic
from adtcert.scenario import Scenario, build_certificate, build_scenario_system, cascade_w_check


def with_alpha(cascade, p, alpha):
    modes = dict(cascade.modes)
    modes[p] = dataclasses.replace(modes[p], alpha=alpha)
    return dataclasses.replace(cascade, modes=modes)


class DoubledGradient:
    def __init__(self, V):
        self.V = V
        self.dim = V.dim

    def __call__(self, xe):
        return self.V(xe)

    def stacked_gradient(self, xe):
        return 2.0 * self.V.stacked_gradient(xe)


class TestComparison:
    def test_relative_slack(self):
        assert not violation_mask(1.0 + 1e-12, 1.0, 1e-9)
        assert violation_mask(1.1, 1.0, 1e-9)
        assert not violation_mask(1e6 * (1.0 + 1e-10), 1e6, 1e-9)

    def test_nan_counts_as_violation(self):
        report = compare('nan', [np.nan, 0.0], [1.0, 1.0], 1e-9)
        assert report.n_violations == 1
        assert report.worst_margin == -np.inf

    def test_sampling_reaches_the_origin(self, rng):
        points = sample_box(rng, 1000, 2, 10.0)
        assert np.all(np.abs(points) <= 10.0)
        assert np.min(np.linalg.norm(points, axis=1)) < 1e-3


class TestFlowDecay:
    def test_scalar_cascade(self, scalar_cascade, scalar_mode):
        report = check_flow_decay(scalar_cascade, {1: scalar_mode}, n_samples=10000)
        assert report.ok
        assert report.n_samples == 10000

    def test_linear_two_mode(self, linear_modes, linear_certs):
        report = check_flow_decay(cascade_from_quadratic(linear_certs), linear_modes, n_samples=10000)
        assert report.ok
        assert report.n_samples == 20000

    def test_overstated_decay_rate(self, scalar_cascade, scalar_mode):
        corrupted = with_alpha(scalar_cascade, 1, kfun.linear(2.5))
        report = check_flow_decay(corrupted, {1: scalar_mode}, n_samples=2000)
        assert not report.ok
        assert report.status == 'fail'
        assert report.witness['mode'] == 1


class TestJumpGrowth:
    def test_scalar_modes(self, scalar_record):
        cascade, _ = build_certificate(Scenario(scalar_record))
        assert check_jump_growth(cascade, n_samples=10000).ok

    def test_linear_two_mode(self, linear_certs):
        report = check_jump_growth(cascade_from_quadratic(linear_certs), n_samples=10000)
        assert report.ok
        assert report.n_samples == 4 * 10000

    def test_halving_resets(self, scalar_mode):
        jumps = get_jumps('halving')
        cascade = compose_cascade([scalar_mode.certificate(1)], jumps=jumps)
        assert check_jump_growth(cascade, jumps, n_samples=2000).ok
        assert check_jump_bounds(jumps, 1, 1, n_samples=2000).ok

    def test_understated_gain(self, linear_certs):
        cascade = cascade_from_quadratic(linear_certs)
        shrunk = dataclasses.replace(cascade, chi=kfun.linear(0.5))
        assert not check_jump_growth(shrunk, n_samples=2000).ok


class TestSandwichAndClasses:
    def test_scalar_cascade(self, scalar_cascade):
        assert check_sandwich(scalar_cascade, n_samples=2000).ok
        assert check_gain_classes(scalar_cascade).ok

    def test_quadratic_certificate(self, linear_certs):
        assert check_sandwich(linear_certs[1], n_samples=2000).ok

    def test_bounded_rate_flagged(self, scalar_cascade):
        corrupted = with_alpha(scalar_cascade, 1, kfun.Tabulated((0.0, 1.0), (0.0, 1.0)))
        report = check_gain_classes(corrupted)
        assert report.n_violations == 1
        assert 'mode 1 alpha' in report.details['not_k_infinity'][0]


class TestGradients:
    def test_composed_function(self, scalar_cascade):
        assert grad_check(scalar_cascade.mode(1).V).ok

    def test_quadratic(self):
        assert grad_check(QuadraticForm([[2.0, 0.5], [0.5, 1.0]])).ok

    def test_wrong_gradient(self, scalar_cascade):
        report = grad_check(DoubledGradient(scalar_cascade.mode(1).V), n_samples=50)
        assert report.n_violations == 50


class TestWMonotone:
    def test_linear_two_mode_arc(self, linear_record):
        record = copy.deepcopy(linear_record)
        record['sim']['dt_base'] = 0.005
        scenario = Scenario(record)
        cascade, _ = build_certificate(scenario)
        system, xi0, horizon, adt = build_scenario_system(scenario)
        arc = simulate(system, xi0, horizon, SimConfig(dt_base=0.005))
        assert len(arc.switch_times()) >= 20
        report, wf = cascade_w_check(cascade, arc, adt.tau_a, 1e-6)
        assert wf is not None
        assert report.status == 'pass'
        assert report.details['n_jumps'] == len(arc.jumps)

    def test_not_applicable_below_the_bound(self, linear_record):
        scenario = Scenario(linear_record)
        cascade, _ = build_certificate(scenario)
        system, xi0, _, adt = build_scenario_system(scenario)
        arc = simulate(system, xi0, (1.0, 100), SimConfig(dt_base=0.01))
        report, wf = cascade_w_check(cascade, arc, 1e-3, 1e-6)
        assert wf is None
        assert report.status == 'n/a'

    def test_asymptotic_ratio(self, scalar_cascade):
        psi = build_psi(scalar_cascade.alphas(), 0.25)
        wf = build_W(scalar_cascade, psi, compute_zeta_star(scalar_cascade.chi, psi, 0.0), tau_a=1.0)
        assert check_asymptotic_ratio(wf).ok


class TestInterevent:
    def test_sentinel_without_events(self):
        system = HybridSystemDef(flow=lambda t, x: -x, guards=[], labels=['x'])
        arc = simulate(system, [1.0], (2.0, 10), SimConfig(dt_base=0.1))
        stats = interevent_stats(arc)
        assert stats['min_gap_y'] == pytest.approx(2.0)
        assert stats['min_gap_u'] == pytest.approx(2.0)
        assert stats['zero_gap_kinds'] == []
        assert stats['switches'] == 0
