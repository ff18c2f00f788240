import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adtcert import kfun
from adtcert.errors import ConfigError
from adtcert.linear_synth import quad_cert_rates
from adtcert.sampled_loop import (
    ClosedLoopLayout, ClosedLoopState, TriggerDef, build_closed_loop, check_design_criteria, check_output_bound,
    check_two_mode_flow_decay, run_loop, run_two_mode_example, sampled_dwell_bound, two_mode_cascade_modes,
    two_mode_flows, two_mode_setup,
)
from adtcert.scenario import DECAY_TARGET


@pytest.fixture(scope='module')
def setup():
    return two_mode_setup(epsilon=0.2)


class TestLayout:
    def test_pack_unpack(self):
        lay = ClosedLoopLayout(2)
        state = ClosedLoopState(x=np.array([1.0, 2.0]), z=np.array([3.0, 4.0]), x_d=np.array([5.0, 6.0]),
                                z_d=np.array([7.0, 8.0]), eta_o=0.5, eta_c=0.25, p=2, tau=0.3, n_sw=4)
        back = lay.unpack(lay.pack(state))
        assert_allclose(back.e, [2.0, 2.0])
        assert (back.p, back.n_sw, back.eta_c) == (2, 4, 0.25)
        assert lay.dim == len(lay.labels) == 13

    def test_initial_state_holds_samples(self):
        lay = ClosedLoopLayout(2)
        s = lay.unpack(lay.initial_state([1.0, -1.0], [0.0, 0.0], 1, 0.0))
        assert_allclose(s.x_d, s.x)
        assert_allclose(s.z_d, s.z)

    def test_wrong_dimension(self):
        with pytest.raises(ConfigError):
            ClosedLoopLayout(2).initial_state([1.0], [0.0, 0.0], 1, 0.0)


class TestDesign:
    def test_gain_pack_passes(self, setup):
        report = check_design_criteria(setup.filters, setup.triggers, setup.cascade, setup.lam, plant=setup.plant)
        assert report.ok, report.summary()

    def test_loose_triggers_fail(self, setup):
        loose = TriggerDef(mu_o={p: kfun.linear(100.0) for p in (1, 2)},
                           mu_c={p: kfun.linear(100.0) for p in (1, 2)})
        report = check_design_criteria(setup.filters, loose, setup.cascade, setup.lam)
        assert not report.ok
        assert {r.name for r in report.failures()} >= {'D2_o', 'D2_c'}

    def test_lambda_range(self, setup):
        with pytest.raises(ConfigError):
            check_design_criteria(setup.filters, setup.triggers, setup.cascade, 1.0)

    def test_output_bound(self, setup):
        assert check_output_bound(setup.plant).ok

    def test_dwell_bound(self, setup):
        bound = sampled_dwell_bound(setup.filters, setup.cascade, setup.lam)
        assert not bound.zeta_star.divergent
        assert_allclose(bound.tau_a_min, bound.zeta_star.value / setup.lam)

    def test_default_dwell_time(self, setup):
        assert_allclose(setup.adt.tau_a, 1.05 * math.log(setup.pack.chibar) / 0.2)

    def test_mode_two_rates_absorb_the_drift(self):
        mode = two_mode_cascade_modes()[2]
        assert mode.lipschitz_c == 0.25
        drift = quad_cert_rates(mode)
        exact = quad_cert_rates(dataclasses.replace(mode, lipschitz_c=0.0))
        assert_allclose(drift.P_c, exact.P_c)
        assert drift.q_c < 1.0
        assert drift.a_c < exact.a_c
        assert drift.gbar_c > exact.gbar_c

    def test_certificates_hold_on_the_nonlinear_flows(self, setup):
        report = check_two_mode_flow_decay(setup, n_samples=4000)
        assert report.ok, report.summary()
        assert report.n_samples == 8000

    def test_nonlinear_flow_matches_the_model_near_the_origin(self):
        flows, modes = two_mode_flows(), two_mode_cascade_modes()
        x, e, d = np.array([0.01, -0.02]), np.array([0.005, 0.01]), np.array([0.3])
        dx, de = flows[2](x, e, d)
        assert_allclose(dx, modes[2].f_c(x, e) + [0.25 * abs(x[0]), 0.0], atol=1e-15)
        assert_allclose(de, modes[2].f_o(e, d))
        dx1, _ = flows[1](x, e, d)
        assert_allclose(dx1, modes[1].f_c(x, e))

    def test_mode_mismatch(self, setup):
        single = TriggerDef(mu_o={1: kfun.linear(1.0)}, mu_c={1: kfun.linear(1.0)})
        with pytest.raises(ConfigError):
            build_closed_loop(setup.plant, setup.controller, setup.filters, single, setup.adt)


@pytest.mark.slow
class TestTwoModeRun:
    def test_example(self):
        arc, report, setup = run_two_mode_example(epsilon=0.2, seed=0)
        assert report['decay_ratio'] <= DECAY_TARGET
        assert report['flow_set']['status'] == 'pass'
        gaps = report['interevent']
        assert gaps['min_gap_y'] > 0.0 and gaps['min_gap_u'] > 0.0
        assert gaps['zero_gap_kinds'] == []
        assert report['design_criteria']['ok']
        assert report['adt']['ok']
        assert report['flow_decay']['status'] == 'pass'
        assert arc.is_valid_domain()
        assert len(arc.switch_times()) >= 19

    def test_origin_stays_put(self, setup):
        arc, report = run_loop(setup, [0.0, 0.0], [0.0, 0.0], horizon=5.0, w_check=False)
        lay = setup.layout
        _, _, states = arc.stacked()
        assert np.all(states[:, lay.x] == 0.0)
        assert np.all(states[:, lay.z] == 0.0)
        assert not arc.jumps_of('sample_y') and not arc.jumps_of('sample_u')

    def test_same_seed_same_run(self, setup):
        runs = [run_loop(setup, [1.0, -1.0], [0.0, 0.0], horizon=5.0, seed=3, w_check=False)[0] for _ in range(2)]
        for a, b in zip(runs[0].stacked(), runs[1].stacked()):
            np.testing.assert_array_equal(a, b)
