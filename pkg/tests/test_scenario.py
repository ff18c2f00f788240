import copy
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adtcert.builtins import get_jumps, get_mode
from adtcert.errors import ConfigError
from adtcert.forms import validate_record
from adtcert.scenario import (
    Scenario, bound_report, build_certificate, cascade_adt, certify_scenario, disturbance_trial,
    piecewise_constant, simulate_scenario, synth_report,
)
from adtcert.utils import load_yaml

SHIPPED = ['linear_two_mode', 'scalar_cascade', 'halving_jumps', 'explicit_scalar', 'two_mode_sampled']


class TestValidation:
    def test_shipped_configs_are_valid(self, configs_dir):
        for name in SHIPPED:
            assert validate_record(load_yaml(configs_dir / f"{name}.yaml")) == []

    def test_empty(self):
        assert validate_record({}) == ['scenario must be a non-empty mapping']
        with pytest.raises(ConfigError):
            Scenario({})

    def test_unknown_keys(self, scalar_record):
        record = copy.deepcopy(scalar_record)
        record['solver'] = 'rk45'
        record['sim']['stepsize'] = 0.1
        errors = validate_record(record)
        assert 'solver: unknown key' in errors
        assert 'sim.stepsize: unknown key' in errors

    def test_bad_kind(self, scalar_record):
        record = dict(scalar_record, kind='discrete')
        assert any(e.startswith('kind:') for e in validate_record(record))

    def test_bad_values(self, scalar_record):
        record = copy.deepcopy(scalar_record)
        record['adt']['N0'] = 0.5
        record['sim']['seed'] = 1.5
        record['sim']['x0'] = []
        errors = validate_record(record)
        assert any(e.startswith('adt.N0') for e in errors)
        assert any(e.startswith('sim.seed') for e in errors)
        assert any(e.startswith('sim.x0') for e in errors)

    def test_mode_table(self, linear_record):
        record = copy.deepcopy(linear_record)
        del record['system']['modes'][2]['linear']['G']
        assert any('missing matrix G' in e for e in validate_record(record))

    def test_lipschitz_bound(self, linear_record):
        record = copy.deepcopy(linear_record)
        record['system']['modes'][2]['linear']['lipschitz_c'] = 0.1
        assert validate_record(record) == []
        record['system']['modes'][2]['linear']['lipschitz_c'] = -1.0
        assert any('lipschitz_c' in e for e in validate_record(record))

    def test_missing_sections(self):
        errors = validate_record({'name': 'bare', 'kind': 'cascade'})
        assert 'system: required for cascade scenarios' in errors

    def test_unsorted_schedule(self, scalar_record):
        record = copy.deepcopy(scalar_record)
        record['adt']['schedule'] = [[2.0, 2], [1.0, 1]]
        assert any(e.startswith('adt.schedule') for e in validate_record(record))


class TestScenario:
    def test_defaults(self, scalar_record):
        scenario = Scenario(scalar_record)
        assert scenario.section('sim')['dt_base'] == 1e-3
        assert scenario.section('system')['jumps'] == 'identity'
        assert scenario.output_name == 'scalar_cascade'
        assert scenario.seed == 0

    def test_overrides(self, scalar_record, sampled_record):
        scenario = Scenario(scalar_record).with_overrides(seed=5, epsilon=0.3, tau_a=2.0)
        assert scenario.seed == 5
        assert scenario.section('adt')['epsilon'] == 0.3
        assert scenario.section('adt')['tau_a'] == 2.0
        sampled = Scenario(sampled_record).with_overrides(epsilon=0.1)
        assert sampled.section('sampled')['epsilon'] == 0.1

    def test_json_transport(self, linear_record):
        scenario = Scenario(json.loads(json.dumps(linear_record)))
        assert sorted(scenario.section('system')['modes']) == [1, 2]

    def test_builtin_lookup(self):
        assert get_mode('saturated_cascade').n_c == 1
        with pytest.raises(ConfigError):
            get_mode('pendulum')
        with pytest.raises(ConfigError):
            get_jumps('doubling')

    def test_mixed_dimensions(self, linear_record):
        record = copy.deepcopy(linear_record)
        record['system']['modes'][2] = {'builtin': 'scalar_cascade'}
        with pytest.raises(ConfigError):
            build_certificate(Scenario(record))

    def test_sampled_has_no_cascade_certificate(self, sampled_record):
        with pytest.raises(ConfigError):
            build_certificate(Scenario(sampled_record))


class TestBounds:
    def test_linear_margin_over_corollary(self, linear_record):
        bound = bound_report(linear_record)
        corollary = bound['corollary']
        assert not bound['divergent']
        assert_allclose(bound['tau_a_min'], math.log(1.1 * corollary['chibar']) / corollary['a'], rtol=1e-6)
        assert bound['tau_a_min'] > corollary['tau_a_min']
        assert bound['passes'] is None

    def test_default_dwell_time(self, linear_record):
        scenario = Scenario(linear_record)
        bound = bound_report(scenario)
        assert_allclose(cascade_adt(scenario, bound).tau_a, 1.1 * bound['tau_a_min'])

    def test_configured_dwell_time(self, linear_record):
        bound = bound_report(Scenario(linear_record).with_overrides(tau_a=1e-3))
        assert bound['passes'] is False

    def test_explicit_matches_builtin(self, scalar_record, configs_dir):
        explicit = bound_report(load_yaml(configs_dir / 'explicit_scalar.yaml'))
        builtin = bound_report(scalar_record)
        assert_allclose(explicit['zeta_star'], builtin['zeta_star'], rtol=1e-9)

    def test_single_mode(self, scalar_record):
        record = copy.deepcopy(scalar_record)
        del record['system']['modes'][2]
        bound = bound_report(record)
        assert bound['tau_a_min'] == 0.0
        assert cascade_adt(Scenario(record), bound).tau_a == 1.0

    def test_sampled(self, sampled_record):
        bound = bound_report(sampled_record)
        assert bound['kind'] == 'sampled'
        assert_allclose(bound['tau_a_min'], math.log(bound['chibar']) / 0.2)
        assert bound['passes']

    def test_synth_needs_linear_modes(self, scalar_record, linear_record):
        with pytest.raises(ConfigError):
            synth_report(scalar_record)
        record = synth_report(linear_record)
        assert sorted(record['certificates']) == [1, 2]
        assert 'corollary' in record


class TestRuns:
    def test_simulate_writes_outputs(self, scalar_record, tmp_path):
        record = copy.deepcopy(scalar_record)
        record['sim']['dt_base'] = 0.01
        arc, report = simulate_scenario(record, out_dir=tmp_path)
        assert (tmp_path / 'scalar_cascade_arc.csv').exists()
        assert (tmp_path / 'scalar_cascade_report.yaml').exists()
        assert report['adt']['ok']
        assert report['W_monotone']['status'] != 'fail'
        assert report['decay_ratio'] < 1.0
        assert report['meta']['seed'] == 0

    def test_csv_only(self, scalar_record, tmp_path):
        record = copy.deepcopy(scalar_record)
        record['sim']['dt_base'] = 0.01
        record['output'] = {'formats': ['csv']}
        _, report = simulate_scenario(record, out_dir=tmp_path)
        assert 'report_yaml' not in report
        assert not list(tmp_path.glob('*.yaml'))

    def test_scheduled_switching(self, scalar_record, tmp_path):
        record = copy.deepcopy(scalar_record)
        record['sim'].update({'dt_base': 0.01, 'horizon_T': 10.0})
        record['adt'].update({'tau_a': 2.0, 'schedule': [[1.0, 2], [4.0, 1], [8.0, 2]]})
        arc, _ = simulate_scenario(record, write=False)
        assert_allclose(arc.switch_times(), [1.0, 4.0, 8.0], atol=1e-8)

    def test_disturbance_trial(self, scalar_record):
        quiet = disturbance_trial(scalar_record, 0.0, seed=1, horizon=10.0)
        noisy = disturbance_trial(scalar_record, 1.0, seed=1, horizon=10.0)
        assert quiet['tail_sup'] < 1e-2
        assert noisy['tail_sup'] > quiet['tail_sup']

    def test_trials_need_a_cascade(self, sampled_record):
        with pytest.raises(ConfigError):
            disturbance_trial(sampled_record, 0.1, seed=0)

    def test_piecewise_constant(self, rng):
        d = piecewise_constant(rng, 0.5, 0.5, 2.0, 2)
        assert np.all(np.abs(d(0.1)) <= 0.5)
        assert_allclose(d(0.1), d(0.4))
        assert_allclose(d(5.0), d(2.0))


@pytest.mark.slow
@pytest.mark.parametrize('name', SHIPPED)
def test_shipped_configs_certify(configs_dir, name):
    result = certify_scenario(load_yaml(configs_dir / f"{name}.yaml"))
    assert result['ok'], '\n'.join(result['summaries'])
