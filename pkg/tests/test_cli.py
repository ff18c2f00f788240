import copy

import pytest
import yaml

from adtcert import get_config
from adtcert.cli import build_parser, main
from adtcert.errors import ConfigError
from adtcert.iss_check import estimate_iss_gain
from adtcert.scenario import DECAY_TARGET
from adtcert.tasks import run_disturbance_trial_task, simulate_scenario_task


@pytest.fixture
def quick_scalar(scalar_record, tmp_path):
    """Scalar scenario with a coarse step and a short trial horizon"""
    record = copy.deepcopy(scalar_record)
    record['sim']['dt_base'] = 0.01
    record['iss']['horizon_T'] = 5.0
    path = tmp_path / 'quick_scalar.yaml'
    path.write_text(yaml.safe_dump(record))
    return record, path


class TestParser:
    def test_scenario_commands_need_a_config(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['bound'])

    def test_example_defaults(self):
        args = build_parser().parse_args(['example'])
        assert (args.epsilon, args.seed, args.horizon, args.tau_a) == (0.2, 0, None, None)

    def test_overrides(self):
        args = build_parser().parse_args(['simulate', '--config', 'x.yaml', '--seed', '3', '--tau-a', '2'])
        assert args.seed == 3 and args.tau_a == 2.0


class TestCommands:
    def test_bound(self, configs_dir, tmp_path, capsys):
        status = main(['bound', '--config', str(configs_dir / 'linear_two_mode.yaml'), '--out', str(tmp_path)])
        assert status == 0
        assert 'tau_a_min' in capsys.readouterr().out
        report = yaml.safe_load((tmp_path / 'linear_two_mode_bound_report.yaml').read_text())
        assert report['bound']['divergent'] is False

    def test_bound_below_minimum(self, configs_dir, tmp_path):
        argv = ['bound', '--config', str(configs_dir / 'linear_two_mode.yaml'), '--tau-a', '0.001',
                '--out', str(tmp_path)]
        assert main(argv) == 1

    def test_synth_linear(self, configs_dir, tmp_path):
        status = main(['synth-linear', '--config', str(configs_dir / 'linear_two_mode.yaml'), '--out', str(tmp_path)])
        assert status == 0
        record = yaml.safe_load((tmp_path / 'linear_two_mode_certificate_report.yaml').read_text())
        assert record['corollary']['chibar'] >= 1.0

    def test_synth_without_linear_modes(self, configs_dir, tmp_path, capsys):
        status = main(['synth-linear', '--config', str(configs_dir / 'scalar_cascade.yaml'), '--out', str(tmp_path)])
        assert status == 1
        assert '✗ Error' in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert main(['bound', '--config', str(tmp_path / 'absent.yaml')]) == 1

    def test_simulate(self, quick_scalar, tmp_path):
        _, path = quick_scalar
        assert main(['simulate', '--config', str(path), '--seed', '2', '--out', str(tmp_path)]) == 0
        report = yaml.safe_load((tmp_path / 'scalar_cascade_report.yaml').read_text())
        assert report['meta']['seed'] == 2
        assert (tmp_path / 'scalar_cascade_arc.csv').exists()

    def test_iss_gain(self, quick_scalar, tmp_path):
        _, path = quick_scalar
        argv = ['iss-gain', '--config', str(path), '--levels', '0', '1', '--runs', '1', '--out', str(tmp_path)]
        assert main(argv) == 0
        table = yaml.safe_load((tmp_path / 'scalar_cascade_iss_gain_report.yaml').read_text())
        assert [row['level'] for row in table['rows']] == [0.0, 1.0]


    def test_example_short_of_the_decay_target(self, tmp_path):
        assert main(['example', '--horizon', '1.0', '--out', str(tmp_path)]) == 1
        report = yaml.safe_load((tmp_path / 'two_mode_example_report.yaml').read_text())
        assert report['decay_ratio'] > DECAY_TARGET

    @pytest.mark.slow
    def test_example(self, tmp_path):
        assert main(['example', '--out', str(tmp_path)]) == 0
        report = yaml.safe_load((tmp_path / 'two_mode_example_report.yaml').read_text())
        assert report['flow_decay']['status'] == 'pass'


class TestTasks:
    def test_eager_in_tests(self):
        assert get_config().CELERY_TASK_ALWAYS_EAGER

    def test_trial_task(self, quick_scalar):
        record, _ = quick_scalar
        result = run_disturbance_trial_task.delay(record, 0.5, 7).get()
        assert result['success']
        assert result['seed'] == 7
        assert result['tail_sup'] >= 0.0

    def test_simulate_task(self, quick_scalar, tmp_path):
        record, _ = quick_scalar
        result = simulate_scenario_task.delay(record, seed=1, out_dir=str(tmp_path)).get()
        assert result['success']
        assert result['report']['meta']['seed'] == 1
        assert (tmp_path / 'scalar_cascade_arc.csv').exists()

    def test_failed_trial_is_reported(self, sampled_record):
        result = run_disturbance_trial_task.delay(sampled_record, 0.5, 7).get()
        assert not result['success']
        assert 'cascade' in result['error']

    def test_gain_table(self, quick_scalar):
        record, _ = quick_scalar
        table = estimate_iss_gain(record, [0.0, 0.5, 1.0], n_runs=2, seed=4)
        assert [len(row['runs']) for row in table.rows] == [2, 2, 2]
        assert table.rows[1]['runs'][0]['seed'] == 4 + 1000
        assert table.rows[0]['tail_sup'] < table.rows[2]['tail_sup']
        assert table.monotone

    def test_gain_table_failure(self, sampled_record):
        with pytest.raises(ConfigError):
            estimate_iss_gain(sampled_record, [0.1], n_runs=1)
