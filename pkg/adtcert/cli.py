"""
Command-line front end

Usage:
    python run.py bound --config configs/linear_two_mode.yaml
    python run.py synth-linear --config configs/linear_two_mode.yaml --out results/
    python run.py simulate --config configs/scalar_cascade.yaml --seed 3
    python run.py example --epsilon 0.2
    python run.py certify --config configs/two_mode_sampled.yaml
    python run.py iss-gain --config configs/scalar_cascade.yaml --levels 0 0.5 1

Every command prints a human-readable summary and writes a YAML report into
the results directory (--out, ADTCERT_OUTPUT_DIR or ./adtcert_results).
"""

import argparse
import logging
import time

from adtcert import VERSION
from adtcert.iss_check import estimate_iss_gain
from adtcert.sampled_loop import run_two_mode_example
from adtcert.scenario import (
    DECAY_TARGET, Scenario, bound_report, certify_scenario, simulate_scenario, synth_report,
)
from adtcert.utils import format_duration, get_results_dir, run_metadata, write_report

logger = logging.getLogger(__name__)

RULE = '=' * 60


def _banner(title):
    print(RULE)
    print(f"adtcert {VERSION} - {title}")
    print(RULE)


def _mark(ok):
    return '✓' if ok else '✗'


def _load(args):
    scenario = Scenario.from_file(args.config)
    return scenario.with_overrides(seed=getattr(args, 'seed', None), epsilon=getattr(args, 'epsilon', None),
                                   tau_a=getattr(args, 'tau_a', None))


def _fmt(value):
    return 'n/a' if value is None else f"{value:.6g}"


# ==================== Commands ====================

def cmd_bound(args):
    """Dwell-time bound of a scenario; fails on a divergent bound or a τ_a below it"""
    scenario = _load(args)
    _banner(f"dwell-time bound for '{scenario.name}'")
    report = bound_report(scenario)
    if report['divergent']:
        print(f"✗ No finite bound: the objective still grows beyond s={_fmt(report['argmax_s'])}")
    else:
        print(f"  zeta*      : {_fmt(report['zeta_star'])}")
        if report['kind'] == 'sampled':
            print(f"  gain rule  : tau_a > ln(chibar)/epsilon = {_fmt(report['tau_a_min'])} "
                  f"(chibar={_fmt(report['chibar'])})")
            print(f"  generic    : tau_a > zeta*/lambda = {_fmt(report['generic_tau_a_min'])}")
        else:
            print(f"  tau_a_min  : {_fmt(report['tau_a_min'])} (epsilon={report['epsilon']})")
            print(f"  chi        : {report['chi']['kind']}")
            if 'corollary' in report:
                print(f"  corollary  : ln({_fmt(report['corollary']['chibar'])})/{_fmt(report['corollary']['a'])}"
                      f" = {_fmt(report['corollary']['tau_a_min'])}")
    if report.get('passes') is not None:
        print(f"{_mark(report['passes'])} configured tau_a = {_fmt(report['tau_a'])}")
    name = f"{scenario.output_name}_bound"
    write_report(name, {'bound': report, 'meta': run_metadata(scenario=scenario.name)}, args.out)
    success = not report['divergent'] and report.get('passes') is not False
    return {'success': success, 'report': report}


def cmd_synth_linear(args):
    """Quadratic certificates and composed cascade data of the linear modes"""
    scenario = _load(args)
    _banner(f"linear certificate synthesis for '{scenario.name}'")
    record = synth_report(scenario)
    for p, cert in record['certificates'].items():
        print(f"  mode {p}: a_c={_fmt(cert['a_c'])} a_o={_fmt(cert['a_o'])} "
              f"gbar_c={_fmt(cert['gbar_c'])} gbar_o={_fmt(cert['gbar_o'])} nu_bar={_fmt(cert['nu_bar'])}")
    if 'corollary' in record:
        c = record['corollary']
        print(f"  chibar={_fmt(c['chibar'])}  a={_fmt(c['a'])}  tau_a_min={_fmt(c['tau_a_min'])}")
    if 'gains' in record:
        g = record['gains']
        print(f"  epsilon={g['epsilon']}  chibar={_fmt(g['chibar'])}  tau_a_min={_fmt(g['tau_a_min'])}")
    path = write_report(f"{scenario.output_name}_certificate", record, args.out)
    print(f"✓ Certificate written to {path}")
    return {'success': True, 'path': str(path)}


def _print_run(report):
    print(f"  tau_a       : {_fmt(report['tau_a'])}")
    print(f"  decay ratio : {report['decay_ratio']:.3e}")
    print(f"{_mark(report['adt']['ok'])} dwell-time signal ({report['adt']['n_switches']} switches)")
    w = report['W_monotone']
    mark = {'pass': '✓', 'fail': '✗', 'n/a': '-'}[w['status']]
    print(f"{mark} W monotone: {w['n_violations']}/{w['n_samples']} violations")
    if 'flow_set' in report:
        fs = report['flow_set']
        print(f"{_mark(fs['status'] == 'pass')} flow set: {fs['n_violations']}/{fs['n_samples']} violations")
    gaps = report['interevent']
    for key in ('min_gap_y', 'min_gap_u'):
        if key in gaps:
            print(f"  {key}   : {gaps[key]:.3e}")


def cmd_simulate(args):
    scenario = _load(args)
    _banner(f"simulation of '{scenario.name}'")
    started = time.monotonic()
    _, report = simulate_scenario(scenario, out_dir=args.out)
    _print_run(report)
    print(f"  runtime     : {format_duration(time.monotonic() - started)}")
    if 'arc_csv' in report:
        print(f"✓ Arc written to {report['arc_csv']}")
    success = report['adt']['ok'] and report['W_monotone']['status'] != 'fail'
    return {'success': success, 'report': report}


def cmd_example(args):
    """Two-mode event-triggered example with d ≡ 0"""
    _banner('two-mode event-triggered example')
    started = time.monotonic()
    arc, report, setup = run_two_mode_example(epsilon=args.epsilon, tau_a=args.tau_a, seed=args.seed,
                                              horizon=args.horizon)
    path = get_results_dir(args.out) / 'two_mode_example_arc.csv'
    arc.to_csv(path, guards=setup.system.guards, extra_columns=setup.system.columns)
    report['arc_csv'] = str(path)
    report['meta'] = run_metadata(seed=args.seed, sim=arc.meta.get('sim'))
    _print_run(report)
    print(f"{_mark(report['design_criteria']['ok'])} design criteria (lambda={setup.lam})")
    print(f"{_mark(report['flow_decay']['status'] == 'pass')} flow decay on the nonlinear modes")
    print(f"  runtime     : {format_duration(time.monotonic() - started)}")
    write_report('two_mode_example', report, args.out)
    print(f"✓ Arc written to {path}")
    gaps = report['interevent']
    success = (report['flow_set']['status'] == 'pass' and not gaps['zero_gap_kinds']
               and min(gaps['min_gap_y'], gaps['min_gap_u']) > 0.0
               and report['decay_ratio'] <= DECAY_TARGET
               and report['design_criteria']['ok']
               and report['adt']['ok']
               and report['flow_decay']['status'] == 'pass')
    return {'success': success, 'report': report}


def cmd_certify(args):
    scenario = _load(args)
    _banner(f"verification suite for '{scenario.name}'")
    started = time.monotonic()
    result = certify_scenario(scenario)
    for line in result['summaries']:
        print(line)
    print(f"  runtime: {format_duration(time.monotonic() - started)}")
    write_report(f"{scenario.output_name}_certify", result, args.out)
    print(f"{_mark(result['ok'])} {'All checks passed' if result['ok'] else 'Verification failed'}")
    return {'success': result['ok'], 'report': result}


def cmd_iss_gain(args):
    """Empirical tail-supremum table over disturbance levels"""
    scenario = _load(args)
    _banner(f"ISS gain estimate for '{scenario.name}'")
    iss = scenario.section('iss')
    levels = args.levels or iss['levels']
    table = estimate_iss_gain(scenario.record, levels, n_runs=args.runs or iss['n_runs'], seed=scenario.seed)
    for row in table.rows:
        print(f"  D={row['level']:<8g} tail sup |xi| = {row['tail_sup']:.4e}")
    print(f"{_mark(table.monotone)} nondecreasing in D (noise {table.noise:.0%})")
    write_report(f"{scenario.output_name}_iss_gain", table.to_record(), args.out)
    return {'success': True, 'report': table.to_record()}


# ==================== Parser ====================

def build_parser():
    parser = argparse.ArgumentParser(
        prog='adtcert',
        description='Dwell-time certificates and hybrid simulation for switched cascades',
    )
    parser.add_argument('--version', action='version', version=f"adtcert {VERSION}")
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING (default from ADTCERT_LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command', required=True)

    def scenario_command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--config', required=True, help='scenario YAML file')
        p.add_argument('--seed', type=int, default=None, help='override sim.seed')
        p.add_argument('--out', default=None, help='results directory')
        p.add_argument('--epsilon', type=float, default=None, help='override the bound margin')
        p.add_argument('--tau-a', dest='tau_a', type=float, default=None, help='override adt.tau_a')
        p.set_defaults(func=func)
        return p

    scenario_command('bound', cmd_bound, 'compute the dwell-time bound')
    scenario_command('synth-linear', cmd_synth_linear, 'synthesize quadratic certificates')
    scenario_command('simulate', cmd_simulate, 'simulate and export the hybrid arc')
    scenario_command('certify', cmd_certify, 'run the verification suite')
    iss = scenario_command('iss-gain', cmd_iss_gain, 'estimate the ISS gain table')
    iss.add_argument('--levels', type=float, nargs='+', default=None, help='disturbance levels')
    iss.add_argument('--runs', type=int, default=None, help='trials per level')

    ex = sub.add_parser('example', help='run the two-mode event-triggered example')
    ex.add_argument('--epsilon', type=float, default=0.2)
    ex.add_argument('--seed', type=int, default=0)
    ex.add_argument('--horizon', type=float, default=None, help='T (default 20 tau_a)')
    ex.add_argument('--tau-a', dest='tau_a', type=float, default=None)
    ex.add_argument('--out', default=None)
    ex.set_defaults(func=cmd_example)
    return parser


def main(argv=None):
    """Run one command; returns the process exit status"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    try:
        result = args.func(args)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"✗ Error: {e}")
        return 1
    return 0 if result.get('success') else 1
