"""
Scenario records: loading, building and running

A scenario is a validated YAML mapping describing either a switched cascade
(`kind: cascade`) or the event-triggered loop (`kind: sampled`). The functions
below turn it into certificates, hybrid systems and reports. The CLI and the
Celery tasks pass plain records around and rebuild everything from them.
"""

import copy
import logging
import math

import numpy as np

from adtcert import builtins, get_config
from adtcert.adt_bounds import build_psi, build_W, compute_zeta_star
from adtcert.cascade_cert import QuadraticForm, SubsystemCertificate, compose_cascade
from adtcert.errors import ConfigError
from adtcert.forms import validate_record
from adtcert.hybrid_sim import (
    ADTParams, SimConfig, SwitchingSignal, build_cascade_system, cascade_initial_state, simulate,
    validate_adt,
)
from adtcert.iss_check import (
    CheckReport, check_asymptotic_ratio, check_flow_decay, check_gain_classes, check_jump_bounds,
    check_jump_growth, check_sandwich, check_W_monotone, grad_check, interevent_stats,
)
from adtcert.kfun import from_record as kfun_from_record
from adtcert.linear_synth import (
    LinearCascadeMode, cascade_from_quadratic, corollary_bound, quad_cert_rates,
)
from adtcert.sampled_loop import (
    check_design_criteria, check_output_bound, check_two_mode_flow_decay, run_loop, sampled_dwell_bound,
    two_mode_setup,
    TWO_MODE_X0, TWO_MODE_Z0,
)
from adtcert.utils import get_results_dir, load_yaml, run_metadata, to_plain, write_report

logger = logging.getLogger(__name__)

DECAY_TARGET = 1e-2
TAIL_FRACTION = 0.2
SUBSYSTEM_KEYS = ('alpha_o_lower', 'alpha_o_upper', 'alpha_o', 'gamma_o',
                  'alpha_c_lower', 'alpha_c_upper', 'alpha_c', 'gamma_c')


def _defaults(kind):
    cfg = get_config()
    return {
        'system': {'jumps': 'identity'},
        'certificate': {'source': 'auto-linear'},
        'adt': {'N0': 1.0, 'epsilon': 0.1},
        'sim': {'dt_base': cfg.DT_BASE if kind == 'cascade' else 0.01, 'event_tol': cfg.EVENT_TOL,
                'horizon_J': 10 ** 6, 'seed': 0},
        'check': {'samples': cfg.CHECK_SAMPLES, 'box': cfg.CHECK_BOX, 'tol': 1e-9, 'w_tol': 1e-6},
        'iss': {'levels': [0.0, 0.1, 0.5, 1.0], 'n_runs': 3, 'hold': 0.5},
        'sampled': {'loop': 'two_mode', 'epsilon': 0.2, 'eta0': 1.0, 'admissible': True},
        'output': {'formats': ['csv', 'yaml']},
    }


def _normalize(record):
    """Integer mode keys (JSON transport turns them into strings)"""
    if not isinstance(record, dict):
        return record
    record = copy.deepcopy(record)
    for section in ('system', 'certificate'):
        modes = (record.get(section) or {}).get('modes') if isinstance(record.get(section), dict) else None
        if isinstance(modes, dict):
            record[section]['modes'] = {int(k) if isinstance(k, str) and k.lstrip('-').isdigit() else k: v
                                        for k, v in modes.items()}
    return record


class Scenario:
    """Validated scenario record with defaulted sections"""

    def __init__(self, record):
        record = _normalize(record)
        errors = validate_record(record)
        if errors:
            raise ConfigError('invalid scenario: ' + '; '.join(errors))
        self.record = copy.deepcopy(record)
        self.name = str(record['name'])
        self.kind = record['kind']
        self._defaults = _defaults(self.kind)

    @classmethod
    def from_file(cls, path):
        record = load_yaml(path)
        logger.info(f"Loaded scenario from {path}")
        return cls(record)

    def section(self, name):
        merged = dict(self._defaults.get(name, {}))
        merged.update({k: v for k, v in (self.record.get(name) or {}).items() if v is not None})
        return merged

    def with_overrides(self, seed=None, epsilon=None, tau_a=None):
        """Copy with CLI overrides applied to the record"""
        record = copy.deepcopy(self.record)
        if seed is not None:
            record.setdefault('sim', {})['seed'] = int(seed)
        if epsilon is not None:
            target = 'sampled' if self.kind == 'sampled' else 'adt'
            record.setdefault(target, {})['epsilon'] = float(epsilon)
        if tau_a is not None:
            record.setdefault('adt', {})['tau_a'] = float(tau_a)
        return Scenario(record)

    @property
    def seed(self):
        return int(self.section('sim')['seed'])

    @property
    def output_name(self):
        return self.section('output').get('name') or self.name


def as_scenario(scenario):
    return scenario if isinstance(scenario, Scenario) else Scenario(scenario)


# ==================== Switched cascades ====================

def build_modes(scenario):
    """Mode table: LinearCascadeMode or BuiltinMode per mode number"""
    modes = {}
    for p, entry in sorted(scenario.section('system')['modes'].items()):
        if 'linear' in entry:
            modes[p] = LinearCascadeMode.from_record(entry['linear'], mode=p)
        else:
            modes[p] = builtins.get_mode(entry['builtin'])
    dims = {(m.n_c, m.n_o, m.n_d) for m in modes.values()}
    if len(dims) != 1:
        raise ConfigError(f"all modes must share (n_c, n_o, n_d), got {sorted(dims)}")
    return modes


def build_jumps(scenario):
    return builtins.get_jumps(scenario.section('system')['jumps'])


def _state_function(record, p, which):
    if not isinstance(record, dict) or len(record) != 1:
        raise ConfigError(f"mode {p}: {which} must be {{quadratic: P}} or {{builtin: name}}")
    if 'quadratic' in record:
        return QuadraticForm(record['quadratic'])
    if 'builtin' in record:
        return getattr(builtins.get_mode(record['builtin']).certificate(p), which)
    raise ConfigError(f"mode {p}: unknown {which} evaluator {sorted(record)}")


def _explicit_certificate(p, record):
    missing = [k for k in ('V_o', 'V_c') + SUBSYSTEM_KEYS if k not in record]
    if missing:
        raise ConfigError(f"mode {p}: explicit certificate is missing {missing}")
    functions = {key: kfun_from_record(record[key]) for key in SUBSYSTEM_KEYS}
    return SubsystemCertificate(
        mode=p,
        V_o=_state_function(record['V_o'], p, 'V_o'),
        V_c=_state_function(record['V_c'], p, 'V_c'),
        **functions,
    )


def build_certificate(scenario):
    """
    Cascade certificate of a cascade scenario

    auto-linear: quadratic certificates of linear modes with the linear-case
    rates (identity jumps) or the general composition (other jumps); builtin
    modes contribute their shipped certificates. explicit: comparison
    functions given in the file.

    Returns:
        (CascadeCertificate, dict of QuadraticCertificate for the linear modes)
    """
    scenario = as_scenario(scenario)
    if scenario.kind != 'cascade':
        raise ConfigError('certificates are built for cascade scenarios')
    modes = build_modes(scenario)
    jumps = build_jumps(scenario)
    cert_cfg = scenario.section('certificate')
    source = cert_cfg['source']

    quad = {}
    if source == 'explicit':
        records = cert_cfg.get('modes') or {}
        if sorted(records) != sorted(modes):
            raise ConfigError(f"explicit certificates {sorted(records)} do not match modes {sorted(modes)}")
        subs = [_explicit_certificate(p, records[p]) for p in sorted(modes)]
        return compose_cascade(subs, jumps=jumps), quad

    subs = []
    for p, mode in modes.items():
        if isinstance(mode, LinearCascadeMode):
            quad[p] = quad_cert_rates(mode, cert_cfg.get('Q_c'), cert_cfg.get('Q_o'))
            subs.append(quad[p].subsystem_certificate())
        else:
            subs.append(mode.certificate(p))
    if len(quad) == len(modes) and jumps.identity:
        return cascade_from_quadratic(quad), quad
    return compose_cascade(subs, jumps=jumps), quad


def _psi(cascade):
    c0 = min(float(alpha(1.0)) for alpha in cascade.alphas())
    return build_psi(cascade.alphas(), c0)


def cascade_bound(scenario, cascade=None, quad=None):
    """
    Dwell-time bound of a cascade scenario

    Returns:
        dict with zeta_star, tau_a_min, divergent, argmax_s, chi, the
        configured tau_a and whether it passes (plus the linear corollary bound
        when every mode has a quadratic certificate and jumps are identities)
    """
    scenario = as_scenario(scenario)
    if cascade is None:
        cascade, quad = build_certificate(scenario)
    epsilon = float(scenario.section('adt')['epsilon'])
    psi = _psi(cascade)
    zs = compute_zeta_star(cascade.chi, psi, epsilon)
    tau_a = scenario.section('adt').get('tau_a')
    # a single mode never switches
    tau_a_min = 0.0 if len(cascade.modes) == 1 else zs.value
    report = {
        'kind': 'cascade',
        'epsilon': epsilon,
        'c0': psi.c0,
        'chi': cascade.chi.to_record(),
        'divergent': zs.divergent,
        'zeta_star': None if zs.divergent else zs.value,
        'tau_a_min': None if zs.divergent else tau_a_min,
        'argmax_s': zs.argmax_s,
        'tau_a': tau_a,
        'passes': None if tau_a is None or zs.divergent else bool(tau_a > tau_a_min),
    }
    if quad and len(quad) == len(cascade.modes) and cascade.jumps is None:
        report['corollary'] = corollary_bound(quad).to_record()
    return report


def cascade_adt(scenario, bound=None):
    """ADTParams with τ_a from the file, else 1.1 times the certified bound (1 when it is 0)"""
    adt_cfg = scenario.section('adt')
    tau_a = adt_cfg.get('tau_a')
    if tau_a is None:
        bound = bound or cascade_bound(scenario)
        if bound['divergent']:
            raise ConfigError('no tau_a given and the dwell-time bound diverges')
        tau_a = 1.1 * bound['tau_a_min'] if bound['tau_a_min'] > 0.0 else 1.0
    return ADTParams(tau_a=float(tau_a), N0=float(adt_cfg['N0']))


def _schedule(scenario, initial_mode, horizon):
    rows = scenario.section('adt').get('schedule')
    if rows is None:
        return None
    return SwitchingSignal(initial_mode=initial_mode, switches=[(t, int(p)) for t, p in rows], horizon=horizon)


def build_scenario_system(scenario, adt=None, disturbance=None):
    """
    Hybrid system, initial state and horizon of a cascade scenario

    Returns:
        (HybridSystemDef, x0, (T, J), ADTParams)
    """
    scenario = as_scenario(scenario)
    modes = build_modes(scenario)
    jumps = build_jumps(scenario)
    adt = adt or cascade_adt(scenario)
    sim = scenario.section('sim')
    first = next(iter(modes.values()))
    mode0 = int(sim.get('mode0', min(modes)))
    if mode0 not in modes:
        raise ConfigError(f"initial mode {mode0} is not one of {sorted(modes)}")
    T = float(sim.get('horizon_T', 20.0 * adt.tau_a))
    schedule = _schedule(scenario, mode0, T)
    system = build_cascade_system(
        dict(modes), first.n_c, first.n_o, adt, schedule=schedule, disturbance=disturbance,
        jump_maps=None if jumps.identity else (jumps.g_c, jumps.g_o), n_d=first.n_d,
    )
    x0 = np.asarray(sim.get('x0', np.ones(first.n_c)), dtype=float)
    e0 = np.asarray(sim.get('e0', np.ones(first.n_o)), dtype=float)
    if x0.shape != (first.n_c,) or e0.shape != (first.n_o,):
        raise ConfigError(f"x0 and e0 must have {first.n_c} and {first.n_o} components")
    tau0 = float(scenario.section('adt').get('tau0', adt.N0))
    xi0 = cascade_initial_state(x0, e0, mode0, tau0)
    return system, xi0, (T, int(sim['horizon_J'])), adt


def cascade_w_check(cascade, arc, tau_a, tol):
    """W-monotonicity of a d ≡ 0 arc; not applicable when ζ* (ε = 0) ≥ τ_a"""
    psi = _psi(cascade)
    zs = compute_zeta_star(cascade.chi, psi, 0.0)
    if zs.divergent or not zs.value < tau_a:
        report = CheckReport(name='W_monotone', n_samples=0, applicable=False)
        report.details = {'reason': f"zeta*={'divergent' if zs.divergent else f'{zs.value:.4g}'} "
                                    f"is not below tau_a={tau_a:.4g}"}
        logger.info(report.summary())
        return report, None
    wf = build_W(cascade, psi, zs, tau_a)
    return check_W_monotone(arc, wf, tol=tol), wf


def _state_norm(system, state):
    view = system.view(state)
    return float(np.sqrt(np.dot(view['x'], view['x']) + np.dot(view['e'], view['e'])))


# ==================== Event-triggered loop ====================

def sampled_setup(scenario):
    scenario = as_scenario(scenario)
    cfg = scenario.section('sampled')
    adt_cfg = scenario.section('adt')
    priority = cfg.get('jump_priority')
    mode0 = int(scenario.section('sim').get('mode0', 1))
    schedule = None
    if adt_cfg.get('schedule') is not None:
        schedule = SwitchingSignal(initial_mode=mode0, switches=[(t, int(p)) for t, p in adt_cfg['schedule']])
    return two_mode_setup(
        epsilon=float(cfg['epsilon']), tau_a=adt_cfg.get('tau_a'), N0=float(adt_cfg['N0']),
        tau0=float(adt_cfg.get('tau0', 0.0)), eta0=float(cfg['eta0']), schedule=schedule,
        jump_priority=tuple(priority) if priority else None, admissible=bool(cfg['admissible']),
    )


def sampled_bound(scenario, setup=None):
    """Gain-pack rule τ_a > ln(χ̄)/ε and the generic sampled-loop bound ζ*/λ"""
    scenario = as_scenario(scenario)
    setup = setup or sampled_setup(scenario)
    generic = sampled_dwell_bound(setup.filters, setup.cascade, setup.lam)
    return {
        'kind': 'sampled',
        'epsilon': setup.pack.epsilon,
        'lambda': setup.lam,
        'chibar': setup.pack.chibar,
        'tau_a_min': setup.pack.tau_a_min,
        'tau_a': setup.adt.tau_a,
        'passes': bool(setup.adt.tau_a > setup.pack.tau_a_min),
        'divergent': generic.zeta_star.divergent,
        'zeta_star': None if generic.zeta_star.divergent else generic.zeta_star.value,
        'generic_tau_a_min': None if generic.zeta_star.divergent else generic.tau_a_min,
        'generic': generic.to_record(),
    }


def _run_sampled(scenario, setup):
    sim = scenario.section('sim')
    return run_loop(
        setup, sim.get('x0', TWO_MODE_X0), sim.get('z0', TWO_MODE_Z0), mode=int(sim.get('mode0', 1)),
        horizon=sim.get('horizon_T'), seed=int(sim['seed']), dt_base=float(sim['dt_base']),
        event_tol=float(sim['event_tol']), J_max=int(sim['horizon_J']),
    )


# ==================== Operations ====================

def bound_report(scenario):
    scenario = as_scenario(scenario)
    if scenario.kind == 'sampled':
        return sampled_bound(scenario)
    return cascade_bound(scenario)


def synth_report(scenario):
    """Quadratic certificates, composed cascade data and dwell-time bounds"""
    scenario = as_scenario(scenario)
    if scenario.kind == 'sampled':
        setup = sampled_setup(scenario)
        return {
            'kind': 'sampled',
            'certificates': {int(p): c.to_record() for p, c in setup.certs.items()},
            'gains': setup.pack.to_record(),
            'cascade': setup.cascade.to_record(),
        }
    cascade, quad = build_certificate(scenario)
    if not quad:
        raise ConfigError('synth-linear needs at least one linear mode')
    record = {
        'kind': 'cascade',
        'certificates': {int(p): c.to_record() for p, c in quad.items()},
        'cascade': cascade.to_record(),
    }
    if len(quad) == len(cascade.modes):
        record['corollary'] = corollary_bound(quad).to_record()
    return record


def simulate_scenario(scenario, out_dir=None, write=True):
    """
    Simulate a scenario with d ≡ 0, check dwell-time and W, export the arc

    Returns:
        (HybridArc, report dict)
    """
    scenario = as_scenario(scenario)
    w_tol = float(scenario.section('check')['w_tol'])
    if scenario.kind == 'sampled':
        setup = sampled_setup(scenario)
        arc, report = _run_sampled(scenario, setup)
        system = setup.system
        report['bound'] = sampled_bound(scenario, setup)
    else:
        cascade, quad = build_certificate(scenario)
        bound = cascade_bound(scenario, cascade, quad)
        system, xi0, horizon, adt = build_scenario_system(scenario, cascade_adt(scenario, bound))
        sim = scenario.section('sim')
        cfg = SimConfig(dt_base=float(sim['dt_base']), event_tol=float(sim['event_tol']), rng_seed=scenario.seed)
        arc = simulate(system, xi0, horizon, cfg)
        w_report, _ = cascade_w_check(cascade, arc, adt.tau_a, w_tol)
        norm0 = _state_norm(system, arc.initial_state)
        norm_end = _state_norm(system, arc.final_state)
        report = {
            'tau_a': adt.tau_a,
            'horizon': list(horizon),
            'bound': bound,
            'initial_norm': norm0,
            'final_norm': norm_end,
            'decay_ratio': norm_end / norm0 if norm0 > 0.0 else 0.0,
            'interevent': interevent_stats(arc, kinds=('switch',)),
            'adt': validate_adt(arc.switch_times(), adt).to_record(),
            'W_monotone': w_report.to_record(),
        }
    report['meta'] = run_metadata(seed=scenario.seed, scenario=scenario.name, sim=arc.meta.get('sim'),
                                  stopped=arc.meta.get('stopped'))
    if write:
        formats = scenario.section('output')['formats']
        if 'csv' in formats:
            path = get_results_dir(out_dir) / f"{scenario.output_name}_arc.csv"
            arc.to_csv(path, guards=system.guards, extra_columns=system.columns)
            report['arc_csv'] = str(path)
        if 'yaml' in formats:
            report['report_yaml'] = str(write_report(scenario.output_name, report, out_dir))
    return arc, report


def _gate(name, ok, details):
    report = CheckReport(name=name, n_samples=1, n_violations=0 if ok else 1)
    report.details = details
    logger.info(report.summary())
    return report


def certify_scenario(scenario):
    """
    Run every check that applies to the scenario

    Returns:
        dict with 'ok' and the list of check records
    """
    scenario = as_scenario(scenario)
    chk = scenario.section('check')
    n, box, tol, seed = int(chk['samples']), float(chk['box']), float(chk['tol']), scenario.seed
    reports = []

    if scenario.kind == 'cascade':
        cascade, quad = build_certificate(scenario)
        modes = build_modes(scenario)
        jumps = build_jumps(scenario)
        first = next(iter(modes.values()))
        reports.append(check_sandwich(cascade, n_samples=n, box=box, tol=tol, seed=seed))
        reports.append(check_flow_decay(cascade, modes, n_samples=n, box=box, tol=tol, seed=seed))
        reports.append(check_jump_growth(cascade, jumps, n_samples=n, box=box, tol=tol, seed=seed,
                                         n_d=first.n_d))
        if not jumps.identity:
            reports.append(check_jump_bounds(jumps, first.n_c, first.n_o, first.n_d, n_samples=n, box=box,
                                             tol=tol, seed=seed))
        reports.append(check_gain_classes(cascade))
        for p in cascade.mode_set:
            grad = grad_check(cascade.mode(p).V, seed=seed)
            grad.name = f"grad_check mode {p}"
            reports.append(grad)
        bound = cascade_bound(scenario, cascade, quad)
        adt = cascade_adt(scenario, bound)
        passes = not bound['divergent'] and adt.tau_a > bound['tau_a_min']
        reports.append(_gate('dwell_time', passes, {'tau_a': adt.tau_a, 'tau_a_min': bound['tau_a_min']}))
        if passes:
            system, xi0, horizon, adt = build_scenario_system(scenario, adt)
            sim = scenario.section('sim')
            arc = simulate(system, xi0, horizon, SimConfig(dt_base=float(sim['dt_base']),
                                                           event_tol=float(sim['event_tol']), rng_seed=seed))
            w_report, wf = cascade_w_check(cascade, arc, adt.tau_a, float(chk['w_tol']))
            reports.append(w_report)
            if wf is not None:
                reports.append(check_asymptotic_ratio(wf))
            reports.append(_gate('adt_signal', validate_adt(arc.switch_times(), adt).ok,
                                 {'switches': len(arc.switch_times())}))
    else:
        setup = sampled_setup(scenario)
        design = check_design_criteria(setup.filters, setup.triggers, setup.cascade, setup.lam, plant=setup.plant)
        reports.append(_gate('design_criteria', design.ok, design.to_record()))
        reports.append(check_output_bound(setup.plant, box=box, seed=seed))
        reports.append(check_two_mode_flow_decay(setup, n_samples=n, box=box, tol=tol, seed=seed))
        reports.append(_gate('dwell_time', setup.adt.tau_a > setup.pack.tau_a_min,
                             {'tau_a': setup.adt.tau_a, 'tau_a_min': setup.pack.tau_a_min}))
        arc, run = _run_sampled(scenario, setup)
        flow = CheckReport(name='flow_set', n_samples=run['flow_set']['n_samples'],
                           n_violations=run['flow_set']['n_violations'])
        flow.details = run['flow_set']['details']
        reports.append(flow)
        gaps = run['interevent']
        reports.append(_gate('interevent_gaps', min(gaps['min_gap_y'], gaps['min_gap_u']) > 0.0
                             and not gaps['zero_gap_kinds'], gaps))
        reports.append(_gate('decay', run['decay_ratio'] <= DECAY_TARGET, {'decay_ratio': run['decay_ratio']}))
        reports.append(_gate('adt_signal', run['adt']['ok'], run['adt']))
        w = run['W_monotone']
        w_report = CheckReport(name='W_monotone', n_samples=w['n_samples'], n_violations=w['n_violations'],
                               applicable=w['status'] != 'n/a')
        w_report.details = w['details']
        reports.append(w_report)

    ok = all(r.status != 'fail' for r in reports)
    logger.info(f"Certification of '{scenario.name}': {'pass' if ok else 'fail'}")
    return {'scenario': scenario.name, 'ok': ok, 'summaries': [r.summary() for r in reports],
            'checks': [r.to_record() for r in reports]}


# ==================== Disturbance trials ====================

def piecewise_constant(rng, level, hold, horizon, n_d):
    """t -> d with |d_i| ≤ level, redrawn every `hold` seconds"""
    n_hold = int(math.ceil(horizon / hold)) + 1
    values = rng.uniform(-level, level, size=(n_hold, n_d))

    def disturbance(t):
        return values[min(int(t / hold), n_hold - 1)]

    return disturbance


def disturbance_trial(scenario, level, seed, horizon=None):
    """
    One ISS trial: random piecewise-constant d with |d_i| ≤ level

    Returns:
        dict with tail_sup = sup of |(x, e)| over the last 20% of the horizon
    """
    scenario = as_scenario(scenario)
    if scenario.kind != 'cascade':
        raise ConfigError('disturbance trials apply to cascade scenarios')
    iss = scenario.section('iss')
    adt = cascade_adt(scenario)
    T = float(horizon or iss.get('horizon_T') or scenario.section('sim').get('horizon_T', 20.0 * adt.tau_a))
    n_d = next(iter(build_modes(scenario).values())).n_d
    rng = np.random.default_rng(seed)
    disturbance = piecewise_constant(rng, float(level), float(iss['hold']), T, n_d)
    record = copy.deepcopy(scenario.record)
    record.setdefault('sim', {})['horizon_T'] = T
    system, xi0, horizon_pair, adt = build_scenario_system(Scenario(record), adt, disturbance=disturbance)
    sim = scenario.section('sim')
    arc = simulate(system, xi0, horizon_pair, SimConfig(dt_base=float(sim['dt_base']),
                                                        event_tol=float(sim['event_tol']), rng_seed=seed))
    times, _, states = arc.stacked()
    tail = times >= (1.0 - TAIL_FRACTION) * T
    tail_sup = max(_state_norm(system, s) for s in states[tail]) if np.any(tail) else 0.0
    return to_plain({'level': float(level), 'seed': int(seed), 'horizon': T, 'tail_sup': tail_sup,
                     'initial_norm': _state_norm(system, xi0), 'switches': len(arc.switch_times())})
