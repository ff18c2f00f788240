"""
Empirical verification of certificates against the dynamics they certify

Inequality checks sample states in a box, evaluate both sides and count
violations; arc checks walk a simulated HybridArc. Nothing here raises on a
violation: every check returns a CheckReport.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from adtcert.adt_bounds import eval_W, w_flow_rate
from adtcert.cascade_cert import CascadeCertificate, JumpBounds, SubsystemCertificate
from adtcert.errors import ConfigError
from adtcert.utils import to_plain

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 10000
DEFAULT_BOX = 10.0
# half of the samples are pulled toward the origin by 10**U(LOG_RADIAL_LOW, 0)
LOG_RADIAL_LOW = -6.0

ASYMPTOTIC_GRID = np.logspace(0, 12, 49)


# ==================== Reports ====================

@dataclass
class CheckReport:
    name: str
    n_samples: int
    n_violations: int = 0
    worst_margin: float = math.inf
    witness: Optional[Any] = None
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    applicable: bool = True

    @property
    def ok(self):
        return self.n_violations == 0

    @property
    def status(self):
        if not self.applicable:
            return 'n/a'
        return 'pass' if self.ok else 'fail'

    def merge(self, other):
        """Combine with a report over a disjoint sample set (same check)"""
        if other.worst_margin < self.worst_margin:
            self.worst_margin, self.witness = other.worst_margin, other.witness
        self.n_samples += other.n_samples
        self.n_violations += other.n_violations
        self.details.update(other.details)
        return self

    def summary(self):
        mark = {'pass': '✓', 'fail': '✗', 'n/a': '-'}[self.status]
        text = f"{mark} {self.name}: {self.n_violations}/{self.n_samples} violations"
        if math.isfinite(self.worst_margin):
            text += f", worst margin {self.worst_margin:.3e}"
        if not self.applicable:
            text += f" (not applicable: {self.details.get('reason', 'n/a')})"
        return text

    def to_record(self):
        return {
            'name': self.name,
            'status': self.status,
            'n_samples': int(self.n_samples),
            'n_violations': int(self.n_violations),
            'worst_margin': None if not math.isfinite(self.worst_margin) else float(self.worst_margin),
            'witness': to_plain(self.witness),
            'tolerances': dict(self.tolerances),
            'details': to_plain(self.details),
        }


def violation_mask(lhs, rhs, tol):
    """lhs > rhs + tol·max(1, |lhs|, |rhs|), elementwise"""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    slack = tol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return ~(lhs <= rhs + slack)


def compare(name, lhs, rhs, tol, witnesses=None, **tolerances):
    """CheckReport of lhs ≤ rhs over a batch; margin = rhs − lhs"""
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    mask = violation_mask(lhs, rhs, tol)
    margins = np.where(np.isnan(lhs) | np.isnan(rhs), -np.inf, rhs - lhs)
    report = CheckReport(name=name, n_samples=int(lhs.size), n_violations=int(np.count_nonzero(mask)),
                         tolerances={'tol': tol, **tolerances})
    if lhs.size:
        k = int(np.argmin(margins))
        report.worst_margin = float(margins[k])
        if witnesses is not None:
            report.witness = witnesses[k]
    return report


# ==================== Sampling ====================

def sample_box(rng, n, dim, box=DEFAULT_BOX, log_radial=True):
    """
    n points uniform in [-box, box]^dim; with log_radial, every second point
    is scaled by 10**U(-6, 0) toward the origin
    """
    points = rng.uniform(-box, box, size=(n, dim))
    if log_radial and n > 1:
        scales = 10.0 ** rng.uniform(LOG_RADIAL_LOW, 0.0, size=n // 2)
        points[1::2][:scales.size] *= scales[:, None]
    return points


def _norms(v):
    return np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))


def _dynamics_fn(dynamics):
    """(x, e, d) -> (x', e') from a callable or an object with f_c/f_o"""
    if callable(dynamics):
        return dynamics
    return lambda x, e, d: (dynamics.f_c(x, e), dynamics.f_o(e, d))


def _n_d(dynamics, default):
    return getattr(dynamics, 'n_d', default)


# ==================== Certificate inequalities ====================

def check_flow_decay(cascade, dynamics, n_samples=DEFAULT_SAMPLES, box=DEFAULT_BOX, tol=1e-9, seed=0, n_d=1):
    """
    ⟨∇V_p, (f_c,p, f_o,p)⟩ ≤ −α_p(V_p) + γ_p(|d|) at sampled (x, e, d)

    Args:
        cascade: CascadeCertificate
        dynamics: dict mode -> callable (x, e, d) -> (x', e') or LinearCascadeMode
        n_samples: samples per mode
        box: half-width of the sampling box
        tol: violation tolerance
        seed: generator seed
        n_d: disturbance dimension of callable dynamics

    Returns:
        CheckReport over all modes
    """
    rng = np.random.default_rng(seed)
    report = CheckReport(name='flow_decay', n_samples=0, tolerances={'tol': tol, 'box': box})
    for p in cascade.mode_set:
        mode = cascade.mode(p)
        if p not in dynamics:
            raise ConfigError(f"no dynamics for mode {p}")
        fn = _dynamics_fn(dynamics[p])
        n_c, n_o = mode.V.n_c, mode.V.n_o
        nd = _n_d(dynamics[p], n_d)
        X = sample_box(rng, n_samples, n_c, box)
        E = sample_box(rng, n_samples, n_o, box)
        D = sample_box(rng, n_samples, nd, box)
        # every fourth sample is undisturbed
        D[::4] = 0.0
        DX = np.empty_like(X)
        DE = np.empty_like(E)
        for k in range(n_samples):
            dx, de = fn(X[k], E[k], D[k])
            DX[k], DE[k] = dx, de
        gx, ge = mode.V.gradient(X, E)
        lhs = np.sum(gx * DX, axis=1) + np.sum(ge * DE, axis=1)
        rhs = -np.asarray(mode.alpha(mode.V.value(X, E))) + np.asarray(mode.gamma(_norms(D)))
        witnesses = [{'mode': p, 'x': X[k], 'e': E[k], 'd': D[k]} for k in range(n_samples)]
        report.merge(compare('flow_decay', lhs, rhs, tol, witnesses))
    logger.info(report.summary())
    return report


def check_jump_growth(cascade, jumps=None, n_samples=DEFAULT_SAMPLES, box=DEFAULT_BOX, tol=1e-9, seed=0, n_d=1):
    """
    V_q(g_c(x, e), g_o(e, d)) ≤ χ(V_p(x, e)) + ρ(|d|) for all ordered mode pairs

    Args:
        cascade: CascadeCertificate (its own JumpBounds when jumps is None)
        jumps: JumpBounds with the reset maps (identity when neither is given)
    """
    jumps = jumps or cascade.jumps or JumpBounds.identity_maps()
    rng = np.random.default_rng(seed)
    report = CheckReport(name='jump_growth', n_samples=0, tolerances={'tol': tol, 'box': box})
    for p in cascade.mode_set:
        mp = cascade.mode(p)
        n_c, n_o = mp.V.n_c, mp.V.n_o
        X = sample_box(rng, n_samples, n_c, box)
        E = sample_box(rng, n_samples, n_o, box)
        D = np.zeros((n_samples, n_d)) if jumps.identity else sample_box(rng, n_samples, n_d, box)
        if jumps.identity:
            X_plus, E_plus = X, E
        else:
            X_plus = np.vstack([jumps.g_c(X[k], E[k]) for k in range(n_samples)])
            E_plus = np.vstack([jumps.g_o(E[k], D[k]) for k in range(n_samples)])
        rhs = np.asarray(cascade.chi(mp.V.value(X, E))) + np.asarray(cascade.rho(_norms(D)))
        for q in cascade.mode_set:
            lhs = cascade.mode(q).V.value(X_plus, E_plus)
            witnesses = [{'from': p, 'to': q, 'x': X[k], 'e': E[k]} for k in range(n_samples)]
            report.merge(compare('jump_growth', lhs, rhs, tol, witnesses))
    logger.info(report.summary())
    return report


def _sandwich_pairs(obj):
    """(label, evaluator, argument split, lower, upper) entries of a certificate"""
    if hasattr(obj, 'subsystem_certificate'):
        obj = obj.subsystem_certificate()
    if isinstance(obj, SubsystemCertificate):
        return [(f"mode {obj.mode} V_o", obj.V_o, obj.n_o, obj.alpha_o_lower, obj.alpha_o_upper),
                (f"mode {obj.mode} V_c", obj.V_c, obj.n_c, obj.alpha_c_lower, obj.alpha_c_upper)]
    if isinstance(obj, CascadeCertificate):
        pairs = []
        for p in obj.mode_set:
            mode = obj.mode(p)
            pairs.extend(_sandwich_pairs(mode.subsystem))
            pairs.append((f"mode {p} V_p", mode.V, mode.V.dim, mode.alpha_lower, mode.alpha_upper))
        return pairs
    raise ConfigError(f"cannot check sandwich bounds of {type(obj).__name__}")


def check_sandwich(cert, n_samples=DEFAULT_SAMPLES, box=DEFAULT_BOX, tol=1e-9, seed=0):
    """α̲(|v|) ≤ V(v) ≤ ᾱ(|v|) for every state function of a certificate"""
    rng = np.random.default_rng(seed)
    report = CheckReport(name='sandwich', n_samples=0, tolerances={'tol': tol, 'box': box})
    for label, V, dim, lower, upper in _sandwich_pairs(cert):
        points = sample_box(rng, n_samples, dim, box)
        values = np.asarray(V(points), dtype=float)
        radii = _norms(points)
        witnesses = [{'function': label, 'state': v} for v in points]
        report.merge(compare('sandwich', lower(radii), values, tol, witnesses))
        report.merge(compare('sandwich', values, upper(radii), tol, witnesses))
    logger.info(report.summary())
    return report


def check_jump_bounds(jumps, n_c, n_o, n_d=1, n_samples=DEFAULT_SAMPLES, box=DEFAULT_BOX, tol=1e-9, seed=0):
    """|g_c(x, e)| ≤ α̂_c(|(x, e)|) and |g_o(e, d)| ≤ α̂_o(|e|) + ρ̂_o(|d|)"""
    rng = np.random.default_rng(seed)
    X = sample_box(rng, n_samples, n_c, box)
    E = sample_box(rng, n_samples, n_o, box)
    D = sample_box(rng, n_samples, n_d, box)
    gc = np.vstack([jumps.g_c(X[k], E[k]) for k in range(n_samples)])
    go = np.vstack([jumps.g_o(E[k], D[k]) for k in range(n_samples)])
    witnesses = [{'x': X[k], 'e': E[k], 'd': D[k]} for k in range(n_samples)]
    report = compare('jump_bounds', _norms(gc), jumps.alpha_hat_c(_norms(np.hstack([X, E]))), tol, witnesses,
                     box=box)
    report.merge(compare('jump_bounds', _norms(go),
                         np.asarray(jumps.alpha_hat_o(_norms(E))) + np.asarray(jumps.rho_hat_o(_norms(D))),
                         tol, witnesses))
    logger.info(report.summary())
    return report


# ==================== Arc checks ====================

def check_W_monotone(arc, wf, tol=1e-6, view=None):
    """
    W along a hybrid arc simulated with d ≡ 0

    Flow samples must not increase W by more than tol·W (relative, so the test
    keeps its meaning as W decays). Switch jumps must contract W by the factor
    exp(2c0(ζ* − ζ)); sampling jumps must leave W unchanged.

    Args:
        arc: HybridArc
        wf: WFunction
        tol: relative tolerance
        view: state -> mapping with x, e, p, tau (and eta_o, eta_c); arc.view when None
    """
    view = view or arc.view
    if view is None:
        raise ConfigError('check_W_monotone needs the state view of the simulated system')
    report = CheckReport(name='W_monotone', n_samples=0, tolerances={'tol': tol})
    worst, witness = math.inf, None
    flow_violations = jump_violations = 0
    for segment in arc.segments:
        values = np.array([eval_W(wf, view(state)) for state in segment.states])
        if values.size > 1:
            rises = values[1:] - values[:-1]
            slack = tol * np.abs(values[:-1])
            bad = rises > slack
            flow_violations += int(np.count_nonzero(bad))
            margins = slack - rises
            k = int(np.argmin(margins))
            if margins[k] < worst:
                worst, witness = float(margins[k]), {'t': segment.times[k + 1], 'j': segment.j}
        report.n_samples += int(values.size)

    contraction = wf.jump_contraction
    for jump in arc.jumps:
        before = eval_W(wf, view(jump.state_before))
        after = eval_W(wf, view(jump.state_after))
        if jump.kind == 'switch':
            margin = contraction * before + tol * abs(before) - after
        else:
            margin = tol * abs(before) - abs(after - before)
        if margin < 0.0:
            jump_violations += 1
        if margin < worst:
            worst, witness = float(margin), {'t': jump.t, 'j': jump.j, 'kind': jump.kind}
    report.n_samples += len(arc.jumps)
    report.n_violations = flow_violations + jump_violations
    report.worst_margin = worst
    report.witness = witness
    report.details = {'flow_violations': flow_violations, 'jump_violations': jump_violations,
                      'jump_contraction': contraction, 'n_jumps': len(arc.jumps)}
    logger.info(report.summary())
    return report


def check_asymptotic_ratio(wf, tau_a=None, grid=None, tol=1e-12):
    """
    (2c0/ψ(s))/a_W along an increasing grid: W's disturbance weight relative to
    its decay rate must fall toward 0 for the ISS estimate to close
    """
    grid = ASYMPTOTIC_GRID if grid is None else np.asarray(grid, dtype=float)
    rate = w_flow_rate(wf, tau_a)
    report = CheckReport(name='asymptotic_ratio', n_samples=int(grid.size), tolerances={'tol': tol})
    if rate <= 0.0:
        report.n_violations = int(grid.size)
        report.details = {'reason': f"flow rate {rate:.3g} is not positive"}
        return report
    psi = np.asarray(wf.phi.psi.psi(grid), dtype=float)
    ratio = 2.0 * wf.c0 / psi / rate
    rises = np.diff(ratio) > tol * ratio[:-1]
    decays = ratio[-1] <= 1e-2 * ratio[0]
    report.n_violations = int(np.count_nonzero(rises)) + (0 if decays else 1)
    report.worst_margin = float(ratio[0] - ratio[-1])
    report.details = {'a_W': rate, 'ratio_first': float(ratio[0]), 'ratio_last': float(ratio[-1])}
    logger.info(report.summary())
    return report


def interevent_stats(arc, kinds=('sample_y', 'sample_u'), bins=10):
    """
    Minimum gap between consecutive same-kind events

    Kinds with fewer than two events report the arc length as their gap.

    Returns:
        dict with min_gap_<suffix>, counts, histogram (log10 gap bins) and the
        list of kinds with a zero gap
    """
    horizon = arc.t_end - arc.segments[0].t_start
    stats = {'counts': {}, 'histogram': {}, 'zero_gap_kinds': []}
    for kind in kinds:
        times = np.asarray([jump.t for jump in arc.jumps_of(kind)], dtype=float)
        suffix = kind.split('_')[-1]
        stats['counts'][kind] = int(times.size)
        if times.size < 2:
            stats[f"min_gap_{suffix}"] = float(horizon)
            continue
        gaps = np.diff(times)
        stats[f"min_gap_{suffix}"] = float(gaps.min())
        if np.any(gaps <= 0.0):
            stats['zero_gap_kinds'].append(kind)
        positive = gaps[gaps > 0.0]
        if positive.size:
            counts, edges = np.histogram(np.log10(positive), bins=bins)
            stats['histogram'][kind] = {'log10_edges': edges.tolist(), 'counts': counts.tolist()}
    stats['switches'] = len(arc.jumps_of('switch'))
    if stats['zero_gap_kinds']:
        logger.warning(f"Zero inter-event gaps for {stats['zero_gap_kinds']}")
    return stats


# ==================== Numerical hygiene ====================

def grad_check(V, n_samples=100, h=1e-6, tol=1e-5, box=1.0, seed=0, dim=None):
    """
    Central finite differences against the supplied gradient

    Args:
        V: evaluator with dim and either stacked_gradient (cascade) or gradient
        h: difference step
        tol: relative tolerance on the gradient vector
    """
    grad = V.stacked_gradient if hasattr(V, 'stacked_gradient') else V.gradient
    dim = V.dim if dim is None else dim
    rng = np.random.default_rng(seed)
    points = sample_box(rng, n_samples, dim, box, log_radial=False)
    errors = np.empty(n_samples)
    for k, point in enumerate(points):
        g = np.asarray(grad(point), dtype=float)
        fd = np.empty(dim)
        for i in range(dim):
            step = np.zeros(dim)
            step[i] = h
            fd[i] = (float(V(point + step)) - float(V(point - step))) / (2.0 * h)
        errors[k] = np.linalg.norm(fd - g) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    report = CheckReport(name='grad_check', n_samples=n_samples, tolerances={'tol': tol, 'h': h})
    if n_samples:
        k = int(np.argmax(errors))
        report.n_violations = int(np.count_nonzero(errors > tol))
        report.worst_margin = float(tol - errors[k])
        report.witness = points[k]
        report.details = {'max_relative_error': float(errors[k])}
    logger.info(report.summary())
    return report


# ==================== ISS gain estimation ====================

@dataclass
class GainTable:
    rows: list
    monotone: bool
    noise: float = 0.1

    def to_record(self):
        return {'rows': to_plain(self.rows), 'monotone': self.monotone, 'noise': self.noise}


def estimate_iss_gain(scenario, levels, n_runs=3, seed=0, horizon=None, noise=0.1):
    """
    Tail supremum of |(x, e)| over the last 20% of the horizon under random
    piecewise-constant disturbances |d| ≤ D

    Trials are dispatched as Celery tasks (eager unless ADTCERT_ASYNC=1) and
    merged in seed order.

    Args:
        scenario: scenario record (JSON-serializable mapping)
        levels: disturbance levels D
        n_runs: trials per level
        seed: base seed; trial seeds are seed + 1000·level_index + run
        horizon: T override
        noise: relative run-to-run noise accepted by the monotonicity flag

    Returns:
        GainTable
    """
    from adtcert.tasks import run_disturbance_trial_task

    scenario = getattr(scenario, 'record', scenario)
    pending = []
    for i, level in enumerate(levels):
        for run in range(n_runs):
            trial_seed = seed + 1000 * i + run
            pending.append((i, float(level), trial_seed,
                            run_disturbance_trial_task.delay(scenario, float(level), trial_seed, horizon)))

    rows = [{'level': float(level), 'runs': [], 'tail_sup': 0.0} for level in levels]
    for i, level, trial_seed, handle in pending:
        result = handle.get()
        if not result.get('success'):
            raise ConfigError(f"ISS trial at D={level} (seed {trial_seed}) failed: {result.get('error')}")
        rows[i]['runs'].append({'seed': trial_seed, 'tail_sup': result['tail_sup']})
        rows[i]['tail_sup'] = max(rows[i]['tail_sup'], result['tail_sup'])

    order = np.argsort([row['level'] for row in rows])
    sups = [rows[k]['tail_sup'] for k in order]
    monotone = all(b >= a * (1.0 - noise) for a, b in zip(sups, sups[1:]))
    logger.info(f"ISS gain table over {len(levels)} levels: monotone={monotone}")
    return GainTable(rows=rows, monotone=monotone, noise=noise)


def check_gain_classes(cert):
    """Comparison-function properties every rate must have: α, α̲, ᾱ of class K∞"""
    report = CheckReport(name='gain_classes', n_samples=0)
    bad = []
    for p in cert.mode_set:
        mode = cert.mode(p)
        for label in ('alpha', 'alpha_lower', 'alpha_upper'):
            f = getattr(mode, label)
            report.n_samples += 1
            if not (f.is_class_k and f.unbounded):
                bad.append(f"mode {p} {label} ({f.kind})")
    report.n_violations = len(bad)
    report.details = {'not_k_infinity': bad}
    return report

