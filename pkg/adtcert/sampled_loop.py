"""
Event-triggered observer-based switched loop

Plant x' = f_c,p(x, u_d), output y = h_p(x); observer z' = f_o,p(z, u_d, y_d)
with the zero-order-held samples y_d = h_p(x_d) and u_d = k_p(z_d). Two dynamic
filters

    eta_o' = -beta_o(eta_o) + rho_o(|y|) + gamma_o(|y - y_d|)
    eta_c' = -beta_c(eta_c) + rho_c(|z|/2) + gamma_c(|z - z_d|)

set the sampling thresholds: y is resampled when |y - y_d| reaches mu_o(eta_o)
and u when |z - z_d| reaches mu_c(eta_c). Switches resample both.

Hybrid state: (x, z, x_d, z_d, eta_o, eta_c, p, tau, n_sw).
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from adtcert import kfun
from adtcert.adt_bounds import build_psi, build_W, compute_zeta_star
from adtcert.cascade_cert import compose_cascade
from adtcert.errors import ConfigError
from adtcert.hybrid_sim import (
    ADTParams, Guard, HybridSystemDef, SimConfig, Timer, simulate, switching_rule, validate_adt,
)
from adtcert.iss_check import (
    CheckReport, check_flow_decay, check_W_monotone, compare, interevent_stats, sample_box,
)
from adtcert.linear_synth import LinearCascadeMode, cascade_from_quadratic, quad_cert_rates, synth_sampled_gains

logger = logging.getLogger(__name__)

DEFAULT_PRIORITY = ('sample_y', 'sample_u', 'switch')
CRITERIA_GRID = np.logspace(-6, 6, 200)
CRITERIA_TOL = 1e-9


# ==================== Loop definitions ====================

def _same_modes(name, *mappings):
    keys = sorted(mappings[0])
    for mapping in mappings[1:]:
        if sorted(mapping) != keys:
            raise ConfigError(f"{name}: per-mode entries disagree on the mode set")
    return keys


@dataclass(frozen=True, eq=False)
class PlantDef:
    """Per mode: f_c(x, u), h(x) and a class-K bound |h(x)| ≤ alpha_h(|x|)"""
    n: int
    f_c: Dict[int, Callable]
    h: Dict[int, Callable]
    alpha_h: Dict[int, kfun.ComparisonFunction]

    def __post_init__(self):
        _same_modes('plant', self.f_c, self.h, self.alpha_h)

    @property
    def mode_set(self):
        return sorted(self.f_c)


@dataclass(frozen=True, eq=False)
class ControllerDef:
    """Per mode: observer f_o(z, u, y) and feedback k(z)"""
    f_o: Dict[int, Callable]
    k: Dict[int, Callable]

    def __post_init__(self):
        _same_modes('controller', self.f_o, self.k)

    @property
    def mode_set(self):
        return sorted(self.f_o)


@dataclass(frozen=True)
class FilterGains:
    beta_o: kfun.ComparisonFunction
    beta_c: kfun.ComparisonFunction
    rho_o: kfun.ComparisonFunction
    rho_c: kfun.ComparisonFunction
    gamma_o: kfun.ComparisonFunction
    gamma_c: kfun.ComparisonFunction

    def to_record(self):
        return {name: getattr(self, name).to_record() for name in
                ('beta_o', 'beta_c', 'rho_o', 'rho_c', 'gamma_o', 'gamma_c')}


@dataclass(frozen=True)
class FilterDef:
    gains: Dict[int, FilterGains]
    eta0_o: float = 1.0
    eta0_c: float = 1.0

    def __post_init__(self):
        if not self.eta0_o > 0.0 or not self.eta0_c > 0.0:
            raise ConfigError('initial filter states must be positive')

    @property
    def mode_set(self):
        return sorted(self.gains)

    def to_record(self):
        return {'eta0_o': self.eta0_o, 'eta0_c': self.eta0_c,
                'modes': {int(p): g.to_record() for p, g in self.gains.items()}}


@dataclass(frozen=True)
class TriggerDef:
    mu_o: Dict[int, kfun.ComparisonFunction]
    mu_c: Dict[int, kfun.ComparisonFunction]

    def __post_init__(self):
        _same_modes('triggers', self.mu_o, self.mu_c)

    @property
    def mode_set(self):
        return sorted(self.mu_o)

    def to_record(self):
        return {int(p): {'mu_o': self.mu_o[p].to_record(), 'mu_c': self.mu_c[p].to_record()}
                for p in self.mode_set}


@dataclass
class ClosedLoopState:
    x: np.ndarray
    z: np.ndarray
    x_d: np.ndarray
    z_d: np.ndarray
    eta_o: float
    eta_c: float
    p: int
    tau: float
    n_sw: int = 0

    @property
    def e(self):
        return self.z - self.x


class ClosedLoopLayout:
    """Index map of the flat hybrid state"""

    def __init__(self, n):
        self.n = int(n)
        self.x = slice(0, n)
        self.z = slice(n, 2 * n)
        self.x_d = slice(2 * n, 3 * n)
        self.z_d = slice(3 * n, 4 * n)
        self.eta_o, self.eta_c = 4 * n, 4 * n + 1
        self.p, self.tau, self.n_sw = 4 * n + 2, 4 * n + 3, 4 * n + 4

    @property
    def labels(self):
        n = range(1, self.n + 1)
        return ([f"x{i}" for i in n] + [f"z{i}" for i in n] + [f"xd{i}" for i in n] + [f"zd{i}" for i in n]
                + ['eta_o', 'eta_c', 'p', 'tau', 'n_sw'])

    @property
    def dim(self):
        return 4 * self.n + 5

    def pack(self, state):
        out = np.empty(self.dim)
        out[self.x], out[self.z] = state.x, state.z
        out[self.x_d], out[self.z_d] = state.x_d, state.z_d
        out[self.eta_o], out[self.eta_c] = state.eta_o, state.eta_c
        out[self.p], out[self.tau], out[self.n_sw] = state.p, state.tau, state.n_sw
        return out

    def unpack(self, vec):
        return ClosedLoopState(x=vec[self.x].copy(), z=vec[self.z].copy(), x_d=vec[self.x_d].copy(),
                               z_d=vec[self.z_d].copy(), eta_o=float(vec[self.eta_o]),
                               eta_c=float(vec[self.eta_c]), p=int(round(vec[self.p])),
                               tau=float(vec[self.tau]), n_sw=int(round(vec[self.n_sw])))

    def initial_state(self, x0, z0, mode, tau0, eta0_o=1.0, eta0_c=1.0, x_d0=None, z_d0=None):
        x0 = np.asarray(x0, dtype=float)
        z0 = np.asarray(z0, dtype=float)
        if x0.shape != (self.n,) or z0.shape != (self.n,):
            raise ConfigError(f"plant and observer states must have {self.n} components")
        return self.pack(ClosedLoopState(
            x=x0, z=z0, x_d=x0 if x_d0 is None else np.asarray(x_d0, dtype=float),
            z_d=z0 if z_d0 is None else np.asarray(z_d0, dtype=float),
            eta_o=float(eta0_o), eta_c=float(eta0_c), p=int(mode), tau=float(tau0)))


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def build_closed_loop(plant, controller, filters, triggers, adt, schedule=None, jump_priority=None):
    """
    Closed loop as a hybrid system

    Args:
        plant: PlantDef
        controller: ControllerDef
        filters: FilterDef
        triggers: TriggerDef
        adt: ADTParams
        schedule: SwitchingSignal (greedy switching when None)
        jump_priority: order of 'sample_y', 'sample_u', 'switch' among simultaneous jumps

    Returns:
        HybridSystemDef whose meta holds the layout and the definitions

    Raises:
        ConfigError: the definitions disagree on the mode set
    """
    modes = plant.mode_set
    for name, other in (('controller', controller), ('filters', filters), ('triggers', triggers)):
        if other.mode_set != modes:
            raise ConfigError(f"{name} modes {other.mode_set} do not match plant modes {modes}")
    if len(modes) < 2:
        raise ConfigError('the switched loop needs at least two modes')
    if schedule is not None:
        check = validate_adt(schedule, adt)
        if not check.ok:
            raise ConfigError(f"scheduled switching violates the dwell-time bound on window {check.worst_window}")

    lay = ClosedLoopLayout(plant.n)
    ix, iz, ixd, izd = lay.x, lay.z, lay.x_d, lay.z_d
    ieo, iec, ip = lay.eta_o, lay.eta_c, lay.p
    f_c, h, f_o, k = plant.f_c, plant.h, controller.f_o, controller.k
    gains, mu_o, mu_c = filters.gains, triggers.mu_o, triggers.mu_c

    def flow(t, s):
        p = int(round(s[ip]))
        x, z, x_d, z_d = s[ix], s[iz], s[ixd], s[izd]
        u_d = k[p](z_d)
        y = h[p](x)
        y_d = h[p](x_d)
        g = gains[p]
        eta_o, eta_c = max(s[ieo], 0.0), max(s[iec], 0.0)
        out = np.zeros_like(s)
        out[ix] = f_c[p](x, u_d)
        out[iz] = f_o[p](z, u_d, y_d)
        out[ieo] = -g.beta_o.scalar(eta_o) + g.rho_o.scalar(_norm(y)) + g.gamma_o.scalar(_norm(y - y_d))
        out[iec] = -g.beta_c.scalar(eta_c) + g.rho_c.scalar(0.5 * _norm(z)) + g.gamma_c.scalar(_norm(z - z_d))
        return out

    def output_error(s):
        p = int(round(s[ip]))
        return _norm(h[p](s[ix]) - h[p](s[ixd]))

    def g_sample_y(t, s):
        err = output_error(s)
        if err == 0.0:
            return -1.0
        return err - mu_o[int(round(s[ip]))].scalar(max(s[ieo], 0.0))

    def g_sample_u(t, s):
        err = _norm(s[iz] - s[izd])
        if err == 0.0:
            return -1.0
        return err - mu_c[int(round(s[ip]))].scalar(max(s[iec], 0.0))

    def reset_y(t, s, rng):
        new = s.copy()
        new[ixd] = s[ix]
        return new

    def reset_u(t, s, rng):
        new = s.copy()
        new[izd] = s[iz]
        return new

    g_switch, next_mode = switching_rule(modes, schedule, ip, lay.tau, lay.n_sw)

    def reset_switch(t, s, rng):
        new = s.copy()
        new[ixd] = s[ix]
        new[izd] = s[iz]
        new[ip] = next_mode(t, s, rng)
        new[lay.tau] = max(0.0, s[lay.tau] - 1.0)
        new[lay.n_sw] = s[lay.n_sw] + 1.0
        return new

    def view(s):
        return {'x': s[ix], 'e': s[iz] - s[ix], 'p': int(round(s[ip])), 'tau': s[lay.tau],
                'eta_o': max(s[ieo], 0.0), 'eta_c': max(s[iec], 0.0)}

    def columns(t, s):
        p = int(round(s[ip]))
        return {
            'abs_y_minus_yd': output_error(s),
            'mu_o_eta_o': mu_o[p].scalar(max(s[ieo], 0.0)),
            'abs_z_minus_zd': _norm(s[iz] - s[izd]),
            'mu_c_eta_c': mu_c[p].scalar(max(s[iec], 0.0)),
        }

    return HybridSystemDef(
        flow=flow,
        guards=[Guard('sample_y', g_sample_y, reset_y, kind='sample_y'),
                Guard('sample_u', g_sample_u, reset_u, kind='sample_u'),
                Guard('switch', g_switch, reset_switch, kind='switch')],
        labels=lay.labels,
        mode_set=tuple(modes),
        jump_priority=tuple(jump_priority or DEFAULT_PRIORITY),
        timer=Timer(index=lay.tau, adt=adt),
        view=view,
        columns=columns,
        meta={'layout': lay, 'plant': plant, 'controller': controller, 'filters': filters,
              'triggers': triggers, 'schedule': schedule is not None},
    )


# ==================== Design criteria ====================

@dataclass
class CriterionResult:
    name: str
    mode: int
    ok: bool
    worst_margin: float
    worst_s: Optional[float] = None

    def to_record(self):
        return dataclasses.asdict(self)


@dataclass
class DesignReport:
    lam: float
    results: list = field(default_factory=list)

    @property
    def ok(self):
        return all(r.ok for r in self.results)

    def failures(self):
        return [r for r in self.results if not r.ok]

    def summary(self):
        lines = [f"{'✓' if r.ok else '✗'} {r.name} mode {r.mode}: worst relative margin {r.worst_margin:.3e}"
                 + (f" at s={r.worst_s:.3e}" if r.worst_s is not None else '') for r in self.results]
        return '\n'.join(lines)

    def to_record(self):
        return {'lambda': self.lam, 'ok': self.ok, 'results': [r.to_record() for r in self.results]}


def _inequality(name, mode, lhs, rhs, grid, tol):
    """lhs ≤ rhs on the grid, relative margins (rhs − lhs)/max(|lhs|, |rhs|)"""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.finfo(float).tiny)
    margins = (rhs - lhs) / scale
    k = int(np.argmin(margins))
    return CriterionResult(name=name, mode=mode, ok=bool(margins[k] >= -tol),
                           worst_margin=float(margins[k]), worst_s=float(grid[k]))


def check_design_criteria(filters, triggers, cascade, lam, grid=None, plant=None, tol=CRITERIA_TOL):
    """
    Filter and trigger design criteria for a given λ ∈ (0, 1)

    D1: β_o, β_c differentiable and of class K
    D2: γ_o(μ_o(s))·[1 + ν(θ(μ_o(s)))] ≤ (1−λ)β_o(s),  2γ_c(μ_c(s)) ≤ (1−λ)β_c(s)
    D3: ρ_o(α_h(α̲_c⁻¹(s))) ≤ ½(1−λ)α_c(s),  ρ_c(s) ≤ (1−λ)min{γ_c(s), ½α_c(α̲_c(s))}
        with ρ_o, ρ_c positive definite

    ν, θ, α_c and α̲_c come from the cascade certificate, γ from the filters.
    The first D3 inequality needs the plant output bound α_h and is skipped
    when no plant is given.

    Args:
        filters: FilterDef
        triggers: TriggerDef
        cascade: CascadeCertificate of the loop
        lam: λ
        grid: evaluation points (default 200 log-spaced points in [1e-6, 1e6])
        plant: PlantDef
        tol: relative tolerance

    Returns:
        DesignReport
    """
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
    grid = CRITERIA_GRID if grid is None else np.asarray(grid, dtype=float)
    report = DesignReport(lam=lam)
    for p in filters.mode_set:
        g = filters.gains[p]
        mode = cascade.mode(p)
        sub = mode.subsystem
        smooth = all(b.is_smooth and b.is_class_k for b in (g.beta_o, g.beta_c))
        report.results.append(CriterionResult(name='D1', mode=p, ok=smooth, worst_margin=0.0 if smooth else -1.0))

        mu_o = np.asarray(triggers.mu_o[p](grid), dtype=float)
        mu_c = np.asarray(triggers.mu_c[p](grid), dtype=float)
        weight = 1.0 + np.asarray(mode.nu(np.asarray(mode.theta(mu_o))), dtype=float)
        report.results.append(_inequality(
            'D2_o', p, np.asarray(g.gamma_o(mu_o)) * weight, (1.0 - lam) * np.asarray(g.beta_o(grid)), grid, tol))
        report.results.append(_inequality(
            'D2_c', p, 2.0 * np.asarray(g.gamma_c(mu_c)), (1.0 - lam) * np.asarray(g.beta_c(grid)), grid, tol))

        if plant is not None:
            lhs = g.rho_o(plant.alpha_h[p](sub.alpha_c_lower.inverse(grid)))
            report.results.append(_inequality(
                'D3_o', p, lhs, 0.5 * (1.0 - lam) * np.asarray(sub.alpha_c(grid)), grid, tol))
        cap = np.minimum(np.asarray(g.gamma_c(grid)), 0.5 * np.asarray(sub.alpha_c(sub.alpha_c_lower(grid))))
        report.results.append(_inequality('D3_c', p, g.rho_c(grid), (1.0 - lam) * cap, grid, tol))
        positive = bool(np.all(np.asarray(g.rho_o(grid)) > 0.0) and np.all(np.asarray(g.rho_c(grid)) > 0.0))
        report.results.append(CriterionResult(name='D3_positive', mode=p, ok=positive,
                                              worst_margin=0.0 if positive else -1.0))
    level = logging.INFO if report.ok else logging.WARNING
    logger.log(level, f"Design criteria with lambda={lam}: {'pass' if report.ok else 'fail'}")
    return report


def check_output_bound(plant, n_samples=1000, box=10.0, tol=1e-9, seed=0):
    """|h_p(x)| ≤ α_h,p(|x|) at sampled plant states"""
    rng = np.random.default_rng(seed)
    report = CheckReport(name='output_bound', n_samples=0, tolerances={'tol': tol, 'box': box})
    for p in plant.mode_set:
        X = sample_box(rng, n_samples, plant.n, box)
        lhs = np.array([_norm(np.atleast_1d(plant.h[p](x))) for x in X])
        rhs = plant.alpha_h[p](np.sqrt(np.sum(X ** 2, axis=1)))
        report.merge(compare('output_bound', lhs, rhs, tol, [{'mode': p, 'x': x} for x in X]))
    logger.info(report.summary())
    return report


def _samples_with_exit(arc):
    """(t, j, state, kind of the jump leaving the segment at this sample or None)"""
    for k, segment in enumerate(arc.segments):
        exit_kind = arc.jumps[k].kind if k < len(arc.jumps) else None
        last = len(segment.states) - 1
        for i, (t, state) in enumerate(zip(segment.times, segment.states)):
            yield t, segment.j, state, exit_kind if i == last else None


def check_flow_set(arc, system, event_tol=None):
    """
    Audit of a simulated closed-loop arc

    Flow samples must satisfy |y − y_d| ≤ μ_o(η_o) + tol, |z − z_d| ≤ μ_c(η_c) + tol
    and η ≥ −tol with tol = event_tol·max(1, μ). The last sample of a segment
    ending in a sampling jump lies in that jump's set and is exempt from its
    own condition. Every sampling reset must zero its own error, switches both.
    """
    lay = system.meta['layout']
    plant, triggers = system.meta['plant'], system.meta['triggers']
    event_tol = arc.meta.get('sim', {}).get('event_tol', 1e-9) if event_tol is None else event_tol
    report = CheckReport(name='flow_set', n_samples=0, tolerances={'event_tol': event_tol})
    worst, witness = math.inf, None
    counts = {'membership': 0, 'filter_sign': 0, 'reset': 0}

    for t, j, s, ending in _samples_with_exit(arc):
        p = int(round(s[lay.p]))
        eta_o, eta_c = s[lay.eta_o], s[lay.eta_c]
        y_err = _norm(plant.h[p](s[lay.x]) - plant.h[p](s[lay.x_d]))
        z_err = _norm(s[lay.z] - s[lay.z_d])
        th_o = triggers.mu_o[p].scalar(max(eta_o, 0.0))
        th_c = triggers.mu_c[p].scalar(max(eta_c, 0.0))
        margins = (
            math.inf if ending == 'sample_y' else th_o + event_tol * max(1.0, th_o) - y_err,
            math.inf if ending == 'sample_u' else th_c + event_tol * max(1.0, th_c) - z_err,
        )
        if min(margins) < 0.0:
            counts['membership'] += 1
        if min(eta_o, eta_c) < -event_tol:
            counts['filter_sign'] += 1
        if min(margins) < worst:
            worst, witness = min(margins), {'t': t, 'j': j}
        report.n_samples += 1

    for jump in arc.jumps:
        after = jump.state_after
        p = int(round(after[lay.p]))
        y_err = _norm(plant.h[p](after[lay.x]) - plant.h[p](after[lay.x_d]))
        z_err = _norm(after[lay.z] - after[lay.z_d])
        zeroed = {'sample_y': y_err == 0.0, 'sample_u': z_err == 0.0,
                  'switch': y_err == 0.0 and z_err == 0.0}.get(jump.kind, True)
        if not zeroed:
            counts['reset'] += 1
        report.n_samples += 1

    report.n_violations = sum(counts.values())
    report.worst_margin = worst
    report.witness = witness
    report.details = counts
    logger.info(report.summary())
    return report


# ==================== Sampled-loop dwell-time bound ====================

def build_alpha_tilde(filters, cascade):
    """α̃_p(s) = min{β_o(s/4), β_c(s/4), α_c(s/4), γ_c(¼ l⁻¹(s))} per mode"""
    quarter = kfun.linear(0.25)
    out = {}
    for p in filters.mode_set:
        g = filters.gains[p]
        mode = cascade.mode(p)
        sub = mode.subsystem
        out[p] = kfun.pointwise_min(
            kfun.compose(g.beta_o, quarter),
            kfun.compose(g.beta_c, quarter),
            kfun.compose(sub.alpha_c, quarter),
            kfun.compose(sub.gamma_c, kfun.compose(quarter, kfun.inverse(mode.ell))),
        )
    return out


def build_sampled_chi(cascade):
    """χ(s) = max_{p,q} l_q∘ᾱ_o,q∘α̲_p⁻¹(s) + ᾱ_c,q∘α̲_p⁻¹(s)"""
    terms = []
    for p in cascade.mode_set:
        lower_inv = kfun.inverse(cascade.mode(p).alpha_lower)
        for q in cascade.mode_set:
            mq = cascade.mode(q)
            sq = mq.subsystem
            terms.append(kfun.fsum(
                kfun.compose(mq.ell, kfun.compose(sq.alpha_o_upper, lower_inv)),
                kfun.compose(sq.alpha_c_upper, lower_inv),
            ))
    return kfun.pointwise_max(*terms)


@dataclass
class SampledBound:
    alpha_tilde: dict
    psi: object
    chi: kfun.ComparisonFunction
    zeta_star: object
    lam: float

    @property
    def tau_a_min(self):
        return self.zeta_star.value / self.lam

    def to_record(self):
        return {
            'lambda': self.lam,
            'alpha_tilde': {int(p): f.to_record() for p, f in self.alpha_tilde.items()},
            'chi': self.chi.to_record(),
            'psi': self.psi.to_record(),
            'zeta_star': self.zeta_star.to_record(),
            'tau_a_min': None if self.zeta_star.divergent else self.tau_a_min,
        }


def sampled_dwell_bound(filters, cascade, lam, c0=None):
    """
    ζ* of the sampled loop (ε = 0) and the dwell-time requirement λτ_a > ζ*

    Args:
        filters: FilterDef
        cascade: CascadeCertificate of the loop
        lam: λ of the design criteria
        c0: slope bound of ψ (default min_p α̃_p(1))
    """
    alpha_tilde = build_alpha_tilde(filters, cascade)
    if c0 is None:
        c0 = min(float(f(1.0)) for f in alpha_tilde.values())
    psi = build_psi(alpha_tilde, c0)
    chi = build_sampled_chi(cascade)
    zeta_star = compute_zeta_star(chi, psi, 0.0)
    bound = SampledBound(alpha_tilde=alpha_tilde, psi=psi, chi=chi, zeta_star=zeta_star, lam=float(lam))
    if not zeta_star.divergent:
        logger.info(f"Sampled loop: zeta*={zeta_star.value:.6g}, tau_a_min={bound.tau_a_min:.6g} (lambda={lam})")
    return bound


# ==================== Gains from quadratic certificates ====================

def filters_from_gains(pack, eta0_o=1.0, eta0_c=1.0):
    """β = a·s, ρ_o = ρ̄_o s², ρ_c = ρ̄_c s², γ = γ̄ s² per mode"""
    gains = {}
    for p, g in pack.modes.items():
        gains[p] = FilterGains(
            beta_o=kfun.linear(g.a_o), beta_c=kfun.linear(g.a_c),
            rho_o=kfun.power_law(g.rho_o, 2.0), rho_c=kfun.power_law(g.rho_c, 2.0),
            gamma_o=kfun.power_law(g.gbar_o, 2.0), gamma_c=kfun.power_law(g.gbar_c, 2.0),
        )
    return FilterDef(gains=gains, eta0_o=eta0_o, eta0_c=eta0_c)


def triggers_from_gains(pack):
    """μ(s) = √(μ̄ s)"""
    return TriggerDef(
        mu_o={p: kfun.power_law(math.sqrt(g.mu_o), 0.5) for p, g in pack.modes.items()},
        mu_c={p: kfun.power_law(math.sqrt(g.mu_c), 0.5) for p, g in pack.modes.items()},
    )


def sampled_cascade(certs, pack):
    """
    Cascade certificate of the sampled loop: the quadratic certificates with the
    loop's interconnection gains γ_c = γ̄_c·s, γ_o = γ̄_o·s² and ν ≡ ν̄
    """
    subs = []
    for cert in (certs.values() if isinstance(certs, dict) else certs):
        g = pack.modes[cert.mode]
        subs.append(dataclasses.replace(cert.subsystem_certificate(), gamma_c=kfun.linear(g.gbar_c),
                                        gamma_o=kfun.power_law(g.gbar_o, 2.0)))
    nus = {p: kfun.Constant(g.nu_bar) for p, g in pack.modes.items()}
    return compose_cascade(subs, nus=nus)


# ==================== Two-mode example ====================

TWO_MODE = {
    'A1': [[0.5, -1.0], [0.0, 0.5]],
    'B1': [[0.0], [1.0]],
    'C1': [[1.0, 0.0]],
    'L1': [[3.5], [-3.0]],
    'K1': [[-1.5, 2.5]],
    'B2': [[0.0], [1.0]],
    'C2': [[1.0, 0.0]],
    'K2': [[-2.0, -2.0]],
    'L2': [[2.0], [2.0]],
}
TWO_MODE_X0 = (1.0, -1.0)
TWO_MODE_Z0 = (0.0, 0.0)


def sat(v):
    return np.clip(v, -1.0, 1.0)


def _arr(name):
    return np.asarray(TWO_MODE[name], dtype=float)


def two_mode_plant():
    """Mode 1 linear, mode 2: x1' = x2 + |x1|/4, x2' = sat(x1) + u"""
    A1, B1, C1 = _arr('A1'), _arr('B1'), _arr('C1')
    C2 = _arr('C2')

    def f_c1(x, u):
        return A1 @ x + B1 @ u

    def f_c2(x, u):
        return np.array([x[1] + 0.25 * abs(x[0]), float(sat(x[0])) + float(u[0])])

    return PlantDef(
        n=2,
        f_c={1: f_c1, 2: f_c2},
        h={1: lambda x: C1 @ x, 2: lambda x: C2 @ x},
        alpha_h={1: kfun.linear(1.0), 2: kfun.linear(1.0)},
    )


def two_mode_controller():
    """Luenberger-type observers with u = −K1 z in mode 1 and u = −sat(z1) + K2 z in mode 2"""
    A1, B1, C1, L1, K1 = _arr('A1'), _arr('B1'), _arr('C1'), _arr('L1'), _arr('K1')
    K2 = _arr('K2')[0]
    L2 = _arr('L2')
    l1, l2 = float(L2[0, 0]), float(L2[1, 0])

    def f_o1(z, u, y):
        return A1 @ z + B1 @ u + L1 @ (y - C1 @ z)

    def f_o2(z, u, y):
        innovation = float(y[0]) - z[0]
        return np.array([z[1] + 0.25 * abs(float(y[0])) + l1 * innovation,
                         float(sat(y[0])) + float(u[0]) + l2 * innovation])

    return ControllerDef(
        f_o={1: f_o1, 2: f_o2},
        k={1: lambda z: -K1 @ z, 2: lambda z: np.array([-float(sat(z[0])) + float(K2 @ z)])},
    )


def two_mode_cascade_modes():
    """
    Linear cascade data (x, e = z − x) certifying the two modes

    Mode 2 uses its linearization at the origin. The sat terms cancel in the
    closed-loop matrix and leave sat(x1) − sat(x1 + e1) = −θe1 with θ in [0, 1]
    in the coupling; B takes θ = 1, which maximizes ‖P_c B2 (K2 − θC2)‖. The
    plant drift |x1|/4 is carried as lipschitz_c = 0.25.
    """
    A1, B1, C1, L1, K1 = _arr('A1'), _arr('B1'), _arr('C1'), _arr('L1'), _arr('K1')
    B2, C2, K2, L2 = _arr('B2'), _arr('C2'), _arr('K2'), _arr('L2')
    A2_obs = np.array([[0.0, 1.0], [0.0, 0.0]])
    return {
        1: LinearCascadeMode(A=A1 - B1 @ K1, B=-B1 @ K1, F=A1 - L1 @ C1, G=L1, mode=1),
        2: LinearCascadeMode(A=A2_obs + B2 @ K2, B=B2 @ (K2 - C2), F=A2_obs - L2 @ C2, G=L2 + B2, mode=2,
                              lipschitz_c=0.25),
    }


def two_mode_flows():
    """
    Closed-loop flows of the two modes in cascade coordinates (x, e = z − x)

    The x-flow is the simulated plant under u = k_p(x + e); the error flow is the
    modelled F e + G d. Returns dict mode -> callable (x, e, d) -> (x', e').
    """
    plant, controller = two_mode_plant(), two_mode_controller()
    modes = two_mode_cascade_modes()

    def flow_of(p):
        mode = modes[p]

        def flow(x, e, d):
            u = np.atleast_1d(controller.k[p](x + e))
            return np.asarray(plant.f_c[p](x, u), dtype=float), mode.f_o(e, d)
        return flow

    return {p: flow_of(p) for p in modes}


def check_two_mode_flow_decay(setup, n_samples=2000, box=10.0, tol=1e-9, seed=0):
    """Flow decay of the quadratic certificates along the nonlinear closed-loop flows"""
    report = check_flow_decay(cascade_from_quadratic(setup.certs), two_mode_flows(), n_samples=n_samples,
                              box=box, tol=tol, seed=seed)
    report.name = 'flow_decay'
    return report


@dataclass
class LoopSetup:
    plant: PlantDef
    controller: ControllerDef
    filters: FilterDef
    triggers: TriggerDef
    certs: dict
    pack: object
    cascade: object
    adt: ADTParams
    system: HybridSystemDef
    tau0: float = 0.0

    @property
    def layout(self):
        return self.system.meta['layout']

    @property
    def lam(self):
        return self.pack.epsilon


def two_mode_setup(epsilon=0.2, tau_a=None, N0=1.0, tau0=0.0, eta0=1.0, schedule=None, jump_priority=None,
                   admissible=True):
    """
    Assemble the two-mode example: certificates, admissible gain pack, filters,
    triggers and the closed loop with τ_a = 1.05·ln(χ̄)/ε unless overridden
    """
    modes = two_mode_cascade_modes()
    certs = {p: quad_cert_rates(m) for p, m in modes.items()}
    c_norms = {1: float(np.linalg.norm(_arr('C1'), 2)), 2: float(np.linalg.norm(_arr('C2'), 2))}
    pack = synth_sampled_gains(certs, c_norms, epsilon, admissible=admissible)
    tau_a = 1.05 * pack.tau_a_min if tau_a is None else float(tau_a)
    adt = ADTParams(tau_a=tau_a, N0=N0)
    plant, controller = two_mode_plant(), two_mode_controller()
    filters = filters_from_gains(pack, eta0_o=eta0, eta0_c=eta0)
    triggers = triggers_from_gains(pack)
    system = build_closed_loop(plant, controller, filters, triggers, adt, schedule=schedule,
                               jump_priority=jump_priority)
    return LoopSetup(plant=plant, controller=controller, filters=filters, triggers=triggers, certs=certs,
                     pack=pack, cascade=sampled_cascade(certs, pack), adt=adt, system=system, tau0=tau0)


def loop_norm(setup, state):
    """|(y, z, η_o, η_c)|"""
    lay = setup.layout
    s = np.asarray(state, dtype=float)
    y = np.atleast_1d(setup.plant.h[int(round(s[lay.p]))](s[lay.x]))
    return float(np.sqrt(np.dot(y, y) + np.dot(s[lay.z], s[lay.z]) + s[lay.eta_o] ** 2 + s[lay.eta_c] ** 2))


def run_loop(setup, x0, z0, mode=1, horizon=None, seed=0, dt_base=0.01, event_tol=1e-9, J_max=10 ** 6,
             w_check=True):
    """
    Simulate a sampled loop and audit the run

    Returns:
        (HybridArc, report dict)
    """
    T = 20.0 * setup.adt.tau_a if horizon is None else float(horizon)
    lay = setup.layout
    xi0 = lay.initial_state(x0, z0, mode, setup.tau0, setup.filters.eta0_o, setup.filters.eta0_c)
    cfg = SimConfig(dt_base=dt_base, event_tol=event_tol, rng_seed=seed)
    arc = simulate(setup.system, xi0, (T, J_max), cfg)

    norm0 = loop_norm(setup, arc.initial_state)
    norm_end = loop_norm(setup, arc.final_state)
    switch_times = arc.switch_times()
    report = {
        'tau_a': setup.adt.tau_a,
        'horizon': T,
        'gains': setup.pack.to_record(),
        'initial_norm': norm0,
        'final_norm': norm_end,
        'decay_ratio': norm_end / norm0 if norm0 > 0.0 else 0.0,
        'interevent': interevent_stats(arc),
        'flow_set': check_flow_set(arc, setup.system, event_tol).to_record(),
        'design_criteria': check_design_criteria(setup.filters, setup.triggers, setup.cascade, setup.lam,
                                                 plant=setup.plant).to_record(),
        'adt': validate_adt(switch_times, setup.adt).to_record(),
    }
    if w_check:
        report['W_monotone'] = sampled_w_check(setup, arc).to_record()
    logger.info(f"Sampled loop run: {len(arc.jumps)} jumps, decay ratio {report['decay_ratio']:.3e}")
    return arc, report


def sampled_w_check(setup, arc, tol=1e-6):
    """W-monotonicity when ζ fits into (ζ*, λτ_a); reported as not applicable otherwise"""
    bound = sampled_dwell_bound(setup.filters, setup.cascade, setup.lam)
    zs = bound.zeta_star
    if zs.divergent or not zs.value < setup.lam * setup.adt.tau_a:
        zeta_text = 'divergent' if zs.divergent else f"{zs.value:.4g}"
        report = CheckReport(name='W_monotone', n_samples=0, applicable=False)
        report.details = {'reason': f"zeta*={zeta_text} is not below lambda*tau_a={setup.lam * setup.adt.tau_a:.4g}",
                          'sampled_bound': bound.to_record()}
        logger.info(report.summary())
        return report
    wf = build_W(setup.cascade, bound.psi, zs, setup.adt.tau_a, lam=setup.lam, eta_terms=True)
    return check_W_monotone(arc, wf, tol=tol)


def run_two_mode_example(epsilon=0.2, tau_a=None, seed=0, horizon=None, x0=TWO_MODE_X0, z0=TWO_MODE_Z0,
                         dt_base=0.01, event_tol=1e-9, eta0=1.0, jump_priority=None):
    """
    Two-mode event-triggered example with d ≡ 0

    Greedy switching from τ0 = 0, so the first switch happens after τ_a and
    every τ_a after that; the default horizon spans 20 dwell times.

    Returns:
        (HybridArc, report dict, LoopSetup)
    """
    setup = two_mode_setup(epsilon=epsilon, tau_a=tau_a, eta0=eta0, jump_priority=jump_priority)
    arc, report = run_loop(setup, x0, z0, horizon=horizon, seed=seed, dt_base=dt_base, event_tol=event_tol)
    report['epsilon'] = epsilon
    report['flow_decay'] = check_two_mode_flow_decay(setup, seed=seed).to_record()
    return arc, report, setup
