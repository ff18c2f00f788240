"""
Hybrid system simulation

States are flat float vectors; a HybridSystemDef names its components and
supplies the flow map, guards (jump enabled when g >= 0) with their resets, and
an optional dwell-time timer realized analytically as
tau' = 1/tau_a while tau < N0. Flows are integrated with fixed-step RK4; a
guard crossing inside a step is located by bisection on the step length.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from adtcert.errors import ConfigError, StepFailure, ZenoSuspected

logger = logging.getLogger(__name__)

JUMP_KINDS = ('sample_y', 'sample_u', 'switch')
CSV_FLOAT_FORMAT = '%.17g'


# ==================== Hybrid time and arcs ====================

@dataclass(frozen=True, order=True)
class HybridTimeStamp:
    t: float
    j: int


@dataclass
class JumpEvent:
    t: float
    j: int
    kind: str
    guard: str
    state_before: np.ndarray
    state_after: np.ndarray

    @property
    def stamp(self):
        return HybridTimeStamp(self.t, self.j)


@dataclass
class ArcSegment:
    """Flow interval [t_start, t_end] at jump count j"""
    j: int
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)

    @property
    def t_start(self):
        return self.times[0]

    @property
    def t_end(self):
        return self.times[-1]

    @property
    def duration(self):
        return self.t_end - self.t_start

    def as_arrays(self):
        return np.asarray(self.times, dtype=float), np.vstack(self.states)


class HybridArc:
    """Solution on a hybrid time domain: flow segments chained by jumps"""

    def __init__(self, labels, meta=None):
        self.labels = list(labels)
        self.segments = []
        self.jumps = []
        self.meta = dict(meta or {})
        self.view = None

    def _open_segment(self, j, t, state):
        segment = ArcSegment(j=j)
        segment.times.append(float(t))
        segment.states.append(np.array(state, dtype=float))
        self.segments.append(segment)
        return segment

    @property
    def t_end(self):
        return self.segments[-1].t_end

    @property
    def j_end(self):
        return self.segments[-1].j

    @property
    def initial_state(self):
        return self.segments[0].states[0]

    @property
    def final_state(self):
        return self.segments[-1].states[-1]

    def index(self, label):
        return self.labels.index(label)

    def points(self):
        """Iterate (t, j, state) over every stored sample in hybrid-time order"""
        for segment in self.segments:
            for t, state in zip(segment.times, segment.states):
                yield t, segment.j, state

    def stacked(self):
        """(times, jump counts, states) over all samples"""
        times, js, states = [], [], []
        for t, j, state in self.points():
            times.append(t)
            js.append(j)
            states.append(state)
        return np.asarray(times), np.asarray(js, dtype=int), np.vstack(states)

    def jumps_of(self, kind):
        return [jump for jump in self.jumps if jump.kind == kind]

    def switch_times(self):
        return [jump.t for jump in self.jumps if jump.kind == 'switch']

    def is_valid_domain(self):
        """Segment chain and jump log form a hybrid time domain"""
        for k, segment in enumerate(self.segments):
            if segment.j != k or np.any(np.diff(segment.times) < 0.0):
                return False
            if k > 0 and segment.t_start != self.segments[k - 1].t_end:
                return False
        if len(self.jumps) != len(self.segments) - 1:
            return False
        return all(jump.j == k and jump.t == self.segments[k].t_end for k, jump in enumerate(self.jumps))

    def to_csv(self, path, guards=None, extra_columns=None):
        """
        Write one row per stored sample

        Columns: t, j, mode (when a 'p' component exists), every state
        component, each guard value, any extra columns, and jump_kind on the
        first row after a jump.

        Args:
            path: output file
            guards: list of Guard whose values are reported
            extra_columns: callable(t, state) -> ordered dict of additional values
        """
        guards = guards or []
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        has_mode = 'p' in self.labels
        kinds_by_segment = {jump.j + 1: jump.kind for jump in self.jumps}

        header = ['t', 'j'] + (['mode'] if has_mode else []) + self.labels + [f"g_{g.name}" for g in guards]
        extra_names = None
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            rows = 0
            for segment in self.segments:
                for k, (t, state) in enumerate(zip(segment.times, segment.states)):
                    extra = extra_columns(t, state) if extra_columns else {}
                    if extra_names is None:
                        extra_names = list(extra)
                        writer.writerow(header + extra_names + ['jump_kind'])
                    row = [CSV_FLOAT_FORMAT % t, str(segment.j)]
                    if has_mode:
                        row.append(str(int(round(state[self.index('p')]))))
                    row += [CSV_FLOAT_FORMAT % v for v in state]
                    row += [CSV_FLOAT_FORMAT % g.fn(t, state) for g in guards]
                    row += [CSV_FLOAT_FORMAT % extra[name] for name in extra_names]
                    row.append(kinds_by_segment.get(segment.j, '') if k == 0 else '')
                    writer.writerow(row)
                    rows += 1
        logger.info(f"Arc exported to {path} ({rows} rows)")
        return path


# ==================== System definition ====================

@dataclass(frozen=True)
class ADTParams:
    tau_a: float
    N0: float = 1.0

    def __post_init__(self):
        if not self.tau_a > 0.0 or math.isinf(self.tau_a):
            raise ConfigError(f"tau_a must be positive and finite, got {self.tau_a}")
        if not self.N0 >= 1.0:
            raise ConfigError(f"N0 must be at least 1, got {self.N0}")

    def to_record(self):
        return {'tau_a': self.tau_a, 'N0': self.N0}


@dataclass(frozen=True)
class Guard:
    """Jump enabled when fn(t, state) >= 0; reset(t, state, rng) returns the post-jump state"""
    name: str
    fn: Callable
    reset: Callable
    kind: str = 'switch'


@dataclass(frozen=True)
class Timer:
    index: int
    adt: ADTParams


@dataclass
class HybridSystemDef:
    flow: Callable
    guards: Sequence[Guard]
    labels: Sequence[str]
    mode_set: Sequence[int] = (1,)
    jump_priority: Optional[Sequence[str]] = None
    timer: Optional[Timer] = None
    view: Optional[Callable] = None
    columns: Optional[Callable] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        names = [g.name for g in self.guards]
        if len(set(names)) != len(names):
            raise ConfigError(f"guard names must be unique: {names}")
        if self.jump_priority is None:
            self.jump_priority = tuple(names)
        elif sorted(self.jump_priority) != sorted(names):
            raise ConfigError(f"jump priority {list(self.jump_priority)} does not match guards {names}")
        self._ordered = [next(g for g in self.guards if g.name == name) for name in self.jump_priority]

    @property
    def dim(self):
        return len(self.labels)

    def ordered_guards(self):
        return self._ordered

    def enabled_guard(self, t, state):
        for guard in self._ordered:
            if guard.fn(t, state) >= 0.0:
                return guard
        return None


@dataclass(frozen=True)
class SimConfig:
    dt_base: float = 1e-3
    event_tol: float = 1e-9
    rng_seed: int = 0

    def __post_init__(self):
        if not self.dt_base > 0.0 or not self.event_tol > 0.0:
            raise ConfigError('dt_base and event_tol must be positive')

    def to_record(self):
        return {'dt_base': self.dt_base, 'event_tol': self.event_tol, 'rng_seed': self.rng_seed}


# ==================== Integration ====================

def _rk4(flow, t, x, h):
    k1 = flow(t, x)
    k2 = flow(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = flow(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = flow(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step(system, t, x, h):
    x_new = _rk4(system.flow, t, x, h)
    if system.timer is not None:
        i, adt = system.timer.index, system.timer.adt
        x_new[i] = min(adt.N0, x[i] + h / adt.tau_a)
    return x_new


def _any_enabled(system, t, x):
    return any(g.fn(t, x) >= 0.0 for g in system.guards)


def simulate(system, x0, horizon, cfg=None):
    """
    Simulate a hybrid system from x0

    At every hybrid instant the horizon is checked first, then at most one
    enabled jump fires (in jump_priority order), otherwise the state flows by
    one RK4 step. Steps ending inside a jump set are shortened by bisection so
    that the jump fires within event_tol of the guard crossing.

    Args:
        system: HybridSystemDef
        x0: initial state
        horizon: (T_max, J_max)
        cfg: SimConfig

    Returns:
        HybridArc

    Raises:
        StepFailure: the state became non-finite
        ZenoSuspected: J_max reached while the last completed flow interval was shorter than 10·event_tol
    """
    cfg = cfg or SimConfig()
    T_max, J_max = float(horizon[0]), int(horizon[1])
    if T_max < 0.0 or J_max < 0:
        raise ConfigError(f"horizon must be nonnegative, got {horizon}")
    x = np.array(x0, dtype=float)
    if x.shape != (system.dim,):
        raise ConfigError(f"initial state must have {system.dim} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise StepFailure('initial state is not finite')

    rng = np.random.default_rng(cfg.rng_seed)
    arc = HybridArc(system.labels, meta={'sim': cfg.to_record(), 'horizon': [T_max, J_max]})
    arc.view = system.view
    t, j = 0.0, 0
    segment = arc._open_segment(j, t, x)
    t_eps = 1e-12 * max(1.0, T_max)
    steps = 0

    while True:
        if t >= T_max - t_eps:
            break
        if j >= J_max:
            if len(arc.segments) > 2 and arc.segments[-2].duration < 10.0 * cfg.event_tol:
                arc.meta['stopped'] = 'zeno'
                raise ZenoSuspected(f"jump budget {J_max} exhausted at t={t:.6g} with vanishing flow", arc=arc)
            break

        guard = system.enabled_guard(t, x)
        if guard is not None:
            x_after = np.array(guard.reset(t, x, rng), dtype=float)
            if not np.all(np.isfinite(x_after)):
                raise StepFailure(f"jump '{guard.name}' produced a non-finite state at t={t:.6g}")
            arc.jumps.append(JumpEvent(t=t, j=j, kind=guard.kind, guard=guard.name,
                                       state_before=x.copy(), state_after=x_after.copy()))
            j += 1
            x = x_after
            segment = arc._open_segment(j, t, x)
            continue

        h = min(cfg.dt_base, T_max - t)
        x_new = _step(system, t, x, h)
        if not np.all(np.isfinite(x_new)):
            raise StepFailure(f"non-finite state after step at t={t:.6g} (h={h:.3g})")
        if system.guards and _any_enabled(system, t + h, x_new):
            lo, hi = 0.0, h
            while hi - lo > cfg.event_tol:
                mid = 0.5 * (lo + hi)
                if _any_enabled(system, t + mid, _step(system, t, x, mid)):
                    hi = mid
                else:
                    lo = mid
            h = hi
            x_new = _step(system, t, x, h)
        t = t + h
        x = x_new
        segment.times.append(t)
        segment.states.append(x.copy())
        steps += 1

    arc.meta['steps'] = steps
    arc.meta['stopped'] = arc.meta.get('stopped', 'horizon_t' if t >= T_max - t_eps else 'horizon_j')
    logger.info(f"Simulation finished at (t={t:.6g}, j={j}) after {steps} flow steps")
    return arc


# ==================== Switching signals ====================

@dataclass
class SwitchingSignal:
    """Right-continuous piecewise-constant signal: initial mode plus (time, new mode) switches"""
    initial_mode: int
    switches: List[tuple] = field(default_factory=list)
    horizon: float = math.inf

    def __post_init__(self):
        self.switches = [(float(t), int(p)) for t, p in self.switches]
        times = [t for t, _ in self.switches]
        if any(b < a for a, b in zip(times, times[1:])) or any(t < 0.0 for t in times):
            raise ConfigError('switch times must be nonnegative and nondecreasing')

    @property
    def times(self):
        return np.asarray([t for t, _ in self.switches], dtype=float)

    def mode_at(self, t):
        mode = self.initial_mode
        for ts, p in self.switches:
            if ts > t:
                break
            mode = p
        return mode

    def to_record(self):
        return {'initial_mode': self.initial_mode, 'horizon': self.horizon,
                'switches': [[t, p] for t, p in self.switches]}


def generate_adt_signal(params, mode_set, horizon, rng_seed=0, switch_probability=0.5,
                        candidate_rate=None, tau0=None, initial_mode=None):
    """
    Random switching signal satisfying the average dwell-time bound

    Switch candidates arrive as a Poisson process; a candidate becomes a switch
    with the given probability when the timer allows it (tau >= 1, consuming 1).

    Args:
        params: ADTParams
        mode_set: at least two modes
        horizon: end time T
        rng_seed: seed of the generator
        switch_probability: acceptance probability of an admissible candidate
        candidate_rate: candidate arrivals per second (default 2/tau_a)
        tau0: initial timer value (default N0)
        initial_mode: first mode (default the first in mode_set)

    Returns:
        SwitchingSignal on [0, horizon]
    """
    modes = list(mode_set)
    if len(modes) < 2:
        raise ConfigError('switching needs at least two modes')
    rng = np.random.default_rng(rng_seed)
    rate = 2.0 / params.tau_a if candidate_rate is None else float(candidate_rate)
    tau = params.N0 if tau0 is None else min(params.N0, max(0.0, float(tau0)))
    mode = modes[0] if initial_mode is None else initial_mode
    signal = SwitchingSignal(initial_mode=mode, horizon=float(horizon))
    t_last, t = 0.0, 0.0
    while rate > 0.0:
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        tau = min(params.N0, tau + (t - t_last) / params.tau_a)
        t_last = t
        if tau >= 1.0 and rng.random() < switch_probability:
            tau -= 1.0
            successors = [q for q in modes if q != mode]
            mode = successors[int(rng.integers(len(successors)))]
            signal.switches.append((t, mode))
    logger.debug(f"Generated ADT signal with {len(signal.switches)} switches on [0, {horizon}]")
    return signal


@dataclass
class ADTValidation:
    ok: bool
    worst_window: Optional[tuple]
    worst_margin: float
    n_switches: int

    def __bool__(self):
        return self.ok

    def to_record(self):
        return {'ok': self.ok, 'worst_window': None if self.worst_window is None else list(self.worst_window),
                'worst_margin': self.worst_margin, 'n_switches': self.n_switches}


def validate_adt(signal, params, tol=1e-12):
    """
    Check N(s, t) ≤ N0 + (t − s)/τ_a on every window bounded by switch times

    Returns:
        ADTValidation; worst_window is (t_start, t_end, count, allowed)
    """
    times = signal.times if isinstance(signal, SwitchingSignal) else np.asarray(sorted(signal), dtype=float)
    n = times.size
    if n == 0:
        return ADTValidation(ok=True, worst_window=None, worst_margin=params.N0, n_switches=0)
    first, last = np.triu_indices(n)
    counts = last - first + 1
    allowed = params.N0 + (times[last] - times[first]) / params.tau_a
    margins = allowed - counts
    k = int(np.argmin(margins))
    window = (float(times[first[k]]), float(times[last[k]]), int(counts[k]), float(allowed[k]))
    ok = bool(margins[k] >= -tol)
    if not ok:
        logger.info(f"ADT violated on window {window}")
    return ADTValidation(ok=ok, worst_window=window, worst_margin=float(margins[k]), n_switches=n)


# ==================== Switched cascades ====================

def switching_rule(modes, schedule, ip, it, ik):
    """
    Switch guard and successor choice

    Greedy (guard tau - 1, successor drawn uniformly from the other modes)
    without a schedule; otherwise the k-th scheduled switch fires at its time,
    k being the switch counter at index ik.

    Returns:
        (g_switch(t, state), next_mode(t, state, rng))
    """
    if schedule is None:
        def g_switch(t, state):
            return state[it] - 1.0

        def next_mode(t, state, rng):
            p = int(round(state[ip]))
            successors = [q for q in modes if q != p]
            return successors[int(rng.integers(len(successors)))]

        return g_switch, next_mode

    sched_times = schedule.times
    sched_modes = [q for _, q in schedule.switches]

    def g_switch(t, state):
        k = int(round(state[ik]))
        if k >= len(sched_times):
            return -1.0
        return t - sched_times[k]

    def next_mode(t, state, rng):
        return sched_modes[int(round(state[ik]))]

    return g_switch, next_mode


def cascade_labels(n_c, n_o):
    return [f"x{i + 1}" for i in range(n_c)] + [f"e{i + 1}" for i in range(n_o)] + ['p', 'tau', 'n_sw']


def build_cascade_system(dynamics, n_c, n_o, adt, mode_set=None, schedule=None, disturbance=None,
                         jump_maps=None, n_d=1):
    """
    Switched cascade x' = f_c,p(x, e), e' = f_o,p(e, d) as a hybrid system

    State layout: (x, e, p, tau, n_sw). Switching is greedy (a switch as soon as
    tau ≥ 1, successor drawn uniformly) unless a schedule is given, in which
    case switches happen at the scheduled times after an ADT validation.

    Args:
        dynamics: dict mode -> callable (x, e, d) -> (x', e')
        n_c, n_o: block dimensions
        n_d: disturbance dimension
        adt: ADTParams
        mode_set: modes (default the keys of dynamics)
        schedule: SwitchingSignal (validated against adt)
        disturbance: callable t -> d (zero when None)
        jump_maps: (g_c, g_o) applied at switches (identity when None)

    Returns:
        HybridSystemDef
    """
    modes = sorted(dynamics) if mode_set is None else list(mode_set)
    if sorted(modes) != sorted(dynamics):
        raise ConfigError(f"mode set {modes} does not match the dynamics {sorted(dynamics)}")
    if schedule is not None:
        check = validate_adt(schedule, adt)
        if not check.ok:
            raise ConfigError(f"scheduled switching violates the dwell-time bound on window {check.worst_window}")
    ix = slice(0, n_c)
    ie = slice(n_c, n_c + n_o)
    ip, it, ik = n_c + n_o, n_c + n_o + 1, n_c + n_o + 2
    zero_d = np.zeros(n_d)
    g_switch, next_mode = switching_rule(modes, schedule, ip, it, ik)

    def d_at(t):
        if disturbance is None:
            return zero_d
        return np.atleast_1d(np.asarray(disturbance(t), dtype=float))

    def flow(t, state):
        p = int(round(state[ip]))
        dx, de = dynamics[p](state[ix], state[ie], d_at(t))
        out = np.zeros_like(state)
        out[ix] = dx
        out[ie] = de
        return out

    def reset(t, state, rng):
        new = state.copy()
        if jump_maps is not None:
            g_c, g_o = jump_maps
            x, e = state[ix], state[ie]
            new[ix] = g_c(x, e)
            new[ie] = g_o(e, d_at(t))
        new[ip] = next_mode(t, state, rng)
        new[it] = max(0.0, state[it] - 1.0)
        new[ik] = state[ik] + 1.0
        return new

    def view(state):
        return {'x': state[ix], 'e': state[ie], 'p': int(round(state[ip])), 'tau': state[it]}

    return HybridSystemDef(
        flow=flow,
        guards=[Guard('switch', g_switch, reset, kind='switch')],
        labels=cascade_labels(n_c, n_o),
        mode_set=tuple(modes),
        timer=Timer(index=it, adt=adt),
        view=view,
        meta={'n_c': n_c, 'n_o': n_o, 'schedule': schedule is not None},
    )


def cascade_initial_state(x0, e0, mode, tau0):
    return np.concatenate([np.atleast_1d(x0), np.atleast_1d(e0), [float(mode), float(tau0), 0.0]]).astype(float)
