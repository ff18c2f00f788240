"""
Average dwell-time thresholds and the hybrid Lyapunov function W

For a cascade certificate with decay rates alpha_p and jump gain chi, the
switched system is ISS whenever the average dwell-time exceeds

    zeta* = sup_{s >= 0} integral over [s, (1+eps)·chi(s)] of dr / psi(r)

where psi ≤ min{c0·s, alpha_p(s)}. The function

    W = exp(2·c0·zeta·tau) · phi(V_p [+ eta_o + eta_c]),
    phi(s) = exp(integral over [1, s] of 2·c0 / psi(r) dr)

then decreases along flows and contracts by exp(2·c0·(zeta* - zeta)) at
switches for any zeta between zeta* and tau_a.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import minimize_scalar

from adtcert import kfun
from adtcert.errors import (
    ConfigError, ConstructionError, DivergentBound, DomainError, QuadratureError, RangeError,
)

logger = logging.getLogger(__name__)

# Supremum search for zeta*
SEARCH_LOW = 1e-8
SEARCH_HIGH = 1e8
SEARCH_SEEDS = 400
TAIL_FACTOR = 10.0
TAIL_STEPS = 3
TAIL_TOL = 1e-9

# phi cache: nodes in u = ln(s), 50 per decade
PHI_LOG_LOW = math.log(1e-16)
PHI_LOG_HIGH = math.log(1e16)
PHI_NODES_PER_DECADE = 50
PHI_GAUSS_POINTS = 8
PHI_RTOL = 1e-10

PSI_CHECK_GRID = np.logspace(-8, 8, 161)


# ==================== psi ====================

@dataclass(frozen=True)
class PsiFunction:
    psi: kfun.ComparisonFunction
    c0: float

    def __call__(self, s):
        return self.psi(s)

    def to_record(self):
        return {'psi': self.psi.to_record(), 'c0': self.c0}


def _check_psi(psi, alphas, c0):
    values = np.asarray(psi(PSI_CHECK_GRID), dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0) or np.any(np.diff(values) <= 0.0):
        raise ConstructionError('psi is not strictly increasing and positive on (0, inf)')
    bound = c0 * PSI_CHECK_GRID
    for alpha in alphas:
        bound = np.minimum(bound, np.asarray(alpha(PSI_CHECK_GRID), dtype=float))
    if np.any(values > bound * (1.0 + 1e-12)):
        raise ConstructionError('psi exceeds min{c0*s, alpha_p(s)} on the check grid')


def build_psi(alphas, c0):
    """
    ψ = min{c0·s, α_1, ..., α_P}

    Power-law decay rates collapse to a closed form (linear, or the two-piece
    super-/sub-linear forms).

    Args:
        alphas: per-mode decay rates (class K-infinity)
        c0: positive slope bound

    Returns:
        PsiFunction

    Raises:
        ConstructionError: a rate is bounded or the result is not strictly increasing
    """
    c0 = float(c0)
    if not c0 > 0.0:
        raise ConfigError(f"c0 must be positive, got {c0}")
    alphas = list(alphas.values()) if isinstance(alphas, dict) else list(alphas)
    for alpha in alphas:
        if not alpha.unbounded or not alpha.is_class_k:
            raise ConstructionError(f"decay rate of kind {alpha.kind} is not of class K-infinity")
    psi = kfun.pointwise_min(kfun.linear(c0), *alphas)
    _check_psi(psi, alphas, c0)
    logger.debug(f"psi built: {psi.to_record()}")
    return PsiFunction(psi=psi, c0=c0)


def power_law_psi(kind, a, k=1.0):
    """
    Standard ψ for power-law decay a·s^k with c0 = a

    linear: a·s;  super_linear (k > 1): a·s^k on [0, 1], a·s beyond;
    sub_linear (k < 1): a·s on [0, 1], a·s^k beyond
    """
    a, k = float(a), float(k)
    if kind == 'linear':
        return PsiFunction(psi=kfun.linear(a), c0=a)
    if kind == 'super_linear' and k > 1.0:
        return PsiFunction(psi=kfun.pointwise_min(kfun.linear(a), kfun.power_law(a, k)), c0=a)
    if kind == 'sub_linear' and 0.0 < k < 1.0:
        return PsiFunction(psi=kfun.pointwise_min(kfun.linear(a), kfun.power_law(a, k)), c0=a)
    raise ConfigError(f"no psi recipe for kind '{kind}' with exponent {k}")


# ==================== phi ====================

class PhiFunction:
    """
    φ(s) = exp(∫_1^s 2c0/ψ(r) dr), φ(0) = 0

    Closed form for power-law ψ; otherwise the log of φ is tabulated at
    log-spaced nodes and completed by Gauss-Legendre quadrature from the
    nearest node below.
    """

    def __init__(self, psi):
        self.psi = psi
        self.c0 = psi.c0
        if isinstance(psi.psi, (kfun.PowerLaw, kfun.Linear)):
            self.closed_form = (psi.psi.a, psi.psi.k)
        else:
            self.closed_form = None
            self._build_cache()

    # --- closed form ---

    def _log_phi_closed(self, s):
        b, k = self.closed_form
        if k == 1.0:
            return (2.0 * self.c0 / b) * np.log(s)
        return 2.0 * self.c0 / (b * (1.0 - k)) * (np.power(s, 1.0 - k) - 1.0)

    # --- tabulated ---

    def _integrand(self, u):
        # d/du of log φ(e^u) = 2c0·e^u/ψ(e^u)
        r = np.exp(u)
        return 2.0 * self.c0 * r / np.asarray(self.psi.psi(r), dtype=float)

    def _gauss(self, lo, hi, points):
        x, w = leggauss(points)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = mid[..., None] + half[..., None] * x
        return half * np.sum(w * self._integrand(nodes), axis=-1)

    def _quad(self, lo, hi):
        with warnings.catch_warnings():
            warnings.simplefilter('error', IntegrationWarning)
            try:
                value, err = quad(self._integrand, lo, hi, epsabs=1e-13, epsrel=PHI_RTOL, limit=200)
            except IntegrationWarning as e:
                raise QuadratureError(f"phi: adaptive quadrature failed on [{lo:.4g}, {hi:.4g}]: {e}") from e
        return value

    def _build_cache(self):
        n_nodes = int(round((PHI_LOG_HIGH - PHI_LOG_LOW) / math.log(10.0) * PHI_NODES_PER_DECADE)) + 1
        nodes = np.linspace(PHI_LOG_LOW, PHI_LOG_HIGH, n_nodes)
        lo, hi = nodes[:-1], nodes[1:]
        coarse = self._gauss(lo, hi, PHI_GAUSS_POINTS)
        fine = self._gauss(lo, hi, 2 * PHI_GAUSS_POINTS)
        bad = np.abs(fine - coarse) > PHI_RTOL * np.maximum(1.0, np.abs(fine))
        for i in np.flatnonzero(bad):
            fine[i] = self._quad(lo[i], hi[i])
        logger.debug(f"phi cache: {n_nodes} nodes, {int(np.sum(bad))} intervals refined adaptively")
        cumulative = np.concatenate(([0.0], np.cumsum(fine)))
        # anchor log φ(1) = 0
        below_one = int(np.searchsorted(nodes, 0.0, side='right')) - 1
        anchor = cumulative[below_one] + float(self._gauss(nodes[below_one], 0.0, 2 * PHI_GAUSS_POINTS))
        self._nodes = nodes
        self._log_values = cumulative - anchor

    def _log_phi_tabulated(self, s):
        u = np.log(s)
        inside = (u >= self._nodes[0]) & (u <= self._nodes[-1])
        out = np.empty_like(u)
        if np.any(inside):
            ui = u[inside]
            idx = np.clip(np.searchsorted(self._nodes, ui, side='right') - 1, 0, self._nodes.size - 2)
            base = self._nodes[idx]
            out[inside] = self._log_values[idx] + self._gauss(base, ui, 2 * PHI_GAUSS_POINTS)
        for i in np.flatnonzero(~inside):
            edge = 0 if u[i] < self._nodes[0] else -1
            out[i] = self._log_values[edge] + self._quad(self._nodes[edge], u[i])
        return out

    # --- public ---

    def log(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(np.isnan(s)) or np.any(s < 0.0):
            raise DomainError('phi: argument must be nonnegative')
        flat = np.atleast_1d(s).ravel()
        out = np.full(flat.shape, -np.inf)
        positive = flat > 0.0
        if np.any(positive):
            evaluator = self._log_phi_closed if self.closed_form is not None else self._log_phi_tabulated
            out[positive] = evaluator(flat[positive])
        out = out.reshape(np.shape(s))
        return float(out) if out.ndim == 0 else out

    def __call__(self, s):
        out = np.exp(np.asarray(self.log(s), dtype=float))
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        """φ'(s) = φ(s)·2c0/ψ(s), with φ'(0) = 0"""
        s = np.asarray(s, dtype=float)
        safe = np.where(s > 0.0, s, 1.0)
        out = np.where(s > 0.0, np.asarray(self(safe)) * 2.0 * self.c0 / np.asarray(self.psi.psi(safe)), 0.0)
        return float(out) if out.ndim == 0 else out

    def is_continuous_at_zero(self):
        """φ(10^-k) decreases monotonically toward 0"""
        near_zero = np.asarray(self(np.logspace(-1, -8, 8)), dtype=float)
        return bool(np.all(np.diff(near_zero) < 0.0) and near_zero[-1] <= 1e-6)


def build_phi(psi):
    """
    φ for the given ψ; raises ConstructionError when φ does not extend continuously by 0
    """
    phi = PhiFunction(psi)
    if not phi.is_continuous_at_zero():
        raise ConstructionError('phi does not vanish continuously at 0 (psi grows too slowly near 0)')
    return phi


# ==================== zeta* ====================

@dataclass
class ZetaStar:
    value: float
    argmax_s: Optional[float]
    divergent: bool
    epsilon: float
    closed_form: bool = False
    domain_limit: Optional[float] = None
    evaluations: int = 0

    def require_finite(self):
        if self.divergent:
            raise DivergentBound(f"no finite dwell-time bound: objective increases beyond s={self.argmax_s}", result=self)
        return self.value

    def to_record(self):
        return {
            'zeta_star': None if self.divergent else float(self.value),
            'divergent': self.divergent,
            'argmax_s': None if self.argmax_s is None else float(self.argmax_s),
            'epsilon': self.epsilon,
            'closed_form': self.closed_form,
            'domain_limit': self.domain_limit,
        }


def zeta_star_linear(mu, a, epsilon):
    """(1/a)·ln((1+ε)μ), clamped at 0"""
    return max(0.0, math.log((1.0 + epsilon) * mu) / a)


class _Objective:
    """J(u) = ∫_{e^u}^{(1+ε)χ(e^u)} dr/ψ(r) in log coordinates"""

    def __init__(self, chi, psi, epsilon):
        self.chi = chi
        self.psi = psi
        self.factor = 1.0 + epsilon
        self.evaluations = 0

    def _integrand(self, v):
        r = math.exp(v)
        return r / float(self.psi.psi(r))

    def __call__(self, u):
        self.evaluations += 1
        s = math.exp(u)
        try:
            upper = self.factor * float(self.chi(s))
        except (DomainError, RangeError):
            return math.nan
        if upper <= 0.0:
            return -math.inf
        lo, hi = u, math.log(upper)
        if lo == hi:
            return 0.0
        sign = 1.0
        if hi < lo:
            lo, hi, sign = hi, lo, -1.0
        with warnings.catch_warnings():
            warnings.simplefilter('error', IntegrationWarning)
            try:
                value, _ = quad(self._integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
            except IntegrationWarning as e:
                raise QuadratureError(f"zeta*: quadrature failed at s={s:.4g}: {e}") from e
        return sign * value


def _tail_diverges(objective, u_edge, direction, base):
    """Three successive ×10 boundary extensions that keep increasing without decay"""
    prev = base
    increments = []
    for step in range(1, TAIL_STEPS + 1):
        value = objective(u_edge + direction * step * math.log(TAIL_FACTOR))
        if not math.isfinite(value):
            return False, prev
        increments.append(value - prev)
        prev = max(prev, value)
    tol = TAIL_TOL * max(1.0, abs(base))
    growing = all(inc > tol for inc in increments) and increments[-1] >= 0.5 * increments[0]
    return growing, prev


def compute_zeta_star(chi, psi, epsilon, closed_form=True):
    """
    Average dwell-time threshold sup_s ∫_s^{(1+ε)χ(s)} dr/ψ(r)

    The supremum is searched over 400 log-spaced seeds in [1e-8, 1e8] and
    refined with a bounded golden-section/Brent step around the grid argmax.
    An objective still increasing across three ×10 extensions of either
    boundary marks the bound as divergent.

    Args:
        chi: jump gain (class K-infinity)
        psi: PsiFunction
        epsilon: nonnegative margin (0 for the sampled-loop variant)
        closed_form: use (1/a)·ln((1+ε)μ) when χ and ψ are both linear

    Returns:
        ZetaStar (call require_finite() to raise DivergentBound)
    """
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    if closed_form and isinstance(chi, kfun.Linear) and isinstance(psi.psi, kfun.Linear):
        value = zeta_star_linear(chi.a, psi.psi.a, epsilon)
        logger.info(f"zeta* (closed form) = {value:.6g}")
        return ZetaStar(value=value, argmax_s=1.0, divergent=False, epsilon=epsilon, closed_form=True)
    if isinstance(chi, kfun.Zero):
        return ZetaStar(value=0.0, argmax_s=None, divergent=False, epsilon=epsilon)

    objective = _Objective(chi, psi, epsilon)
    us = np.linspace(math.log(SEARCH_LOW), math.log(SEARCH_HIGH), SEARCH_SEEDS)
    values = np.array([objective(u) for u in us])
    finite = np.isfinite(values)
    if not np.any(finite):
        raise ConstructionError('zeta*: objective is not evaluable on the search grid')
    domain_limit = None
    if not finite[-1]:
        domain_limit = float(math.exp(us[finite][-1]))
        logger.warning(f"zeta*: chi is not evaluable beyond s={domain_limit:.4g}; search truncated")

    masked = np.where(finite, values, -np.inf)
    i = int(np.argmax(masked))
    best, best_u = float(masked[i]), float(us[i])

    lo_u = us[max(i - 1, 0)]
    hi_u = us[min(i + 1, us.size - 1)]
    def negated(u):
        value = objective(u)
        return -value if math.isfinite(value) else math.inf

    if hi_u > lo_u:
        refined = minimize_scalar(negated, bounds=(lo_u, hi_u), method='bounded', options={'xatol': 1e-10})
        if refined.success and -refined.fun > best:
            best, best_u = float(-refined.fun), float(refined.x)

    divergent = False
    first = int(np.argmax(finite))
    last = int(finite.size - 1 - np.argmax(finite[::-1]))
    if finite[0]:
        grows, edge_value = _tail_diverges(objective, us[first], -1.0, float(values[first]))
        divergent |= grows
        if edge_value > best:
            best, best_u = edge_value, float(us[first]) - TAIL_STEPS * math.log(TAIL_FACTOR)
    if finite[-1]:
        grows, edge_value = _tail_diverges(objective, us[last], 1.0, float(values[last]))
        divergent |= grows
        if edge_value > best:
            best, best_u = edge_value, float(us[last]) + TAIL_STEPS * math.log(TAIL_FACTOR)

    value = math.inf if divergent else max(0.0, best)
    result = ZetaStar(value=value, argmax_s=math.exp(best_u), divergent=divergent, epsilon=epsilon,
                      domain_limit=domain_limit, evaluations=objective.evaluations)
    if divergent:
        logger.warning(f"zeta*: objective keeps increasing at a boundary (last argmax s={result.argmax_s:.4g})")
    else:
        logger.info(f"zeta* = {value:.6g} at s = {result.argmax_s:.4g} ({objective.evaluations} evaluations)")
    return result


# ==================== W ====================

@dataclass
class WFunction:
    zeta: float
    c0: float
    phi: PhiFunction
    cascade: object
    eta_terms: bool = False
    zeta_star: float = 0.0
    tau_a: float = math.inf
    lam: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def jump_contraction(self):
        """Factor exp(2c0(ζ* − ζ)) < 1 bounding W⁺/W at switches"""
        return math.exp(2.0 * self.c0 * (self.zeta_star - self.zeta))

    def value(self, x, e, p, tau, eta_o=0.0, eta_c=0.0):
        arg = np.asarray(self.cascade.V(p, x, e), dtype=float)
        if self.eta_terms:
            arg = arg + eta_o + eta_c
        out = np.exp(2.0 * self.c0 * self.zeta * np.asarray(tau, dtype=float)) * np.asarray(self.phi(arg))
        return float(out) if out.ndim == 0 else out

    def to_record(self):
        return {'zeta': self.zeta, 'c0': self.c0, 'zeta_star': self.zeta_star, 'tau_a': self.tau_a,
                'lambda': self.lam, 'eta_terms': self.eta_terms, 'jump_contraction': self.jump_contraction}


def choose_zeta(zeta_star, tau_a, lam=1.0):
    """Midpoint of (ζ*, λτ_a)"""
    return 0.5 * (zeta_star + lam * tau_a)


def build_W(cascade, psi, zeta_star, tau_a, zeta=None, lam=1.0, eta_terms=False, phi=None):
    """
    Hybrid Lyapunov function W for the given dwell-time

    Args:
        cascade: CascadeCertificate (anything with V(p, x, e))
        psi: PsiFunction
        zeta_star: threshold from compute_zeta_star (float or ZetaStar)
        tau_a: average dwell-time of the switching signal
        zeta: value in (ζ*, λτ_a); midpoint when None
        lam: λ of the sampled-loop criteria (1 for switched cascades)
        eta_terms: add η_o + η_c to the argument of φ
        phi: prebuilt PhiFunction (built from psi when None)

    Raises:
        ConfigError: ζ outside (ζ*, λτ_a)
    """
    if isinstance(zeta_star, ZetaStar):
        zeta_star = zeta_star.require_finite()
    zeta = choose_zeta(zeta_star, tau_a, lam) if zeta is None else float(zeta)
    if not zeta_star < zeta < lam * tau_a:
        raise ConfigError(f"zeta={zeta:.6g} must lie in (zeta*={zeta_star:.6g}, lambda*tau_a={lam * tau_a:.6g})")
    phi = build_phi(psi) if phi is None else phi
    return WFunction(zeta=zeta, c0=psi.c0, phi=phi, cascade=cascade, eta_terms=eta_terms,
                     zeta_star=zeta_star, tau_a=tau_a, lam=lam)


def _field(state, name, default=None):
    if isinstance(state, dict):
        return state.get(name, default)
    return getattr(state, name, default)


def eval_W(wf, state):
    """
    W at a hybrid state given as a mapping (or object) with x, e, p, tau and
    optionally eta_o, eta_c
    """
    return wf.value(_field(state, 'x'), _field(state, 'e'), _field(state, 'p'), _field(state, 'tau', 0.0),
                    _field(state, 'eta_o', 0.0), _field(state, 'eta_c', 0.0))


def w_flow_rate(wf, tau_a=None):
    """Guaranteed flow decay rate a_W = 2c0(λ − ζ/τ_a) of W (λ = 1 for switched cascades)"""
    tau_a = wf.tau_a if tau_a is None else tau_a
    return 2.0 * wf.c0 * (wf.lam - wf.zeta / tau_a)
