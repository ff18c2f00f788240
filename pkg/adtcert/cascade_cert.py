"""
Cascade Lyapunov certificates

Per-mode ISS data of the two cascade blocks (V_o for the driving e-subsystem,
V_c for the driven x-subsystem) are composed into

    V_p(x, e) = l_p(V_o(e)) + V_c(x),   l_p(s) = integral of nu_p over [0, s]

with nu_p a nondecreasing majorant of 4 * gamma_c / alpha_o. The decay rate
alpha_p, disturbance gain gamma_p, and the cross-mode jump gains chi and rho
follow from the comparison functions of the two blocks.

State evaluators accept a single vector (shape (n,)) or a batch (shape (N, n)).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import linalg

from adtcert import kfun
from adtcert.errors import AssumptionViolation, ConfigError, ConstructionError

logger = logging.getLogger(__name__)

# L3: the ratio gamma_c / alpha_o is evaluated down to this argument
L3_GRID = np.logspace(-1, -8, 36)
L3_CAP = 1e12
# slope of log(ratio) against -log(s) over the last two decades regarded as growth
L3_GROWTH_SLOPE = 0.05


# ==================== State evaluators ====================

@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """v ↦ vᵀ P v"""
    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, rtol=1e-12, atol=1e-14):
            raise ConfigError('quadratic form needs a symmetric square matrix')
        object.__setattr__(self, 'P', 0.5 * (P + P.T))

    @property
    def dim(self):
        return self.P.shape[0]

    @property
    def lam_min(self):
        return float(linalg.eigvalsh(self.P)[0])

    @property
    def lam_max(self):
        return float(linalg.eigvalsh(self.P)[-1])

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = np.einsum('...i,ij,...j->...', v, self.P, v)
        return float(out) if out.ndim == 0 else out

    def gradient(self, v):
        return 2.0 * np.asarray(v, dtype=float) @ self.P

    def to_record(self):
        return {'quadratic': self.P.tolist()}


@dataclass(frozen=True, eq=False)
class StateFunction:
    """User-supplied evaluator with an explicit gradient"""
    value: Callable
    grad: Callable
    dim: int
    name: str = 'custom'

    def __call__(self, v):
        out = np.asarray(self.value(np.asarray(v, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def gradient(self, v):
        return np.asarray(self.grad(np.asarray(v, dtype=float)), dtype=float)

    def to_record(self):
        return {'builtin': self.name}


# ==================== Certificate data ====================

@dataclass(frozen=True, eq=False)
class SubsystemCertificate:
    """ISS data of one mode: V_o with (α̲_o, ᾱ_o, α_o, γ_o) and V_c with its counterparts"""
    mode: int
    V_o: Any
    V_c: Any
    alpha_o_lower: kfun.ComparisonFunction
    alpha_o_upper: kfun.ComparisonFunction
    alpha_o: kfun.ComparisonFunction
    gamma_o: kfun.ComparisonFunction
    alpha_c_lower: kfun.ComparisonFunction
    alpha_c_upper: kfun.ComparisonFunction
    alpha_c: kfun.ComparisonFunction
    gamma_c: kfun.ComparisonFunction

    @property
    def n_c(self):
        return self.V_c.dim

    @property
    def n_o(self):
        return self.V_o.dim

    def to_record(self):
        record = {'mode': self.mode, 'V_o': self.V_o.to_record(), 'V_c': self.V_c.to_record()}
        for name in ('alpha_o_lower', 'alpha_o_upper', 'alpha_o', 'gamma_o',
                     'alpha_c_lower', 'alpha_c_upper', 'alpha_c', 'gamma_c'):
            record[name] = getattr(self, name).to_record()
        return record


def _identity_g_c(x, e):
    return np.asarray(x, dtype=float)


def _identity_g_o(e, d):
    return np.asarray(e, dtype=float)


@dataclass(frozen=True, eq=False)
class JumpBounds:
    """Growth bounds of the switching resets: |g_c| ≤ α̂_c(|(x,e)|), |g_o| ≤ α̂_o(|e|) + ρ̂_o(|d|)"""
    alpha_hat_c: kfun.ComparisonFunction
    alpha_hat_o: kfun.ComparisonFunction
    rho_hat_o: kfun.ComparisonFunction
    g_c: Callable = _identity_g_c
    g_o: Callable = _identity_g_o
    identity: bool = False

    @classmethod
    def identity_maps(cls):
        return cls(alpha_hat_c=kfun.linear(1.0), alpha_hat_o=kfun.linear(1.0), rho_hat_o=kfun.Zero(),
                   identity=True)


class CascadeLyapunov:
    """V_p(x, e) = l(V_o(e)) + V_c(x) with chain-rule gradient"""

    def __init__(self, V_o, V_c, ell, nu):
        self.V_o = V_o
        self.V_c = V_c
        self.ell = ell
        self.nu = nu

    @property
    def n_c(self):
        return self.V_c.dim

    @property
    def n_o(self):
        return self.V_o.dim

    @property
    def dim(self):
        return self.n_c + self.n_o

    def value(self, x, e):
        out = np.asarray(self.ell(self.V_o(e)), dtype=float) + np.asarray(self.V_c(x), dtype=float)
        return float(out) if out.ndim == 0 else out

    def gradient(self, x, e):
        """(∇_x V_p, ∇_e V_p)"""
        weight = np.asarray(self.nu(self.V_o(e)), dtype=float)
        grad_e = weight[..., None] * self.V_o.gradient(e) if weight.ndim else weight * self.V_o.gradient(e)
        return self.V_c.gradient(x), grad_e

    def split(self, xe):
        xe = np.asarray(xe, dtype=float)
        return xe[..., :self.n_c], xe[..., self.n_c:]

    def __call__(self, xe):
        """Evaluate on the stacked state (x, e)"""
        return self.value(*self.split(xe))

    def stacked_gradient(self, xe):
        gx, ge = self.gradient(*self.split(xe))
        return np.concatenate([gx, ge], axis=-1)


@dataclass(frozen=True, eq=False)
class ModeCascade:
    mode: int
    subsystem: SubsystemCertificate
    nu: kfun.ComparisonFunction
    ell: kfun.ComparisonFunction
    V: CascadeLyapunov
    alpha: kfun.ComparisonFunction
    gamma: kfun.ComparisonFunction
    theta: kfun.ComparisonFunction
    alpha_lower: kfun.ComparisonFunction
    alpha_upper: kfun.ComparisonFunction

    def to_record(self):
        return {name: getattr(self, name).to_record()
                for name in ('nu', 'ell', 'alpha', 'gamma', 'theta', 'alpha_lower', 'alpha_upper')}


@dataclass(frozen=True, eq=False)
class CascadeCertificate:
    modes: Dict[int, ModeCascade]
    chi: kfun.ComparisonFunction
    rho: kfun.ComparisonFunction
    jumps: Optional[JumpBounds] = None
    meta: dict = field(default_factory=dict)

    @property
    def mode_set(self):
        return sorted(self.modes)

    def mode(self, p):
        try:
            return self.modes[p]
        except KeyError:
            raise ConfigError(f"mode {p} is not part of the certificate (modes {self.mode_set})") from None

    def V(self, p, x, e):
        return self.mode(p).V.value(x, e)

    def alphas(self):
        return [m.alpha for m in self.modes.values()]

    def to_record(self):
        return {
            'modes': {int(p): m.to_record() for p, m in self.modes.items()},
            'chi': self.chi.to_record(),
            'rho': self.rho.to_record(),
        }


# ==================== Composition ====================

def build_nu_bar(cert, grid=None):
    """
    s ↦ γ_c(s)/α_o(s), checked to stay bounded as s → 0⁺

    Args:
        cert: SubsystemCertificate
        grid: decreasing positive evaluation points (default 1e-1 .. 1e-8)

    Returns:
        ComparisonFunction-like ratio (a Constant when both gains are linear)

    Raises:
        AssumptionViolation: the ratio is not finite or grows toward 0
    """
    nu_bar = kfun.ratio(cert.gamma_c, cert.alpha_o)
    if isinstance(nu_bar, kfun.Constant):
        return nu_bar
    grid = L3_GRID if grid is None else np.asarray(grid, dtype=float)
    values = np.asarray(nu_bar(grid), dtype=float)
    if not np.all(np.isfinite(values)) or np.max(values) > L3_CAP:
        raise AssumptionViolation(f"mode {cert.mode}: gamma_c/alpha_o is unbounded near 0")
    # compare the two smallest decades
    tail = grid[-1]
    ref = tail * 100.0
    v_tail, v_ref = float(nu_bar(tail)), float(nu_bar(ref))
    if v_tail > 0.0 and v_ref > 0.0:
        slope = math.log(v_tail / v_ref) / math.log(100.0)
        if slope > L3_GROWTH_SLOPE:
            raise AssumptionViolation(
                f"mode {cert.mode}: gamma_c/alpha_o grows like s^-{slope:.3g} as s -> 0")
    logger.debug(f"Mode {cert.mode}: nu_bar bounded by {np.max(values):.6g} on the L3 grid")
    return nu_bar


def compose_Vp(cert, nu_bar, nu_floor=None):
    """
    Build ν = 4·sup ν̄, l = ∫ν and the composed V_p

    Args:
        cert: SubsystemCertificate
        nu_bar: output of build_nu_bar
        nu_floor: positive constant used when ν̄ vanishes identically

    Returns:
        (nu, ell, CascadeLyapunov)

    Raises:
        ConstructionError: ν̄ ≡ 0 and no floor given (V_p would ignore e)
    """
    nu = kfun.nondecreasing_majorant(nu_bar, 4.0)
    if isinstance(nu, (kfun.Zero, kfun.Constant)) and nu(1.0) == 0.0:
        if nu_floor is None:
            raise ConstructionError(f"mode {cert.mode}: nu vanishes (no interconnection); pass nu_floor")
        nu = kfun.Constant(nu_floor)
    ell = kfun.integral_primitive(nu)
    return nu, ell, CascadeLyapunov(cert.V_o, cert.V_c, ell, nu)


def build_rates(cert, nu, ell):
    """
    α_p(s) = min{α_c(s/2), γ_c(½ l⁻¹(s))},  θ = α_o⁻¹∘(2γ_o),  γ_p = ν∘θ · γ_o
    """
    half = kfun.linear(0.5)
    alpha_p = kfun.pointwise_min(
        kfun.compose(cert.alpha_c, half),
        kfun.compose(cert.gamma_c, kfun.compose(half, kfun.inverse(ell))),
    )
    if isinstance(cert.gamma_o, kfun.Zero):
        return alpha_p, kfun.Zero(), kfun.Zero()
    theta = kfun.compose(kfun.inverse(cert.alpha_o), kfun.scale(2.0, cert.gamma_o))
    gamma_p = kfun.product(kfun.compose(nu, theta), cert.gamma_o)
    return alpha_p, gamma_p, theta


def sandwich_bounds(cert, ell):
    """
    α̲_p(s) = min{l(α̲_o(s/√2)), α̲_c(s/√2)},  ᾱ_p(s) = l(ᾱ_o(s)) + ᾱ_c(s)
    """
    shrink = kfun.linear(1.0 / math.sqrt(2.0))
    lower = kfun.pointwise_min(
        kfun.compose(ell, kfun.compose(cert.alpha_o_lower, shrink)),
        kfun.compose(cert.alpha_c_lower, shrink),
    )
    upper = kfun.fsum(kfun.compose(ell, cert.alpha_o_upper), cert.alpha_c_upper)
    return lower, upper


def _identity_chi_term(mp, mq):
    """V_q ≤ f_o(l_p(V_o,p)) + f_c(V_c,p) under identity jumps"""
    sp, sq = mp.subsystem, mq.subsystem
    f_o = kfun.compose(mq.ell, kfun.compose(
        sq.alpha_o_upper, kfun.compose(kfun.inverse(sp.alpha_o_lower), kfun.inverse(mp.ell))))
    f_c = kfun.compose(sq.alpha_c_upper, kfun.inverse(sp.alpha_c_lower))
    if isinstance(f_o, kfun.Linear) and isinstance(f_c, kfun.Linear):
        # r_o·A + r_c·B ≤ max(r_o, r_c)·(A + B)
        return kfun.linear(max(f_o.a, f_c.a))
    return kfun.fsum(f_o, f_c)


def build_jump_gains(modes, jumps=None):
    """
    Cross-mode jump gains χ and ρ with V_q(g_c, g_o) ≤ χ(V_p) + ρ(|d|)

    General resets use

        χ(s) = max_{p,q} l_q∘ᾱ_o,q(2α̂_o∘α̲_p⁻¹(s)) + ᾱ_c,q(α̂_c∘α̲_p⁻¹(s))
        ρ(s) = max_q l_q∘ᾱ_o,q(2ρ̂_o(s))

    Identity resets bound each block separately, which reduces to the max
    eigenvalue-ratio gain for quadratic certificates, with ρ ≡ 0.

    Args:
        modes: dict mode -> ModeCascade
        jumps: JumpBounds (identity maps when None)

    Returns:
        (chi, rho)
    """
    jumps = JumpBounds.identity_maps() if jumps is None else jumps
    items = list(modes.values())
    if jumps.identity:
        chi = kfun.pointwise_max(*(_identity_chi_term(mp, mq) for mp in items for mq in items))
        return chi, kfun.Zero()

    terms = []
    for mp in items:
        lower_inv = kfun.inverse(mp.alpha_lower)
        arg_o = kfun.scale(2.0, kfun.compose(jumps.alpha_hat_o, lower_inv))
        arg_c = kfun.compose(jumps.alpha_hat_c, lower_inv)
        for mq in items:
            sq = mq.subsystem
            terms.append(kfun.fsum(
                kfun.compose(mq.ell, kfun.compose(sq.alpha_o_upper, arg_o)),
                kfun.compose(sq.alpha_c_upper, arg_c),
            ))
    chi = kfun.pointwise_max(*terms)
    if isinstance(jumps.rho_hat_o, kfun.Zero):
        rho = kfun.Zero()
    else:
        rho = kfun.pointwise_max(*(
            kfun.compose(mq.ell, kfun.compose(mq.subsystem.alpha_o_upper, kfun.scale(2.0, jumps.rho_hat_o)))
            for mq in items))
    return chi, rho


def compose_mode(cert, nu_floor=None, nu=None):
    """
    Single-mode part of the cascade construction

    An explicit nu (a Constant at least 4·sup ν̄) replaces the majorant, as
    used by loops whose gains were synthesized for a fixed weight.
    """
    nu_bar = build_nu_bar(cert)
    if nu is None:
        nu, ell, V = compose_Vp(cert, nu_bar, nu_floor=nu_floor)
    else:
        required = kfun.nondecreasing_majorant(nu_bar, 4.0)
        grid = kfun.MAJORANT_GRID
        if np.any(np.asarray(nu(grid)) < np.asarray(required(grid)) * (1.0 - 1e-12)):
            raise ConstructionError(f"mode {cert.mode}: supplied nu is below 4 gamma_c/alpha_o")
        ell = kfun.integral_primitive(nu)
        V = CascadeLyapunov(cert.V_o, cert.V_c, ell, nu)
    alpha, gamma, theta = build_rates(cert, nu, ell)
    lower, upper = sandwich_bounds(cert, ell)
    return ModeCascade(mode=cert.mode, subsystem=cert, nu=nu, ell=ell, V=V, alpha=alpha,
                       gamma=gamma, theta=theta, alpha_lower=lower, alpha_upper=upper)


def compose_cascade(certs, jumps=None, nu_floor=None, nus=None):
    """
    Full cascade certificate from per-mode subsystem certificates

    Args:
        certs: iterable of SubsystemCertificate (or dict keyed by mode)
        jumps: JumpBounds of the switching resets (identity when None)
        nu_floor: passed to compose_Vp
        nus: optional dict mode -> explicit nu

    Returns:
        CascadeCertificate
    """
    certs = list(certs.values()) if isinstance(certs, dict) else list(certs)
    if not certs:
        raise ConfigError('at least one mode certificate is required')
    modes = {}
    for cert in certs:
        if cert.mode in modes:
            raise ConfigError(f"duplicate mode {cert.mode}")
        modes[cert.mode] = compose_mode(cert, nu_floor=nu_floor, nu=(nus or {}).get(cert.mode))
    chi, rho = build_jump_gains(modes, jumps)
    logger.info(f"Composed cascade certificate for modes {sorted(modes)}: chi kind {chi.kind}")
    return CascadeCertificate(modes=modes, chi=chi, rho=rho, jumps=jumps)
