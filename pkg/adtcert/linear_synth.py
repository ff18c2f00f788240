"""
Quadratic certificates for linear cascade modes

Solves the Lyapunov equations of every mode, extracts decay rates and gains,
composes the linear-case cascade certificate and produces the dwell-time
bounds of the linear corollary and of the event-triggered gain formulas.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from adtcert import kfun
from adtcert.cascade_cert import (
    CascadeCertificate, ModeCascade, QuadraticForm, SubsystemCertificate,
    build_nu_bar, build_rates, compose_Vp, sandwich_bounds,
)
from adtcert.errors import ConfigError, ConstructionError, IllConditioned, NotHurwitz

logger = logging.getLogger(__name__)

LYAPUNOV_RTOL = 1e-10


def _matrix(value, name):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite 2-D matrix")
    return arr


@dataclass(frozen=True, eq=False)
class LinearCascadeMode:
    """
    x' = A x + B e,  e' = F e + G d

    lipschitz_c bounds the x-only part of the true x-flow that the linear model
    leaves out: f_c(x, e) = A x + B_θ e + r(x) with |r(x)| <= lipschitz_c·|x|
    and ‖P_c B_θ‖ <= ‖P_c B‖.
    """
    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    G: np.ndarray
    mode: int = 1
    lipschitz_c: float = 0.0

    def __post_init__(self):
        for name in ('A', 'B', 'F', 'G'):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        n_c, n_o = self.A.shape[0], self.F.shape[0]
        if self.A.shape != (n_c, n_c) or self.F.shape != (n_o, n_o):
            raise ConfigError(f"mode {self.mode}: A and F must be square")
        if self.B.shape != (n_c, n_o):
            raise ConfigError(f"mode {self.mode}: B must be {n_c}x{n_o}, got {self.B.shape}")
        if self.G.shape[0] != n_o:
            raise ConfigError(f"mode {self.mode}: G must have {n_o} rows, got {self.G.shape}")
        if not (math.isfinite(self.lipschitz_c) and self.lipschitz_c >= 0.0):
            raise ConfigError(f"mode {self.mode}: lipschitz_c must be finite and nonnegative, got {self.lipschitz_c}")

    @property
    def n_c(self):
        return self.A.shape[0]

    @property
    def n_o(self):
        return self.F.shape[0]

    @property
    def n_d(self):
        return self.G.shape[1]

    def f_c(self, x, e):
        return self.A @ x + self.B @ e

    def f_o(self, e, d):
        return self.F @ e + self.G @ d

    def __call__(self, x, e, d):
        return self.f_c(x, e), self.f_o(e, d)

    @classmethod
    def from_record(cls, record, mode):
        try:
            return cls(record['A'], record['B'], record['F'], record['G'], mode=mode,
                       lipschitz_c=float(record.get('lipschitz_c', 0.0)))
        except KeyError as e:
            raise ConfigError(f"mode {mode}: linear record is missing {e}") from e

    def to_record(self):
        record = {'A': self.A.tolist(), 'B': self.B.tolist(), 'F': self.F.tolist(), 'G': self.G.tolist()}
        if self.lipschitz_c:
            record['lipschitz_c'] = float(self.lipschitz_c)
        return record


@dataclass(frozen=True, eq=False)
class QuadraticCertificate:
    mode: int
    P_c: np.ndarray
    P_o: np.ndarray
    Q_c: np.ndarray
    Q_o: np.ndarray
    a_c: float
    a_o: float
    gbar_c: float
    gbar_o: float
    nu_bar: float
    pcb_norm: float = 0.0
    pog_norm: float = 0.0
    q_c: float = 0.0

    @property
    def a_p(self):
        return min(self.a_c, 0.75 * self.a_o)

    @property
    def gbar_p(self):
        return 4.0 * self.nu_bar * self.gbar_o

    def eig_bounds(self):
        """(λmin(P_c), λmax(P_c), λmin(P_o), λmax(P_o))"""
        ec = linalg.eigvalsh(self.P_c)
        eo = linalg.eigvalsh(self.P_o)
        return ec[0], ec[-1], eo[0], eo[-1]

    def subsystem_certificate(self):
        """Comparison-function form of the quadratic certificate"""
        lc_min, lc_max, lo_min, lo_max = self.eig_bounds()
        return SubsystemCertificate(
            mode=self.mode,
            V_o=QuadraticForm(self.P_o),
            V_c=QuadraticForm(self.P_c),
            alpha_o_lower=kfun.power_law(lo_min, 2.0),
            alpha_o_upper=kfun.power_law(lo_max, 2.0),
            alpha_o=kfun.linear(self.a_o),
            gamma_o=kfun.power_law(self.gbar_o, 2.0) if self.gbar_o > 0.0 else kfun.Zero(),
            alpha_c_lower=kfun.power_law(lc_min, 2.0),
            alpha_c_upper=kfun.power_law(lc_max, 2.0),
            alpha_c=kfun.linear(self.a_c),
            gamma_c=kfun.linear(self.gbar_c) if self.gbar_c > 0.0 else kfun.Zero(),
        )

    def to_record(self):
        return {
            'mode': self.mode,
            'P_c': self.P_c.tolist(), 'P_o': self.P_o.tolist(),
            'Q_c': self.Q_c.tolist(), 'Q_o': self.Q_o.tolist(),
            'a_c': float(self.a_c), 'a_o': float(self.a_o),
            'gbar_c': float(self.gbar_c), 'gbar_o': float(self.gbar_o),
            'nu_bar': float(self.nu_bar), 'a_p': float(self.a_p), 'q_c': float(self.q_c),
        }


@dataclass(frozen=True)
class CorollaryBound:
    a: float
    chibar: float
    tau_a_min: float
    a_p: dict = field(default_factory=dict)

    def to_record(self):
        return {'a': self.a, 'chibar': self.chibar, 'tau_a_min': self.tau_a_min,
                'a_p': {int(p): float(v) for p, v in self.a_p.items()}}


# ==================== Lyapunov equations ====================

def spectral_abscissa(A):
    return float(np.max(np.real(linalg.eigvals(A))))


def solve_lyapunov(A, Q):
    """
    Solve Aᵀ P + P A = -Q for symmetric positive definite P

    Dense Kronecker linearization of the n² unknowns with one step of iterative
    refinement, residual-checked.

    Args:
        A: square Hurwitz matrix
        Q: symmetric positive definite matrix

    Returns:
        P as a symmetric ndarray

    Raises:
        NotHurwitz: A has an eigenvalue with nonnegative real part
        IllConditioned: residual target 1e-10·‖Q‖_F missed or P not positive definite
    """
    A = _matrix(A, 'A')
    Q = _matrix(Q, 'Q')
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ConfigError(f"Lyapunov equation needs square matrices of equal size, got {A.shape} and {Q.shape}")
    abscissa = spectral_abscissa(A)
    if abscissa >= 0.0:
        raise NotHurwitz(f"matrix is not Hurwitz (spectral abscissa {abscissa:.6g})")

    identity = np.eye(n)
    # vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major vec
    kron = np.kron(identity, A.T) + np.kron(A.T, identity)
    rhs = -Q.reshape(-1, order='F')
    vec_p = linalg.solve(kron, rhs)
    residual_vec = kron @ vec_p - rhs
    vec_p = vec_p - linalg.solve(kron, residual_vec)
    P = vec_p.reshape((n, n), order='F')
    P = 0.5 * (P + P.T)

    q_norm = linalg.norm(Q, 'fro')
    residual = linalg.norm(A.T @ P + P @ A + Q, 'fro')
    if residual > LYAPUNOV_RTOL * q_norm:
        raise IllConditioned(f"Lyapunov residual {residual:.3e} exceeds {LYAPUNOV_RTOL:.0e}·‖Q‖_F")
    if linalg.eigvalsh(P)[0] <= 0.0:
        raise IllConditioned('Lyapunov solution is not positive definite')
    logger.debug(f"Lyapunov solve n={n}: residual {residual:.3e}")
    return P


def _spd(Q, n, name):
    Q = np.eye(n) if Q is None else _matrix(Q, name)
    if Q.shape != (n, n) or not np.allclose(Q, Q.T) or linalg.eigvalsh(Q)[0] <= 0.0:
        raise ConfigError(f"{name} must be a symmetric positive definite {n}x{n} matrix")
    return Q


def quad_cert_rates(mode, Q_c=None, Q_o=None):
    """
    Quadratic certificate of one linear cascade mode

    V_c = xᵀP_c x and V_o = eᵀP_o e with rates a = q/(2λmax(P)),
    γ̄_o = 2‖P_o G‖²/λmin(Q_o) against |d|² and γ̄_c = 2‖P_c B‖²/(q_c·λmin(P_o))
    against V_o. q_o = λmin(Q_o) and q_c = λmin(Q_c) − 2·lipschitz_c·λmax(P_c)
    is the decay left after the unmodelled x-flow. Q defaults to the identity.

    Raises:
        NotHurwitz, IllConditioned: from solve_lyapunov
        ConstructionError: lipschitz_c leaves no decay (q_c <= 0)
    """
    Q_c = _spd(Q_c, mode.n_c, 'Q_c')
    Q_o = _spd(Q_o, mode.n_o, 'Q_o')
    P_c = solve_lyapunov(mode.A, Q_c)
    P_o = solve_lyapunov(mode.F, Q_o)

    lam_qc, lam_qo = linalg.eigvalsh(Q_c)[0], linalg.eigvalsh(Q_o)[0]
    eig_pc, eig_po = linalg.eigvalsh(P_c), linalg.eigvalsh(P_o)
    q_c = lam_qc - 2.0 * mode.lipschitz_c * eig_pc[-1]
    if q_c <= 0.0:
        raise ConstructionError(f"mode {mode.mode}: lipschitz_c={mode.lipschitz_c} exceeds the decay of V_c "
                                f"(lambda_min(Q_c)={lam_qc:.6g}, lambda_max(P_c)={eig_pc[-1]:.6g})")
    a_c = q_c / (2.0 * eig_pc[-1])
    a_o = lam_qo / (2.0 * eig_po[-1])
    pcb_norm = linalg.norm(P_c @ mode.B, 2)
    pog_norm = linalg.norm(P_o @ mode.G, 2)
    gbar_o = 2.0 * pog_norm ** 2 / lam_qo
    gbar_c = 2.0 * pcb_norm ** 2 / (q_c * eig_po[0])
    nu_bar = gbar_c / a_o
    logger.info(f"Mode {mode.mode}: a_c={a_c:.6g}, a_o={a_o:.6g}, gbar_c={gbar_c:.6g}, gbar_o={gbar_o:.6g}")
    return QuadraticCertificate(
        mode=mode.mode, P_c=P_c, P_o=P_o, Q_c=Q_c, Q_o=Q_o,
        a_c=a_c, a_o=a_o, gbar_c=gbar_c, gbar_o=gbar_o, nu_bar=nu_bar,
        pcb_norm=pcb_norm, pog_norm=pog_norm, q_c=q_c,
    )


# ==================== Dwell-time bounds ====================

def _as_list(certs):
    certs = list(certs.values()) if isinstance(certs, dict) else list(certs)
    if not certs:
        raise ConfigError('at least one mode certificate is required')
    return certs


def chibar_identity_jumps(certs):
    """Max over mode pairs of the eigenvalue ratios bounding V_q / V_p"""
    certs = _as_list(certs)
    chibar = 0.0
    for cp in certs:
        _, _, lo_min_p, _ = cp.eig_bounds()
        lc_min_p = linalg.eigvalsh(cp.P_c)[0]
        for cq in certs:
            _, lc_max_q, _, lo_max_q = cq.eig_bounds()
            ratio_c = lc_max_q / lc_min_p
            if cp.nu_bar > 0.0:
                ratio_o = (cq.nu_bar / cp.nu_bar) * lo_max_q / lo_min_p
            else:
                ratio_o = 0.0
            chibar = max(chibar, ratio_o, ratio_c)
    return chibar


def corollary_bound(certs):
    """
    Dwell-time bound for identity jumps: τ_a > ln(χ̄)/a

    Returns:
        CorollaryBound with a = min_p min{a_c, 0.75 a_o}, χ̄ and tau_a_min
    """
    certs = _as_list(certs)
    a_p = {c.mode: c.a_p for c in certs}
    a = min(a_p.values())
    chibar = chibar_identity_jumps(certs)
    tau_a_min = max(0.0, math.log(chibar) / a)
    logger.info(f"Corollary bound: a={a:.6g}, chibar={chibar:.6g}, tau_a_min={tau_a_min:.6g}")
    return CorollaryBound(a=a, chibar=chibar, tau_a_min=tau_a_min, a_p=a_p)


def cascade_from_quadratic(certs):
    """
    Cascade certificate with the linear-case rates

    V_p = 4ν̄ V_o + V_c, α_p(s) = a_p s, γ_p(s) = 4ν̄γ̄_o s², χ(s) = χ̄ s, ρ ≡ 0.
    """
    certs = _as_list(certs)
    modes = {}
    for cert in certs:
        if cert.nu_bar <= 0.0:
            raise ConstructionError(f"mode {cert.mode}: no interconnection (ν̄ = 0), V_p would not be positive definite")
        sub = cert.subsystem_certificate()
        nu_bar = build_nu_bar(sub)
        nu, ell, V = compose_Vp(sub, nu_bar)
        _, _, theta = build_rates(sub, nu, ell)
        lower, upper = sandwich_bounds(sub, ell)
        modes[cert.mode] = ModeCascade(
            mode=cert.mode, subsystem=sub, nu=nu, ell=ell, V=V,
            alpha=kfun.linear(cert.a_p),
            gamma=kfun.power_law(cert.gbar_p, 2.0) if cert.gbar_p > 0.0 else kfun.Zero(),
            theta=theta, alpha_lower=lower, alpha_upper=upper,
        )
    chibar = chibar_identity_jumps(certs)
    return CascadeCertificate(modes=modes, chi=kfun.linear(chibar), rho=kfun.Zero())


# ==================== Event-triggered gain formulas ====================

@dataclass(frozen=True)
class SampledModeGains:
    mode: int
    a_o: float
    a_c: float
    gbar_o: float
    gbar_c: float
    nu_bar: float
    rho_o: float
    rho_c: float
    mu_o: float
    mu_c: float
    lam_min_Po: float
    lam_max_Po: float
    lam_min_Pc: float
    lam_max_Pc: float
    c_norm: float

    def to_record(self):
        return {k: (int(v) if k == 'mode' else float(v)) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class SampledGainPack:
    epsilon: float
    modes: dict
    chibar: float
    tau_a_min: float
    admissible: bool = True

    def to_record(self):
        return {
            'epsilon': self.epsilon, 'chibar': self.chibar, 'tau_a_min': self.tau_a_min,
            'admissible': self.admissible,
            'modes': [g.to_record() for g in self.modes.values()],
        }


def synth_sampled_gains(certs, c_norms, epsilon, admissible=True):
    """
    Filter and trigger gains of the event-triggered loop

    Per mode

        γ̄_c = 4‖P_c B‖²/q_c·max{1, 1/λmin(P_o)},  γ̄_o = 2‖P_o G‖²/λmin(Q_o)
        ν̄ = 4γ̄_c/λmin(P_o)
        ρ̄_o = (1-2ε)λmin(P_o)/‖C‖²,  ρ̄_c = min{(1-ε)γ̄_c, ε a_c λmin(P_c)}
        μ̄_o = (1-ε)a_o/((1+ν̄)γ̄_o),  μ̄_c = (1-ε)a_c/(2γ̄_c)

    where B and G are the interconnection and output-injection matrices of the
    cascade form (B = -B_p K_p, G = L_p). q_c is the certificate's decay budget, λmin(Q_c)
    when the linear model is exact. With admissible=True, ν̄ is raised to
    max{4γ̄_c/λmin(P_o), 4γ̄_c/a_o} and ρ̄_o, ρ̄_c are capped at the limits
    0.5(1-ε)a_cλmin(P_c)/‖C‖² and 0.5(1-ε)a_cλmin(P_c) so that the design
    criteria hold with λ = ε.

    Args:
        certs: QuadraticCertificate per mode (list or dict)
        c_norms: spectral norm of each mode's output matrix, keyed by mode
        epsilon: margin in (0, 0.5)
        admissible: apply the adjustments above

    Returns:
        SampledGainPack with per-mode gains, χ̄ and tau_a_min = ln(χ̄)/ε
    """
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 0.5:
        raise ConfigError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    certs = _as_list(certs)
    gains = {}
    for cert in certs:
        lc_min, lc_max, lo_min, lo_max = cert.eig_bounds()
        c_norm = float(c_norms[cert.mode])
        if c_norm <= 0.0:
            raise ConfigError(f"mode {cert.mode}: output matrix norm must be positive")
        lam_qc = cert.q_c if cert.q_c > 0.0 else linalg.eigvalsh(cert.Q_c)[0]
        lam_qo = linalg.eigvalsh(cert.Q_o)[0]
        gbar_c = 4.0 * cert.pcb_norm ** 2 / lam_qc * max(1.0, 1.0 / lo_min)
        gbar_o = 2.0 * cert.pog_norm ** 2 / lam_qo
        if gbar_c <= 0.0 or gbar_o <= 0.0:
            raise ConstructionError(f"mode {cert.mode}: trigger gains need nonzero interconnection and injection")
        nu_bar = 4.0 * gbar_c / lo_min
        rho_o = (1.0 - 2.0 * epsilon) * lo_min / c_norm ** 2
        rho_c = min((1.0 - epsilon) * gbar_c, epsilon * cert.a_c * lc_min)
        if admissible:
            nu_bar = max(nu_bar, 4.0 * gbar_c / cert.a_o)
            rho_o = min(rho_o, 0.5 * (1.0 - epsilon) * cert.a_c * lc_min / c_norm ** 2)
            rho_c = min(rho_c, 0.5 * (1.0 - epsilon) * cert.a_c * lc_min)
        mu_o = (1.0 - epsilon) * cert.a_o / ((1.0 + nu_bar) * gbar_o)
        mu_c = (1.0 - epsilon) * cert.a_c / (2.0 * gbar_c)
        gains[cert.mode] = SampledModeGains(
            mode=cert.mode, a_o=cert.a_o, a_c=cert.a_c, gbar_o=gbar_o, gbar_c=gbar_c,
            nu_bar=nu_bar, rho_o=rho_o, rho_c=rho_c, mu_o=mu_o, mu_c=mu_c,
            lam_min_Po=lo_min, lam_max_Po=lo_max, lam_min_Pc=lc_min, lam_max_Pc=lc_max,
            c_norm=c_norm,
        )

    chibar = 0.0
    for gp in gains.values():
        upper = gp.nu_bar * gp.lam_max_Po + gp.lam_max_Pc
        for gq in gains.values():
            chibar = max(chibar, upper / (gq.nu_bar * gq.lam_min_Po + gq.lam_min_Pc))
    tau_a_min = max(0.0, math.log(chibar) / epsilon)
    logger.info(f"Sampled gain pack: epsilon={epsilon}, chibar={chibar:.6g}, tau_a_min={tau_a_min:.6g}")
    return SampledGainPack(epsilon=epsilon, modes=gains, chibar=chibar, tau_a_min=tau_a_min,
                           admissible=admissible)
