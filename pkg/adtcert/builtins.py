"""
Registry of shipped nonlinear cascade modes and jump maps

Scenario files refer to these by name (`builtin: scalar_cascade`). Every entry
carries its dynamics and a hand-derived ISS certificate that the inequality
checks confirm numerically.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from adtcert import kfun
from adtcert.cascade_cert import JumpBounds, QuadraticForm, SubsystemCertificate
from adtcert.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BuiltinMode:
    """x' = f_c(x, e), e' = f_o(e, d) with a certificate factory"""
    name: str
    n_c: int
    n_o: int
    f_c: Callable
    f_o: Callable
    certificate_factory: Callable
    n_d: int = 1
    description: str = ''

    def __call__(self, x, e, d):
        return self.f_c(x, e), self.f_o(e, d)

    def certificate(self, mode):
        return self.certificate_factory(mode)


def _scalar_certificate(mode, coupling):
    """
    V_c = x², V_o = e² for x' = -x + c·e (or c·sat(e)), e' = -2e + d

    2x·c·e ≤ x² + c²e² gives α_c(s) = s, γ_c(s) = c²·s;
    2e(-2e + d) ≤ -2e² + d²/2 gives α_o(s) = 2s, γ_o(s) = s²/2.
    """
    square = kfun.power_law(1.0, 2.0)
    return SubsystemCertificate(
        mode=mode,
        V_o=QuadraticForm(np.eye(1)),
        V_c=QuadraticForm(np.eye(1)),
        alpha_o_lower=square, alpha_o_upper=square,
        alpha_o=kfun.linear(2.0),
        gamma_o=kfun.power_law(0.5, 2.0),
        alpha_c_lower=square, alpha_c_upper=square,
        alpha_c=kfun.linear(1.0),
        gamma_c=kfun.linear(coupling ** 2),
    )


def _observer(e, d):
    return -2.0 * np.asarray(e, dtype=float) + np.asarray(d, dtype=float)[:1]


MODES = {
    'scalar_cascade': BuiltinMode(
        name='scalar_cascade', n_c=1, n_o=1,
        f_c=lambda x, e: -np.asarray(x, dtype=float) + np.asarray(e, dtype=float),
        f_o=_observer,
        certificate_factory=lambda mode: _scalar_certificate(mode, 1.0),
        description="x' = -x + e, e' = -2e + d",
    ),
    'scalar_cascade_strong': BuiltinMode(
        name='scalar_cascade_strong', n_c=1, n_o=1,
        f_c=lambda x, e: -np.asarray(x, dtype=float) + 2.0 * np.asarray(e, dtype=float),
        f_o=_observer,
        certificate_factory=lambda mode: _scalar_certificate(mode, 2.0),
        description="x' = -x + 2e, e' = -2e + d",
    ),
    'saturated_cascade': BuiltinMode(
        name='saturated_cascade', n_c=1, n_o=1,
        f_c=lambda x, e: -np.asarray(x, dtype=float) + np.clip(e, -1.0, 1.0),
        f_o=_observer,
        certificate_factory=lambda mode: _scalar_certificate(mode, 1.0),
        description="x' = -x + sat(e), e' = -2e + d",
    ),
}


def _halving_jumps():
    return JumpBounds(
        alpha_hat_c=kfun.linear(0.5), alpha_hat_o=kfun.linear(0.5), rho_hat_o=kfun.Zero(),
        g_c=lambda x, e: 0.5 * np.asarray(x, dtype=float),
        g_o=lambda e, d: 0.5 * np.asarray(e, dtype=float),
    )


JUMPS = {
    'identity': JumpBounds.identity_maps,
    'halving': _halving_jumps,
}


def get_mode(name):
    try:
        return MODES[name]
    except KeyError:
        raise ConfigError(f"unknown builtin mode '{name}' (available: {', '.join(sorted(MODES))})") from None


def get_jumps(name):
    try:
        factory = JUMPS[name]
    except KeyError:
        raise ConfigError(f"unknown jump maps '{name}' (available: {', '.join(sorted(JUMPS))})") from None
    return factory()
