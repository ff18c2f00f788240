"""
Exception hierarchy for certificate construction, bound computation and simulation
"""


class AdtCertError(Exception):
    """Base class for all adtcert failures"""


class DomainError(AdtCertError, ValueError):
    """Argument outside the domain of a comparison function"""


class RangeError(AdtCertError, ValueError):
    """Value outside the range of a comparison function (inversion impossible)"""


class QuadratureError(AdtCertError):
    """Numerical integration did not reach the requested tolerance"""


class AssumptionViolation(AdtCertError):
    """A standing assumption on the certificates fails numerically"""


class ConstructionError(AdtCertError):
    """A derived function (psi, phi, ...) lacks a required property"""


class DivergentBound(AdtCertError):
    """The dwell-time threshold is infinite for the given certificates"""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(AdtCertError):
    """Invalid scenario or parameter configuration"""


class NotHurwitz(AdtCertError):
    """Matrix has an eigenvalue with nonnegative real part"""


class IllConditioned(AdtCertError):
    """Linear solve missed its residual target"""


class ZenoSuspected(AdtCertError):
    """Jump budget exhausted with vanishing flow intervals"""

    def __init__(self, message, arc=None):
        super().__init__(message)
        self.arc = arc


class StepFailure(AdtCertError):
    """Integration produced a non-finite state"""
