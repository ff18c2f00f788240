"""
Comparison functions of class K and K-infinity

Every scalar gain, rate and bound used by the certificates (alpha, gamma, nu,
ell, chi, rho, psi, mu, ...) is a ComparisonFunction. Closed forms are kept
closed under composition, inversion and scaling whenever possible; anything
else becomes an expression node evaluated numerically.

All functions are immutable and vectorized: calling one with a scalar returns a
float, calling it with an array returns an array of the same shape.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from adtcert.errors import DomainError, RangeError, QuadratureError

logger = logging.getLogger(__name__)

# Inversion: bisection after geometric bracketing, stops at ATOL + RTOL·s
INVERSION_ATOL = 1e-10
INVERSION_RTOL = 1e-10
INVERSION_MAX_ITER = 200
BRACKET_MAX_STEPS = 1100

# Trapezoid refinement for numerical primitives
QUADRATURE_RTOL = 1e-10
QUADRATURE_MAX_LEVEL = 16

# Default evaluation grid of running-supremum majorants (50 points per decade)
MAJORANT_GRID = np.logspace(-8, 8, 801)

_KINDS = {}


def register_kind(name):
    """Class decorator recording a kind name for (de)serialization"""
    def decorator(cls):
        cls.kind = name
        _KINDS[name] = cls
        return cls
    return decorator


class ComparisonFunction(ABC):
    """Scalar nonnegative function on [0, inf)"""

    kind = None
    strictly_increasing = True

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0):
            raise DomainError(f"{self.kind}: argument must be nonnegative, got {s}")
        out = np.asarray(self._eval(arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    def eval(self, s):
        return self(s)

    def scalar(self, s):
        """Unchecked evaluation at one nonnegative float (simulation inner loops)"""
        return float(self._eval(np.float64(s)))

    def inverse(self, r):
        """Return s with f(s) = r (closed form where available, bisection otherwise)"""
        if not self.strictly_increasing:
            raise RangeError(f"{self.kind} is not strictly increasing and cannot be inverted")
        arr = np.asarray(r, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0):
            raise DomainError(f"{self.kind}: inverse argument must be nonnegative, got {r}")
        out = np.asarray(self._inverse(arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    @abstractmethod
    def _eval(self, s):
        """Vectorized evaluation without argument checks"""

    def _inverse(self, r):
        return np.vectorize(self._bisect_inverse, otypes=[float])(r)

    def _bisect_inverse(self, r):
        if r == 0.0:
            return 0.0
        f = lambda s: float(self._eval(np.float64(s)))  # noqa: E731
        hi = 1.0
        try:
            if f(hi) >= r:
                lo = 0.5
                steps = 0
                while f(lo) >= r:
                    hi, lo = lo, 0.5 * lo
                    steps += 1
                    if lo == 0.0 or steps > BRACKET_MAX_STEPS:
                        return hi
            else:
                steps = 0
                while f(hi) < r:
                    hi *= 2.0
                    steps += 1
                    if steps > BRACKET_MAX_STEPS or math.isinf(hi):
                        raise RangeError(f"{self.kind}: value {r} exceeds the range of the function")
                lo = 0.5 * hi
        except DomainError as e:
            raise RangeError(f"{self.kind}: value {r} lies beyond the evaluable domain ({e})") from e

        for _ in range(INVERSION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if f(mid) < r:
                lo = mid
            else:
                hi = mid
            if hi - lo <= INVERSION_ATOL + INVERSION_RTOL * hi:
                break
        return 0.5 * (lo + hi)

    @property
    def unbounded(self):
        """Class-K-infinity claim"""
        return False

    @property
    def is_class_k(self):
        return self.strictly_increasing

    @property
    def is_smooth(self):
        """Continuously differentiable on [0, inf) (used by the D1 criterion)"""
        return False

    @abstractmethod
    def to_record(self):
        """Structured configuration record {kind, parameters}"""

    def __add__(self, other):
        return fsum(self, other)

    def __mul__(self, c):
        return scale(c, self)

    __rmul__ = __mul__


def _positive(name, value):
    value = float(value)
    if not value > 0.0 or math.isinf(value):
        raise DomainError(f"{name} must be a positive finite number, got {value}")
    return value


# ==================== Closed forms ====================

@register_kind('power_law')
@dataclass(frozen=True)
class PowerLaw(ComparisonFunction):
    a: float
    k: float

    def __post_init__(self):
        object.__setattr__(self, 'a', _positive('power_law coefficient', self.a))
        object.__setattr__(self, 'k', _positive('power_law exponent', self.k))

    def _eval(self, s):
        return self.a * np.power(s, self.k)

    def scalar(self, s):
        return self.a * s ** self.k

    def _inverse(self, r):
        return np.power(r / self.a, 1.0 / self.k)

    @property
    def unbounded(self):
        return True

    @property
    def is_smooth(self):
        return self.k >= 1.0

    def to_record(self):
        return {'kind': self.kind, 'a': self.a, 'k': self.k}


@register_kind('linear')
@dataclass(frozen=True)
class Linear(ComparisonFunction):
    a: float

    def __post_init__(self):
        object.__setattr__(self, 'a', _positive('linear slope', self.a))

    @property
    def k(self):
        return 1.0

    def _eval(self, s):
        return self.a * s

    def scalar(self, s):
        return self.a * s

    def _inverse(self, r):
        return r / self.a

    @property
    def unbounded(self):
        return True

    @property
    def is_smooth(self):
        return True

    def to_record(self):
        return {'kind': self.kind, 'a': self.a}


@register_kind('constant')
@dataclass(frozen=True)
class Constant(ComparisonFunction):
    """Positive constant; not class K, used for nu"""
    c: float
    strictly_increasing = False

    def __post_init__(self):
        c = float(self.c)
        if c < 0.0 or math.isinf(c) or math.isnan(c):
            raise DomainError(f"constant must be finite and nonnegative, got {c}")
        object.__setattr__(self, 'c', c)

    def _eval(self, s):
        return np.full_like(s, self.c, dtype=float)

    @property
    def is_smooth(self):
        return True

    def to_record(self):
        return {'kind': self.kind, 'c': self.c}


@register_kind('zero')
@dataclass(frozen=True)
class Zero(ComparisonFunction):
    """The identically-zero gain"""
    strictly_increasing = False

    def _eval(self, s):
        return np.zeros_like(s, dtype=float)

    def scalar(self, s):
        return 0.0

    @property
    def is_smooth(self):
        return True

    def to_record(self):
        return {'kind': self.kind}


# ==================== Tables ====================

@register_kind('tabulated')
@dataclass(frozen=True)
class Tabulated(ComparisonFunction):
    """
    Monotone piecewise-linear interpolation of (grid, values)

    Both sequences start at 0 and are strictly increasing. Evaluation beyond the
    last grid point requires a declared power-law tail (tail_exponent), which is
    also what makes the function class K-infinity.
    """
    grid: tuple
    values: tuple
    tail_exponent: float = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise DomainError('tabulated: grid and values must be 1-D of equal length >= 2')
        if grid[0] != 0.0 or values[0] != 0.0:
            raise DomainError('tabulated: grid and values must start at 0')
        if np.any(np.diff(grid) <= 0.0) or np.any(np.diff(values) <= 0.0):
            raise DomainError('tabulated: grid and values must be strictly increasing')
        if self.tail_exponent is not None:
            object.__setattr__(self, 'tail_exponent', _positive('tail exponent', self.tail_exponent))
        object.__setattr__(self, 'grid', tuple(grid.tolist()))
        object.__setattr__(self, 'values', tuple(values.tolist()))
        object.__setattr__(self, '_x', grid)
        object.__setattr__(self, '_y', values)

    def _eval(self, s):
        x_end, y_end = self._x[-1], self._y[-1]
        beyond = s > x_end
        if np.any(beyond) and self.tail_exponent is None:
            raise DomainError(f"tabulated: argument beyond grid end {x_end} without unbounded tail")
        out = np.interp(s, self._x, self._y)
        if np.any(beyond):
            out = np.where(beyond, y_end * np.power(np.maximum(s, x_end) / x_end, self.tail_exponent), out)
        return out

    def _inverse(self, r):
        x_end, y_end = self._x[-1], self._y[-1]
        beyond = r > y_end
        if np.any(beyond) and self.tail_exponent is None:
            raise RangeError(f"tabulated: value beyond table maximum {y_end}")
        out = np.interp(r, self._y, self._x)
        if np.any(beyond):
            out = np.where(beyond, x_end * np.power(np.maximum(r, y_end) / y_end, 1.0 / self.tail_exponent), out)
        return out

    @property
    def unbounded(self):
        return self.tail_exponent is not None

    def to_record(self):
        record = {'kind': self.kind, 'grid': list(self.grid), 'values': list(self.values)}
        if self.tail_exponent is not None:
            record['tail_exponent'] = self.tail_exponent
        return record


@register_kind('monotone_table')
@dataclass(frozen=True)
class MonotoneTable(ComparisonFunction):
    """
    Nondecreasing piecewise-linear table on a positive grid

    Constant below the first grid point; evaluation beyond the last point raises.
    This is the representation of running-supremum majorants (nu).
    """
    grid: tuple
    values: tuple
    strictly_increasing = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 1:
            raise DomainError('monotone_table: grid and values must be 1-D of equal length')
        if grid[0] <= 0.0 or np.any(np.diff(grid) <= 0.0):
            raise DomainError('monotone_table: grid must be positive and strictly increasing')
        if np.any(np.diff(values) < 0.0) or values[0] < 0.0:
            raise DomainError('monotone_table: values must be nonnegative and nondecreasing')
        object.__setattr__(self, 'grid', tuple(grid.tolist()))
        object.__setattr__(self, 'values', tuple(values.tolist()))
        object.__setattr__(self, '_x', grid)
        object.__setattr__(self, '_y', values)
        # cumulative integral at the nodes, starting with the constant piece on [0, x0]
        cumulative = np.concatenate(([values[0] * grid[0]],
                                     values[0] * grid[0] + np.cumsum(0.5 * np.diff(grid) * (values[:-1] + values[1:]))))
        object.__setattr__(self, '_cum', cumulative)

    def _eval(self, s):
        if np.any(s > self._x[-1]):
            raise DomainError(f"monotone_table: argument beyond grid end {self._x[-1]}")
        return np.interp(s, self._x, self._y)

    def integral(self, s):
        """Exact integral of the table from 0 to s"""
        s = np.asarray(s, dtype=float)
        if np.any(s > self._x[-1]):
            raise DomainError(f"monotone_table: integral beyond grid end {self._x[-1]}")
        idx = np.clip(np.searchsorted(self._x, s, side='right') - 1, 0, None)
        below = s < self._x[0]
        node = self._x[idx]
        partial = self._cum[idx] + 0.5 * (s - node) * (self._y[idx] + np.interp(s, self._x, self._y))
        return np.where(below, self._y[0] * s, partial)

    def to_record(self):
        return {'kind': self.kind, 'grid': list(self.grid), 'values': list(self.values)}


# ==================== Expression nodes ====================

@register_kind('composition')
@dataclass(frozen=True)
class Composition(ComparisonFunction):
    outer: ComparisonFunction
    inner: ComparisonFunction

    @property
    def strictly_increasing(self):
        return self.outer.strictly_increasing and self.inner.strictly_increasing

    def _eval(self, s):
        return self.outer._eval(np.asarray(self.inner._eval(s), dtype=float))

    def _inverse(self, r):
        return self.inner._inverse(np.asarray(self.outer._inverse(r), dtype=float))

    @property
    def unbounded(self):
        return self.outer.unbounded and self.inner.unbounded

    @property
    def is_smooth(self):
        return self.outer.is_smooth and self.inner.is_smooth

    def to_record(self):
        return {'kind': self.kind, 'outer': self.outer.to_record(), 'inner': self.inner.to_record()}


@dataclass(frozen=True)
class _Family(ComparisonFunction):
    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise DomainError(f"{self.kind}: at least one term required")
        object.__setattr__(self, 'terms', terms)

    def to_record(self):
        return {'kind': self.kind, 'terms': [t.to_record() for t in self.terms]}


@register_kind('pointwise_min')
@dataclass(frozen=True)
class PointwiseMin(_Family):

    def _eval(self, s):
        return np.minimum.reduce([np.asarray(t._eval(s), dtype=float) for t in self.terms])

    def _inverse(self, r):
        # min of increasing functions inverts to the max of the inverses
        return np.maximum.reduce([np.asarray(t._inverse(r), dtype=float) for t in self.terms])

    @property
    def unbounded(self):
        return all(t.unbounded for t in self.terms)


@register_kind('pointwise_max')
@dataclass(frozen=True)
class PointwiseMax(_Family):

    def _eval(self, s):
        return np.maximum.reduce([np.asarray(t._eval(s), dtype=float) for t in self.terms])

    def _inverse(self, r):
        return np.minimum.reduce([np.asarray(self._term_inverse(t, r), dtype=float) for t in self.terms])

    @staticmethod
    def _term_inverse(term, r):
        # a bounded term that never reaches r does not constrain the max
        try:
            return term._inverse(r)
        except RangeError:
            return np.full_like(r, np.inf, dtype=float)

    @property
    def unbounded(self):
        return any(t.unbounded for t in self.terms)


@register_kind('sum')
@dataclass(frozen=True)
class Sum(_Family):

    @property
    def strictly_increasing(self):
        return any(t.strictly_increasing for t in self.terms)

    def _eval(self, s):
        return np.add.reduce([np.asarray(t._eval(s), dtype=float) for t in self.terms])

    @property
    def unbounded(self):
        return any(t.unbounded for t in self.terms)

    @property
    def is_smooth(self):
        return all(t.is_smooth for t in self.terms)


@register_kind('product')
@dataclass(frozen=True)
class Product(_Family):
    """Product of nonnegative nondecreasing factors (gamma_p = nu(theta) * gamma_o)"""

    @property
    def strictly_increasing(self):
        return any(t.strictly_increasing for t in self.terms) and \
            all(t.strictly_increasing or float(t._eval(np.float64(MAJORANT_GRID[0]))) > 0.0 for t in self.terms)

    def _eval(self, s):
        return np.multiply.reduce([np.asarray(t._eval(s), dtype=float) for t in self.terms])

    @property
    def unbounded(self):
        return self.strictly_increasing and any(t.unbounded for t in self.terms)

    @property
    def is_smooth(self):
        return all(t.is_smooth for t in self.terms)


@register_kind('scalar_multiple')
@dataclass(frozen=True)
class ScalarMultiple(ComparisonFunction):
    c: float
    base: ComparisonFunction

    def __post_init__(self):
        object.__setattr__(self, 'c', _positive('scalar multiple', self.c))

    @property
    def strictly_increasing(self):
        return self.base.strictly_increasing

    def _eval(self, s):
        return self.c * np.asarray(self.base._eval(s), dtype=float)

    def _inverse(self, r):
        return self.base._inverse(r / self.c)

    @property
    def unbounded(self):
        return self.base.unbounded

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def to_record(self):
        return {'kind': self.kind, 'c': self.c, 'base': self.base.to_record()}


@register_kind('inverse')
@dataclass(frozen=True)
class Inverse(ComparisonFunction):
    base: ComparisonFunction

    def _eval(self, s):
        return self.base._inverse(s)

    def _inverse(self, r):
        return self.base._eval(r)

    @property
    def unbounded(self):
        return self.base.unbounded

    def to_record(self):
        return {'kind': self.kind, 'base': self.base.to_record()}


@register_kind('ratio')
@dataclass(frozen=True)
class Ratio(ComparisonFunction):
    """numerator(s) / denominator(s) on (0, inf); undefined at 0"""
    numerator: ComparisonFunction
    denominator: ComparisonFunction
    strictly_increasing = False

    def _eval(self, s):
        if np.any(s <= 0.0):
            raise DomainError('ratio: defined on (0, inf) only')
        return np.asarray(self.numerator._eval(s), dtype=float) / np.asarray(self.denominator._eval(s), dtype=float)

    def to_record(self):
        return {'kind': self.kind, 'numerator': self.numerator.to_record(),
                'denominator': self.denominator.to_record()}


@register_kind('primitive')
@dataclass(frozen=True)
class Primitive(ComparisonFunction):
    """s -> integral of the integrand over [0, s]"""
    integrand: ComparisonFunction

    def _eval(self, s):
        if isinstance(self.integrand, MonotoneTable):
            return self.integrand.integral(s)
        return np.vectorize(self._integrate, otypes=[float])(s)

    def _integrate(self, s):
        if s == 0.0:
            return 0.0
        n = 16
        prev = self._trapezoid(s, n)
        for _ in range(QUADRATURE_MAX_LEVEL):
            n *= 2
            cur = self._trapezoid(s, n)
            # Richardson estimate of the O(h^2) error of cur
            err = abs(cur - prev) / 3.0
            if err <= QUADRATURE_RTOL * abs(cur):
                return cur + (cur - prev) / 3.0
            prev = cur
        raise QuadratureError(f"primitive: trapezoid refinement did not converge at s={s}")

    def _trapezoid(self, s, n):
        xs = np.linspace(0.0, s, n + 1)
        # integrands defined on (0, inf) only are sampled just right of 0
        xs_eval = xs.copy()
        xs_eval[0] = xs[1] * 1e-12
        return float(trapezoid(np.asarray(self.integrand._eval(xs_eval), dtype=float), xs))

    @property
    def unbounded(self):
        return True

    def to_record(self):
        return {'kind': self.kind, 'integrand': self.integrand.to_record()}


# ==================== Constructors with simplification ====================

def linear(a):
    return Linear(a)


def power_law(a, k):
    if float(k) == 1.0:
        return Linear(a)
    return PowerLaw(a, k)


def _power_parts(f):
    """(a, k) for closed power laws, None otherwise"""
    if isinstance(f, (PowerLaw, Linear)):
        return f.a, f.k
    return None


def compose(outer, inner):
    """outer o inner, kept closed-form when both sides allow it"""
    if isinstance(inner, Zero) and outer.is_class_k:
        return Zero()
    if isinstance(outer, (Constant, Zero)):
        return outer
    po, pi = _power_parts(outer), _power_parts(inner)
    if po is not None and pi is not None:
        return power_law(po[0] * pi[0] ** po[1], po[1] * pi[1])
    if isinstance(outer, ScalarMultiple):
        return scale(outer.c, compose(outer.base, inner))
    if isinstance(outer, Composition):
        return compose(outer.outer, compose(outer.inner, inner))
    if po is not None and isinstance(inner, (PointwiseMin, PointwiseMax)):
        # increasing outer commutes with min/max
        combine = pointwise_min if isinstance(inner, PointwiseMin) else pointwise_max
        return combine(*(compose(outer, t) for t in inner.terms))
    if pi is not None and isinstance(outer, (PointwiseMin, PointwiseMax, Sum)):
        combine = {PointwiseMin: pointwise_min, PointwiseMax: pointwise_max, Sum: fsum}[type(outer)]
        return combine(*(compose(t, inner) for t in outer.terms))
    if isinstance(outer, Inverse) and inner == outer.base:
        return Linear(1.0)
    return Composition(outer, inner)


def inverse(f):
    """Inverse function object, closed-form where possible"""
    if isinstance(f, Linear):
        return Linear(1.0 / f.a)
    if isinstance(f, PowerLaw):
        return power_law((1.0 / f.a) ** (1.0 / f.k), 1.0 / f.k)
    if isinstance(f, Inverse):
        return f.base
    if isinstance(f, ScalarMultiple):
        return compose(inverse(f.base), Linear(1.0 / f.c))
    if isinstance(f, Composition):
        return compose(inverse(f.inner), inverse(f.outer))
    if isinstance(f, PointwiseMin):
        return pointwise_max(*(inverse(t) for t in f.terms))
    if isinstance(f, PointwiseMax) and all(t.unbounded for t in f.terms):
        return pointwise_min(*(inverse(t) for t in f.terms))
    if not f.strictly_increasing:
        raise RangeError(f"{f.kind} is not strictly increasing and cannot be inverted")
    return Inverse(f)


def _flatten(cls, fs):
    out = []
    for f in fs:
        if isinstance(f, cls):
            out.extend(f.terms)
        else:
            out.append(f)
    return out


def _merge_powers(terms, pick):
    """Merge closed power laws of equal exponent using pick(coeffs)"""
    merged, rest = {}, []
    for t in terms:
        parts = _power_parts(t)
        if parts is None:
            rest.append(t)
        else:
            merged.setdefault(parts[1], []).append(parts[0])
    powers = [power_law(pick(coeffs), k) for k, coeffs in sorted(merged.items())]
    return powers + rest


def pointwise_min(*fs):
    terms = _flatten(PointwiseMin, fs)
    if any(isinstance(t, Zero) for t in terms):
        return Zero()
    terms = _merge_powers(terms, min)
    return terms[0] if len(terms) == 1 else PointwiseMin(tuple(terms))


def pointwise_max(*fs):
    terms = [t for t in _flatten(PointwiseMax, fs) if not isinstance(t, Zero)]
    if not terms:
        return Zero()
    terms = _merge_powers(terms, max)
    return terms[0] if len(terms) == 1 else PointwiseMax(tuple(terms))


def fsum(*fs):
    terms = [t for t in _flatten(Sum, fs) if not isinstance(t, Zero)]
    if not terms:
        return Zero()
    constants = [t.c for t in terms if isinstance(t, Constant)]
    terms = [t for t in terms if not isinstance(t, Constant)]
    terms = _merge_powers(terms, sum)
    if constants and sum(constants) > 0.0:
        terms.append(Constant(sum(constants)))
    if not terms:
        return Zero()
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


def scale(c, f):
    """c * f for c > 0 (c == 0 gives Zero)"""
    c = float(c)
    if c == 0.0 or isinstance(f, Zero):
        return Zero()
    if c == 1.0:
        return f
    parts = _power_parts(f)
    if parts is not None:
        return power_law(c * parts[0], parts[1])
    if isinstance(f, Constant):
        return Constant(c * f.c)
    if isinstance(f, ScalarMultiple):
        return scale(c * f.c, f.base)
    if isinstance(f, MonotoneTable):
        return MonotoneTable(f.grid, tuple(c * v for v in f.values))
    if isinstance(f, (PointwiseMin, PointwiseMax, Sum)):
        combine = {PointwiseMin: pointwise_min, PointwiseMax: pointwise_max, Sum: fsum}[type(f)]
        return combine(*(scale(c, t) for t in f.terms))
    return ScalarMultiple(c, f)


def product(*fs):
    terms = _flatten(Product, fs)
    if any(isinstance(t, Zero) for t in terms):
        return Zero()
    coeff = 1.0
    exponent = 0.0
    rest = []
    for t in terms:
        parts = _power_parts(t)
        if isinstance(t, Constant):
            coeff *= t.c
        elif parts is not None:
            coeff *= parts[0]
            exponent += parts[1]
        else:
            rest.append(t)
    if coeff == 0.0:
        return Zero()
    head = power_law(coeff, exponent) if exponent > 0.0 else Constant(coeff)
    if not rest:
        return head
    if isinstance(head, Constant):
        tail = rest[0] if len(rest) == 1 else Product(tuple(rest))
        return scale(head.c, tail)
    return Product(tuple([head] + rest))


def ratio(numerator, denominator):
    """numerator / denominator; closed form when both are power laws"""
    pn, pd = _power_parts(numerator), _power_parts(denominator)
    if isinstance(numerator, Zero):
        return Constant(0.0)
    if pn is not None and pd is not None:
        k = pn[1] - pd[1]
        if k == 0.0:
            return Constant(pn[0] / pd[0])
        if k > 0.0:
            return power_law(pn[0] / pd[0], k)
    return Ratio(numerator, denominator)


# ==================== Operations ====================

def nondecreasing_majorant(f, factor=4.0, grid=None):
    """
    Smallest nondecreasing g with g >= factor * f on a grid

    Built as factor times the running supremum of f over (0, s]. Constants and
    already-nondecreasing closed forms stay closed.

    Args:
        f: ComparisonFunction or any callable positive on (0, inf)
        factor: multiplier (4 for the cascade construction)
        grid: positive increasing evaluation points (default MAJORANT_GRID)

    Returns:
        ComparisonFunction g
    """
    factor = _positive('majorant factor', factor)
    if isinstance(f, Constant):
        return Constant(factor * f.c)
    if isinstance(f, (PowerLaw, Linear)):
        return scale(factor, f)
    grid = MAJORANT_GRID if grid is None else np.asarray(grid, dtype=float)
    if isinstance(f, ComparisonFunction):
        values = np.asarray(f(grid), dtype=float)
    else:
        values = np.array([float(f(s)) for s in grid])
    if not np.all(np.isfinite(values)):
        raise DomainError('majorant: function is not finite on the evaluation grid')
    running = factor * np.maximum.accumulate(values)
    logger.debug(f"Majorant tabulated on {grid.size} points, range [{running[0]:.4g}, {running[-1]:.4g}]")
    return MonotoneTable(tuple(grid.tolist()), tuple(running.tolist()))


def integral_primitive(nu):
    """
    l(s) = integral of nu over [0, s]

    Closed form for constants, power laws and their sums and multiples; exact
    for monotone tables; trapezoid refinement otherwise.
    """
    if isinstance(nu, Zero) or (isinstance(nu, Constant) and nu.c == 0.0):
        return Zero()
    if isinstance(nu, Constant):
        return Linear(nu.c)
    parts = _power_parts(nu)
    if parts is not None:
        a, k = parts
        return power_law(a / (k + 1.0), k + 1.0)
    if isinstance(nu, ScalarMultiple):
        return scale(nu.c, integral_primitive(nu.base))
    if isinstance(nu, Sum):
        return fsum(*(integral_primitive(t) for t in nu.terms))
    return Primitive(nu)


def from_record(record):
    """Rebuild a ComparisonFunction from its configuration record"""
    if isinstance(record, ComparisonFunction):
        return record
    if not isinstance(record, dict) or 'kind' not in record:
        raise DomainError(f"comparison function record must be a mapping with 'kind', got {record!r}")
    kind = record['kind']
    cls = _KINDS.get(kind)
    if cls is None:
        raise DomainError(f"unknown comparison function kind '{kind}'")
    params = {k: v for k, v in record.items() if k != 'kind'}
    try:
        if kind in ('pointwise_min', 'pointwise_max', 'sum', 'product'):
            return cls(tuple(from_record(t) for t in params['terms']))
        if kind == 'composition':
            return cls(from_record(params['outer']), from_record(params['inner']))
        if kind == 'scalar_multiple':
            return cls(params['c'], from_record(params['base']))
        if kind == 'inverse':
            return cls(from_record(params['base']))
        if kind == 'ratio':
            return cls(from_record(params['numerator']), from_record(params['denominator']))
        if kind == 'primitive':
            return cls(from_record(params['integrand']))
        if kind == 'tabulated':
            tail = params.get('tail_exponent')
            if tail is None and params.get('unbounded'):
                tail = 1.0
            return cls(tuple(params['grid']), tuple(params['values']), tail)
        if kind == 'monotone_table':
            return cls(tuple(params['grid']), tuple(params['values']))
        return cls(**params)
    except (KeyError, TypeError) as e:
        raise DomainError(f"malformed '{kind}' record: {e}") from e
