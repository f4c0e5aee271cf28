"""Rational probability generating functions.

A PGF is stored as a ratio of two real polynomials in ascending-power
coefficient form.  The module provides the algebra needed to assemble the
delay and peak-age transforms, exact tail inversion by coefficient
recursion, the mean, and a lattice saddlepoint tail approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erfcx

from . import _kernels
from .errors import (
    ConfigError,
    InfiniteMeanError,
    InstabilityError,
    NormalizationError,
    NumericalError,
    OptimizerError,
    OverflowCoefficientError,
    PoleError,
    WindowEmptyError,
)

NORMALIZATION_TOL = 1e-9
POLE_TOL = 1e-14
RANGE_TOL = 1e-6
COEF_LIMIT = 1e300

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True).reshape(-1)
    if arr.size == 0:
        arr = np.zeros(1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial; ``coef[k]`` multiplies ``s**k``."""

    coef: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise OverflowCoefficientError("non-finite polynomial coefficient")
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        object.__setattr__(self, "coef", _frozen(c))

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls(np.array([value], dtype=float))

    @classmethod
    def monomial(cls, power: int, value: float = 1.0) -> "Polynomial":
        c = np.zeros(power + 1)
        c[power] = value
        return cls(c)

    @property
    def degree(self) -> int:
        return self.coef.size - 1

    def is_zero(self) -> bool:
        return self.coef.size == 1 and self.coef[0] == 0.0

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(s, self.coef)

    def __add__(self, other) -> "Polynomial":
        other = _as_poly(other)
        n = max(self.coef.size, other.coef.size)
        out = np.zeros(n)
        out[: self.coef.size] += self.coef
        out[: other.coef.size] += other.coef
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coef)

    def __sub__(self, other) -> "Polynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Polynomial":
        return _as_poly(other) - self

    def __mul__(self, other) -> "Polynomial":
        if np.isscalar(other):
            return Polynomial(self.coef * float(other))
        return Polynomial(np.convolve(self.coef, other.coef))

    __rmul__ = __mul__

    def deriv(self, m: int = 1) -> "Polynomial":
        if self.degree < m:
            return Polynomial.constant(0.0)
        return Polynomial(np.polynomial.polynomial.polyder(self.coef, m))

    def shift(self, k: int) -> "Polynomial":
        """Multiply by ``s**k``; negative ``k`` divides and requires the
        low coefficients to be zero."""
        if k >= 0:
            return Polynomial(np.concatenate([np.zeros(k), self.coef]))
        k = -k
        if np.any(self.coef[:k] != 0.0):
            raise ValueError("polynomial is not divisible by s**%d" % k)
        return Polynomial(self.coef[k:])

    def low_order(self) -> int:
        """Index of the lowest nonzero coefficient."""
        nz = np.flatnonzero(self.coef)
        return int(nz[0]) if nz.size else 0

    def substitute_power(self, n: int) -> "Polynomial":
        """p(s**n)."""
        out = np.zeros(self.degree * n + 1)
        out[::n] = self.coef
        return Polynomial(out)

    def deflate_at_one(self) -> tuple["Polynomial", float]:
        """Synthetic division by ``(s - 1)``; returns (quotient, remainder)."""
        c = self.coef
        if c.size == 1:
            return Polynomial.constant(0.0), float(c[0])
        # quotient coefficients from the top: q[k-1] = c[k] + q[k]
        q = np.cumsum(c[::-1])[::-1]
        return Polynomial(q[1:]), float(q[0])

    def scale(self) -> float:
        return float(np.max(np.abs(self.coef)))


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    return Polynomial.constant(float(x))


def _log_derivative_ratios(coef: np.ndarray, x: float) -> tuple[float, float, float]:
    """For p(s) at s = exp(x) return (log|p(s)|, p'/p, p''/p) without
    overflow for large |x|."""
    m = coef.size - 1
    k = np.arange(m + 1, dtype=float)
    if x <= 0.0:
        s = math.exp(x)
        p0 = np.polynomial.polynomial.polyval(s, coef)
        p1 = np.polynomial.polynomial.polyval(s, coef * k)  # s p'(s)
        p2 = np.polynomial.polynomial.polyval(s, coef * k * (k - 1))  # s^2 p''
        if p0 == 0.0:
            raise PoleError("polynomial vanishes at s=%g" % s)
        return math.log(abs(p0)), p1 / p0 / s, p2 / p0 / (s * s)
    # evaluate s^-m p(s) = sum c_k t^(m-k), t = 1/s
    t = math.exp(-x)
    rev = coef[::-1]
    kr = k[::-1]
    q0 = np.polynomial.polynomial.polyval(t, rev)
    q1 = np.polynomial.polynomial.polyval(t, rev * kr)
    q2 = np.polynomial.polynomial.polyval(t, rev * kr * (kr - 1))
    if q0 == 0.0:
        raise PoleError("polynomial vanishes at s=%g" % math.exp(x))
    s = math.exp(x)
    return m * x + math.log(abs(q0)), q1 / q0 / s, q2 / q0 / (s * s)


@dataclass(frozen=True)
class Rational:
    """Ratio ``numerator / denominator`` of two polynomials."""

    numerator: Polynomial
    denominator: Polynomial = field(default_factory=lambda: Polynomial.constant(1.0))

    def __post_init__(self):
        num = _as_poly(self.numerator)
        den = _as_poly(self.denominator)
        if den.is_zero():
            raise PoleError("zero denominator")
        # cancel common powers of s so that denominator(0) != 0 when possible
        k = min(num.low_order() if not num.is_zero() else den.low_order(), den.low_order())
        if k > 0:
            num, den = num.shift(-k), den.shift(-k)
        scale = max(num.scale(), den.scale())
        if scale > COEF_LIMIT:
            raise OverflowCoefficientError("coefficient magnitude %.3g exceeds 1e300" % scale)
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    # -- algebra ---------------------------------------------------------
    @classmethod
    def from_coefficients(cls, num, den=(1.0,)):
        return cls(Polynomial(np.asarray(num, dtype=float)), Polynomial(np.asarray(den, dtype=float)))

    def _lift(self, other) -> "Rational":
        if isinstance(other, Rational):
            return other
        if isinstance(other, Polynomial):
            return Rational(other)
        return Rational(Polynomial.constant(float(other)))

    def __add__(self, other) -> "Rational":
        o = self._lift(other)
        if np.array_equal(self.denominator.coef, o.denominator.coef):
            return Rational(self.numerator + o.numerator, self.denominator)
        return Rational(
            self.numerator * o.denominator + o.numerator * self.denominator,
            self.denominator * o.denominator,
        )

    __radd__ = __add__

    def __neg__(self) -> "Rational":
        return Rational(-self.numerator, self.denominator)

    def __sub__(self, other) -> "Rational":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Rational":
        return self._lift(other) - self

    def __mul__(self, other) -> "Rational":
        if np.isscalar(other):
            return Rational(self.numerator * float(other), self.denominator)
        o = self._lift(other)
        return Rational(self.numerator * o.numerator, self.denominator * o.denominator)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Rational":
        if np.isscalar(other):
            return Rational(self.numerator * (1.0 / float(other)), self.denominator)
        o = self._lift(other)
        return Rational(self.numerator * o.denominator, self.denominator * o.numerator)

    def shift(self, k: int) -> "Rational":
        """Multiply by ``s**k`` (negative k divides)."""
        if k >= 0:
            return Rational(self.numerator.shift(k), self.denominator)
        return Rational(self.numerator, self.denominator.shift(-k))

    def substitute_power(self, n: int) -> "Rational":
        return Rational(self.numerator.substitute_power(n), self.denominator.substitute_power(n))

    # -- evaluation --------------------------------------------------------
    def __call__(self, s):
        return eval_pgf(self, s)

    def value_at_one(self) -> float:
        return float(self.numerator(1.0) / self.denominator(1.0))

    def reduced(self) -> "Rational":
        """Cancel common ``(s - 1)`` factors and normalize ``denominator(0) = 1``."""
        num, den = self.numerator, self.denominator
        for _ in range(den.degree):
            dq, dr = den.deflate_at_one()
            if abs(dr) > 1e-11 * den.scale():
                break
            nq, nr = num.deflate_at_one()
            if abs(nr) > 1e-11 * max(num.scale(), 1e-300):
                break
            num, den = nq, dq
        b0 = den.coef[0]
        if b0 != 0.0 and b0 != 1.0:
            num, den = num * (1.0 / b0), den * (1.0 / b0)
        return type(self)(num, den)


@dataclass(frozen=True)
class RationalPgf(Rational):
    """A rational function that is a probability generating function.

    The constructor checks ``G(1) = 1`` to within 1e-9 and that the
    denominator does not vanish at the origin.

    High-degree transforms are badly conditioned in the monomial basis
    away from the unit disk.  A builder that knows a closed form may attach
    ``cgf(x)``, returning ``log G(exp(x))`` and its first two derivatives,
    together with the radius of convergence;
    the saddlepoint approximation then uses those instead of the
    coefficients.  It may also attach ``tail_series(k_max)``, returning
    sequences ``(a, b)`` such that ``P[X > k]`` solves the same recursion as
    :func:`invert_ccdf` but with well-conditioned inputs, and the exact
    ``mean_value``.  When a tail series is present and the coefficient form
    fails the ``G(1)`` check, ``coefficients_ok`` is cleared instead of
    raising; evaluating such a PGF through its coefficients then raises.  Algebra on the PGF drops all
    attachments.
    """

    cgf: Optional[Callable[[float], tuple]] = field(default=None, compare=False, repr=False)
    radius: Optional[float] = field(default=None, compare=False, repr=False)
    tail_series: Optional[Callable[[int], tuple]] = field(default=None, compare=False, repr=False)
    mean_value: Optional[float] = field(default=None, compare=False, repr=False)
    coefficients_ok: bool = field(default=True, init=False, compare=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        if self.denominator.coef[0] == 0.0:
            raise PoleError("denominator(0) = 0")
        den1 = self.denominator(1.0)
        num1 = self.numerator(1.0)
        if abs(den1) < POLE_TOL * self.denominator.scale():
            # unreduced (s-1) factor; defer the check to the reduced form
            red = Rational(self.numerator, self.denominator).reduced()
            den1, num1 = red.denominator(1.0), red.numerator(1.0)
        if abs(num1 / den1 - 1.0) < NORMALIZATION_TOL:
            return
        if self.tail_series is None:
            raise NormalizationError("G(1) = %.12g, not 1" % (num1 / den1))
        object.__setattr__(self, "coefficients_ok", False)

    @classmethod
    def of(cls, r: Rational, cgf=None, radius=None, tail_series=None, mean_value=None) -> "RationalPgf":
        return cls(r.numerator, r.denominator, cgf, radius, tail_series, mean_value)

    @classmethod
    def geometric(cls, q: float) -> "RationalPgf":
        """PGF of the number of trials up to the first success, failure prob ``q``."""
        return cls(Polynomial(np.array([0.0, 1.0 - q])), Polynomial(np.array([1.0, -q])))

    @classmethod
    def from_pmf(cls, pmf) -> "RationalPgf":
        """Finite-support PGF; ``pmf[k] = P[X = k]``."""
        return cls(Polynomial(np.asarray(pmf, dtype=float)))

    def is_polynomial(self) -> bool:
        return self.denominator.degree == 0


@dataclass(frozen=True)
class TailCurve:
    """``values[i]`` is the tail probability at integer ``start_index + i``.

    ``method`` is one of "exact", "saddlepoint", "simulation" or "bound";
    Monte Carlo curves carry per-point 95% half-widths.
    """

    start_index: int
    values: np.ndarray
    method: str
    half_width: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.half_width is not None:
            object.__setattr__(self, "half_width", _frozen(self.half_width))
        v = self.values
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("tail values must lie in [0, 1]")
        if np.any(np.diff(v) > 0.0):
            raise ValueError("tail values must be non-increasing")

    def at(self, k: int) -> float:
        i = k - self.start_index
        if i < 0:
            return 1.0
        if i >= self.values.size:
            raise IndexError("index %d beyond curve horizon" % k)
        return float(self.values[i])

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start_index, self.start_index + self.values.size)


def _require_coefficients(G: Rational):
    if not getattr(G, "coefficients_ok", True):
        raise NumericalError("coefficient form of this PGF is ill-conditioned; use its tail series")


def eval_pgf(G: Rational, s: float) -> float:
    _require_coefficients(G)
    den = G.denominator(s)
    if np.any(np.abs(den) < POLE_TOL):
        raise PoleError("denominator vanishes at s=%r" % (s,))
    return G.numerator(s) / den


def pgf_mean(G: Rational) -> float:
    """``G'(1)`` from the quotient rule on the reduced rational form, or
    the attached exact mean when there is one."""
    if getattr(G, "mean_value", None) is not None:
        return float(G.mean_value)
    num, den = G.numerator, G.denominator
    d1 = den(1.0)
    if abs(d1) < POLE_TOL * den.scale():
        if abs(num(1.0)) < 1e-11 * max(num.scale(), 1e-300):
            red = Rational(num, den).reduced()
            num, den = red.numerator, red.denominator
            d1 = den(1.0)
        if abs(d1) < POLE_TOL * den.scale():
            raise InfiniteMeanError("G'(s) diverges at s=1")
    n1 = num(1.0)
    dn = num.deriv()(1.0)
    dd = den.deriv()(1.0)
    value = (dn * d1 - n1 * dd) / (d1 * d1)
    if not np.isfinite(value):
        raise InfiniteMeanError("G'(1) is not finite")
    return float(value)


def ccdf_transform(G: Rational) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator coefficients of ``(1 - G(s)) / (1 - s)``,
    normalized to ``b_0 = 1``."""
    _require_coefficients(G)
    R = Rational(G.numerator, G.denominator).reduced()
    num, den = R.numerator, R.denominator
    b0 = den.coef[0]
    if b0 == 0.0:
        raise PoleError("b_0 = 0: the tail transform has a pole at the origin")
    diff = den - num
    q, rem = diff.deflate_at_one()
    if abs(rem) > NORMALIZATION_TOL * max(den.scale(), num.scale()):
        raise NormalizationError("G(1) != 1; (1-G)/(1-s) is not a power series")
    # (D - N) = (s - 1) q  =>  (D - N)/(1 - s) = -q
    a = -q.coef / b0
    b = den.coef / b0
    return a, b


def invert_ccdf(G: Rational, k_max: int) -> TailCurve:
    """Exact ``P[X > k]`` for ``k = 0..k_max`` by the coefficient recursion
    ``P[X>k] = (a_k - sum_{u=1..k} b_u P[X>k-u]) / b_0``."""
    if k_max < 0:
        raise ConfigError("k_max must be >= 0")
    series = getattr(G, "tail_series", None)
    a, b = ccdf_transform(G) if series is None else series(int(k_max))
    tail = _kernels.ccdf_recursion(a, b, int(k_max))
    if np.any(tail < -RANGE_TOL) or np.any(tail > 1.0 + RANGE_TOL):
        bad = int(np.flatnonzero((tail < -RANGE_TOL) | (tail > 1.0 + RANGE_TOL))[0])
        raise InstabilityError(
            "tail recursion left [0, 1] at k=%d (value %.3g)" % (bad, tail[bad])
        )
    if tail.size > 1 and np.any(np.diff(tail) > RANGE_TOL):
        raise InstabilityError("tail recursion produced an increasing tail")
    tail = np.clip(tail, 0.0, 1.0)
    tail = np.minimum.accumulate(tail)
    return TailCurve(0, tail, "exact")


def compose_affine_power(G: Rational, a: float, b: float, n: int) -> Rational:
    """``(a + b G(s))**n`` by repeated squaring of numerator and denominator."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    base_num = G.denominator * a + G.numerator * b
    num = _poly_power(base_num.coef, n)
    den = _poly_power(G.denominator.coef, n)
    r = Rational(Polynomial(num), Polynomial(den))
    try:
        return RationalPgf.of(r)
    except NormalizationError:
        return r


def product_pgf(*factors: RationalPgf) -> RationalPgf:
    """PGF of a sum of independent variables, keeping the factors.

    Expanding several factors whose poles nearly coincide is badly
    conditioned at ``s = 1``, so the result carries the tail series (by
    convolution of non-negative sequences), the cumulants (summed over
    factors) and the mean of the factors alongside the expanded form.
    """
    if not factors:
        raise ConfigError("at least one factor is needed")
    expanded = Rational(factors[0].numerator, factors[0].denominator)
    for f in factors[1:]:
        expanded = expanded * f
    cgfs = [_Cgf(Rational(f.numerator, f.denominator), +1) for f in factors]

    def cgf(y):
        parts = np.array([c.parts(y) for c in cgfs])
        return tuple(float(v) for v in parts.sum(axis=0))

    def tail_series(k_max):
        tail = pmf = None
        for f in factors:
            f_pmf = _kernels.ccdf_recursion(f.numerator.coef, f.denominator.coef, k_max)
            f_tail = _kernels.ccdf_recursion(*ccdf_transform(f), k_max)
            if tail is None:
                tail, pmf = f_tail, f_pmf
            else:
                tail = tail + np.convolve(pmf, f_tail)[: k_max + 1]
                pmf = np.convolve(pmf, f_pmf)[: k_max + 1]
        return tail, np.ones(1)

    radius = min(convergence_radius(f) for f in factors)
    mean = sum(pgf_mean(f) for f in factors)
    return RationalPgf.of(expanded, cgf, radius, tail_series, mean)


def _poly_power(c: np.ndarray, n: int) -> np.ndarray:
    result = np.ones(1)
    base = np.asarray(c, dtype=float)
    while True:
        if n & 1:
            result = np.convolve(result, base)
            _check_overflow(result)
        n >>= 1
        if not n:
            return result
        base = np.convolve(base, base)
        _check_overflow(base)


def _check_overflow(c: np.ndarray):
    if not np.all(np.isfinite(c)) or np.max(np.abs(c)) > COEF_LIMIT:
        raise OverflowCoefficientError("coefficient magnitude exceeds 1e300")


# ---------------------------------------------------------------------------
# saddlepoint approximation


def q_function(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def b0_factor(z: float) -> float:
    """``z exp(z^2/2) Q(z)``, evaluated through the scaled complementary
    error function so that large arguments do not overflow."""
    return z * 0.5 * float(erfcx(z / math.sqrt(2.0)))


def convergence_radius(G: Rational) -> float:
    """Smallest real pole of ``G`` beyond 1 (``inf`` for polynomials)."""
    R = Rational(G.numerator, G.denominator).reduced()
    den, num = R.denominator, R.numerator
    if den.degree == 0:
        return math.inf
    roots = _finite_roots(den.coef)
    num_roots = _finite_roots(num.coef)
    cand = []
    for r in roots:
        if abs(r.imag) > 1e-7 * max(1.0, abs(r)) or r.real <= 0.0:
            continue
        x = float(r.real)
        # skip removable singularities (a numerator root at the same place)
        if num_roots.size and np.min(np.abs(num_roots - x)) < 1e-7 * x:
            continue
        cand.append(x)
    if not cand:
        return math.inf
    r = min(cand)
    if r <= 1.0 + 1e-12:
        raise WindowEmptyError("radius of convergence %.6g is not above 1" % r)
    return _polish_root(den, r)


def _finite_roots(coef: np.ndarray) -> np.ndarray:
    """Roots of an ascending-coefficient polynomial, dropping leading
    coefficients so small that their roots lie beyond 1e100."""
    c = np.trim_zeros(np.asarray(coef, dtype=float), "b")
    while c.size > 1 and abs(c[-1]) < 1e-100 * np.max(np.abs(c[:-1])):
        c = c[:-1]
    if c.size < 2:
        return np.zeros(0)
    return np.roots(c[::-1])


def _polish_root(den: Polynomial, r: float) -> float:
    lo, hi = r * (1 - 1e-6), r * (1 + 1e-6)
    flo, fhi = den(lo), den(hi)
    if flo == 0.0:
        return lo
    if np.sign(flo) == np.sign(fhi):
        return r  # even multiplicity; numpy's estimate is all we have
    while hi - lo > 1e-12 * r:
        mid = 0.5 * (lo + hi)
        fm = den(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_section(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns (x, f(x))."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    if fc < fd:
        return c, fc
    return d, fd


class _Cgf:
    """Cumulant generating function of ``sign * X``: ``log G(exp(sign * x))``."""

    def __init__(self, G: Rational, sign: int):
        self.num = G.numerator.coef
        self.den = G.denominator.coef
        self.sign = sign

    def parts(self, x: float):
        y = self.sign * x
        ln, n1, n2 = _log_derivative_ratios(self.num, y)
        ld, d1, d2 = _log_derivative_ratios(self.den, y)
        s = math.exp(y)
        kappa = ln - ld
        g1 = n1 - d1  # G'/G
        g2 = n2 - 2.0 * n1 * d1 - d2 + 2.0 * d1 * d1  # G''/G
        k1 = s * g1
        k2 = s * g1 + s * s * g2 - k1 * k1
        return kappa, self.sign * k1, k2

    def kappa(self, x: float) -> float:
        y = self.sign * x
        return _log_derivative_ratios(self.num, y)[0] - _log_derivative_ratios(self.den, y)[0]


class _FunctionCgf:
    """Same interface as :class:`_Cgf` for a closed-form cumulant function.

    ``cgf(y)`` returns ``(kappa, kappa', kappa'')`` at ``y``.  Closed forms
    of queue transforms are 0/0 at ``s = 1``, so within ``NEAR_ONE`` of the
    origin the coefficient form (well conditioned there) is used instead.
    When the coefficient form is unusable, ``kappa''`` is interpolated
    linearly between the closed-form values at ``+-NEAR_ONE`` and
    integrated from ``kappa(0) = 0``, ``kappa'(0) = mean``.
    """

    NEAR_ONE = 1e-4

    def __init__(self, cgf, G: RationalPgf, R: Rational, sign: int, y_max: float = math.inf):
        self.cgf = cgf
        self.sign = sign
        self.y_max = y_max
        self.coef_cgf = _Cgf(R, sign) if G.coefficients_ok else None
        self.mean = pgf_mean(G)
        self._bridge = None

    def _near_one(self, y: float):
        if self._bridge is None:
            h = self.NEAR_ONE
            lo, hi = self.cgf(-h)[2], self.cgf(h)[2]
            self._bridge = (0.5 * (lo + hi), (hi - lo) / (2.0 * h))
        a, b = self._bridge
        return (
            self.mean * y + a * y * y / 2.0 + b * y**3 / 6.0,
            self.mean + a * y + b * y * y / 2.0,
            a + b * y,
        )

    def parts(self, x: float):
        y = self.sign * x
        if abs(y) < self.NEAR_ONE:
            if self.coef_cgf is not None:
                return self.coef_cgf.parts(x)
            k0, k1, k2 = self._near_one(y)
        else:
            if y >= self.y_max:
                raise PoleError("beyond the radius of convergence")
            k0, k1, k2 = self.cgf(y)
        return k0, self.sign * k1, k2

    def kappa(self, x: float) -> float:
        return self.parts(x)[0]


def _right_tail(cgf, d: float, x_hi: float) -> float:
    """Lattice saddlepoint approximation of ``P[Y >= d]`` for ``d`` above
    the mean of ``Y``."""

    def objective(x):
        try:
            v = cgf.kappa(x)
        except (PoleError, ValueError, OverflowError):
            return math.inf
        return v - x * d if math.isfinite(v) else math.inf

    lo = 1e-8
    if not x_hi > lo:
        raise WindowEmptyError("empty exponential-moment window")
    theta, _ = golden_section(objective, lo, x_hi, tol=1e-12)
    if x_hi - theta < 1e-7 * max(1.0, x_hi):
        raise OptimizerError("saddlepoint search hit the edge of the moment window")
    kappa, _, k2 = cgf.parts(theta)
    if not k2 > 0.0:
        raise OptimizerError("non-positive curvature at the saddlepoint")
    sigma = math.sqrt(k2)
    log_tail = kappa - theta * d
    value = b0_factor(theta * sigma) / (sigma * -math.expm1(-theta)) * math.exp(log_tail)
    return value


def saddlepoint_ccdf(G: Rational, d: int) -> float:
    """Saddlepoint approximation of ``P[X >= d]``.

    For ``d`` at or above the mean the tilted lattice formula is applied
    directly; below the mean it is applied to ``-X`` through
    ``P[X >= d] = 1 - P[-X >= 1 - d]``.  Thresholds at or outside the support
    edges return the exact value.
    """
    R = Rational(G.numerator, G.denominator).reduced()
    d = int(d)
    lowest = R.numerator.low_order()
    if d <= lowest:
        return 1.0
    if R.denominator.degree == 0:
        top = R.numerator.degree
        coef = R.numerator.coef / R.denominator.coef[0]
        if d > top:
            return 0.0
        if d == top:
            return float(coef[top])
    closed = getattr(G, "cgf", None)
    mean = pgf_mean(G if closed is not None else R)
    if d >= mean:
        radius = G.radius if closed is not None else convergence_radius(R)
        y_max = math.log(radius) if math.isfinite(radius) else math.inf
        x_hi = y_max - 1e-6 if math.isfinite(radius) else 60.0
        cgf = _Cgf(R, +1) if closed is None else _FunctionCgf(closed, G, R, +1, y_max)
        return float(min(1.0, max(0.0, _right_tail(cgf, d, x_hi))))
    if d == lowest + 1:
        p_low = R.numerator.coef[lowest] / R.denominator.coef[0]
        return float(1.0 - p_low)
    cgf = _Cgf(R, -1) if closed is None else _FunctionCgf(closed, G, R, -1)
    left = _right_tail(cgf, 1 - d, 60.0)
    return float(min(1.0, max(0.0, 1.0 - left)))
