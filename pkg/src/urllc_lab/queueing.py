"""Steady-state delay of the bulk-arrival queue.

Packets arrive independently in each channel use with probability ``lam``.
In the frame-synchronous model the packets of one frame form a bulk that
is served FCFS at frame granularity; in the frame-asynchronous model each
packet starts service at the next free channel use.  Delays are returned
as rational PGFs (frames for the synchronous model, channel uses for the
asynchronous one) and converted into delay-violation probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.stats import binom

from .channel import ServiceModel
from .errors import (
    ConfigError,
    DegreeOverflowError,
    NoFeasibleRateError,
    NumericalError,
    StabilityError,
)
from .pgf import (
    Polynomial,
    Rational,
    RationalPgf,
    TailCurve,
    golden_section,
    invert_ccdf,
    pgf_mean,
    saddlepoint_ccdf,
)

ASYNC_DEGREE_CAP = 100_000
STABILITY_GUARD = 1e-12


@dataclass(frozen=True)
class QueueConfig:
    n: int
    lam: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("frame size n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        if not 0.0 < self.lam < 1.0:
            raise ConfigError("arrival probability lambda must lie in (0, 1)")

    @property
    def p_empty_frame(self) -> float:
        """``(1 - lam)**n``: no arrival within a frame."""
        return math.exp(self.n * math.log1p(-self.lam))

    @property
    def p_busy_frame(self) -> float:
        """``1 - (1 - lam)**n`` computed without cancellation."""
        return -math.expm1(self.n * math.log1p(-self.lam))

    def intensity(self, service: ServiceModel) -> float:
        return self.lam * self.n * service.mean()

    def check_stable(self, service: ServiceModel):
        rho = self.intensity(service)
        if not rho < 1.0:
            raise StabilityError("traffic intensity %.6g is not below 1" % rho)
        return rho


@dataclass(frozen=True)
class DelayAnalysis:
    delay_pgf: RationalPgf
    mean: float
    ccdf: TailCurve
    threshold: int
    tail: float
    p_dv: float
    method: str


def frames_threshold(d0: int, n: int) -> int:
    """Integer delay threshold ``ceil(d0 / n)``."""
    if d0 < 1:
        raise ConfigError("d0 must be >= 1")
    return -(-int(d0) // int(n))


def _bulk_excess_numerator(N: Polynomial, D: Polynomial, q: QueueConfig) -> Polynomial:
    """Numerator over ``D**n`` of ``((1-lam+lam G)**n - (1-lam)**n) / u0``
    with ``G = N/D`` and ``u0 = 1 - (1-lam)**n``.

    Expanding the binomial and dropping the ``j = 0`` term analytically
    avoids the cancellation that a direct subtraction suffers at small
    ``lam``.  Homogeneous Horner: ``V_j = V_{j+1} N + c_j D**(n-j)``.
    """
    n = q.n
    j = np.arange(n + 1)
    c = binom.pmf(j, n, q.lam) / q.p_busy_frame
    # once the binomial terms underflow they contribute nothing
    top = int(np.flatnonzero(c)[-1]) if np.any(c[1:] > 0) else 1
    top = max(top, 1)
    d_pow = [Polynomial.constant(1.0)]
    for _ in range(n - 1):
        d_pow.append(d_pow[-1] * D)
    v = Polynomial.constant(float(c[top])) * d_pow[n - top]
    for jj in range(top - 1, 0, -1):
        v = v * N + d_pow[n - jj] * float(c[jj])
    return v * N


def delay_pgf_sync(service: ServiceModel, q: QueueConfig) -> RationalPgf:
    """PGF of the steady-state delay (in frames) of the frame-synchronous
    bulk queue."""
    rho = q.check_stable(service)
    G = service.pgf()
    N, D = G.numerator, G.denominator
    excess = _bulk_excess_numerator(N, D, q)  # u0 * ((1-lam+lam G)^n - (1-lam)^n) * D^n / u0
    d_n = D * Polynomial.constant(1.0)
    for _ in range(q.n - 1):
        d_n = d_n * D
    # s - (1-lam+lam G)^n  =  [ (s - (1-lam)^n) D^n - u0 * excess ] / D^n, which vanishes at s = 1
    shifted = d_n.shift(1) - d_n * q.p_empty_frame - excess * q.p_busy_frame
    quotient, rem = shifted.deflate_at_one()
    if abs(rem) > 1e-9 * max(shifted.scale(), 1.0):
        raise NumericalError("bulk transform does not vanish at s = 1 (residual %.3g)" % rem)
    lam, n = q.lam, q.n
    g_s = _service_derivatives(service)

    def load(s):
        # s - (1 - lam + lam G_S(s))^n, positive on (1, radius)
        return s - math.exp(n * math.log1p(lam * (g_s(s)[0] - 1.0)))

    def cgf(y):
        # G = (1-rho)(s-1) E / F with E = (K - (1-lam)^n)/u0, F = s - K and
        # K = P^n, P = 1 - lam + lam G_S(s); logarithmic derivatives in s
        s = math.exp(y)
        z, z1, z2 = g_s(s)
        p = 1.0 - lam + lam * z
        k = math.exp(n * math.log(p))
        # K / (K - (1-lam)^n) without cancellation
        k_ratio = -1.0 / math.expm1(-n * math.log1p(lam * z / (1.0 - lam)))
        k1 = n * lam * z1 / p * k
        k2 = (n * (n - 1) * (lam * z1 / p) ** 2 + n * lam * z2 / p) * k
        f, f1, f2 = s - k, 1.0 - k1, -k2
        e_log = math.log(k / k_ratio) - math.log(q.p_busy_frame)
        e1, e2 = k1 / k * k_ratio, k2 / k * k_ratio
        return _assemble_cgf(s, rho, e_log, e1, e2, f, f1, f2)

    radius = _first_root_above_one(load, _service_radius(service))
    R = Rational(excess * (1.0 - rho), quotient).reduced()
    return RationalPgf.of(
        R, cgf, radius, _sync_tail_series(service, q, rho), _sync_mean(service, q, rho)
    )


# ---------------------------------------------------------------------------
# well-conditioned tail series
#
# For a PGF G with mean m write A = (1 - G)/(1 - s) (tail probabilities) and
# W = (m - A)/(1 - s) (tail sums of A).  Both have non-negative coefficients
# and for a sum X + Y of independent variables
#   A = A_X + G_X A_Y,   W = W_X + m_Y A_X + G_X W_Y,
# so the queue transforms can be expanded without cancellation.


@dataclass(frozen=True)
class _Tails:
    pmf: np.ndarray
    tail: np.ndarray
    tail_sum: np.ndarray
    mean: float
    fact2: float  # E[X (X - 1)]

    def __add__(self, other: "_Tails") -> "_Tails":
        m = self.pmf.size

        def conv(x, y):
            return np.convolve(x, y)[:m]

        return _Tails(
            conv(self.pmf, other.pmf),
            self.tail + conv(self.pmf, other.tail),
            self.tail_sum + other.mean * self.tail + conv(self.pmf, other.tail_sum),
            self.mean + other.mean,
            self.fact2 + other.fact2 + 2.0 * self.mean * other.mean,
        )

    def times(self, n: int) -> "_Tails":
        result, base = None, self
        while True:
            if n & 1:
                result = base if result is None else result + base
            n >>= 1
            if not n:
                return result
            base = base + base


def _service_tails(service: ServiceModel, k_max: int) -> _Tails:
    k = np.arange(k_max + 1, dtype=float)
    if service.kind == "geometric":
        e = service.eps_frame
        tail = e**k
        pmf = np.zeros(k_max + 1)
        pmf[1:] = (1.0 - e) * tail[:-1]
        return _Tails(pmf, tail, e * tail / (1.0 - e), 1.0 / (1.0 - e), 2.0 * e / (1.0 - e) ** 2)
    p = np.asarray(service.pmf, dtype=float)
    full_tail = np.cumsum(p[::-1])[::-1][1:]  # P[tau > k], k = 0..L-1
    full_sum = np.append(np.cumsum(full_tail[::-1])[::-1][1:], 0.0)

    def fit(x):
        out = np.zeros(k_max + 1)
        out[: min(x.size, k_max + 1)] = x[: k_max + 1]
        return out

    j = np.arange(p.size)
    return _Tails(fit(p), fit(full_tail), fit(full_sum), float(j @ p), float((j * (j - 1.0)) @ p))


def _frame_work_tails(service: ServiceModel, q: QueueConfig, k_max: int) -> _Tails:
    """Service frames brought by one frame's arrivals, PGF ``(1-lam+lam G_S)**n``."""
    s, lam = _service_tails(service, k_max), q.lam
    pmf = lam * s.pmf
    pmf[0] += 1.0 - lam
    one = _Tails(pmf, lam * s.tail, lam * s.tail_sum, lam * s.mean, lam * s.fact2)
    return one.times(q.n)


def _sync_tail_series(service: ServiceModel, q: QueueConfig, rho: float):
    def series(k_max):
        b_tails = _frame_work_tails(service, q, k_max)
        a = (1.0 - rho) * b_tails.tail / q.p_busy_frame + b_tails.tail_sum
        b = -b_tails.tail
        b[0] = q.p_empty_frame
        return a, b

    return series


def _sync_mean(service: ServiceModel, q: QueueConfig, rho: float) -> float:
    s, lam, n = _service_tails(service, 0), q.lam, q.n
    fact2 = n * lam * s.fact2 + n * (n - 1) * (lam * s.mean) ** 2
    return rho / q.p_busy_frame + 0.5 * fact2 / (1.0 - rho)


def _async_tail_series(service: ServiceModel, q: QueueConfig, rho: float):
    n, lam = q.n, q.lam

    def series(k_max):
        s = _service_tails(service, k_max // n + 1)
        k = np.arange(k_max + 1)
        i, r = k // n, k % n
        tail = s.tail[i]  # P[n tau > k]
        tail_sum = (n - 1 - r) * tail + n * s.tail_sum[i]
        a = (1.0 - rho) * tail + lam * tail_sum
        b = -lam * tail
        b[0] = 1.0 - lam
        return a, b

    return series


def _async_mean(service: ServiceModel, q: QueueConfig, rho: float) -> float:
    s, n = _service_tails(service, 0), q.n
    fact2 = n * n * (s.fact2 + s.mean) - n * s.mean
    return n * s.mean + 0.5 * q.lam * fact2 / (1.0 - rho)


def _assemble_cgf(s, rho, e_log, e1, e2, f, f1, f2):
    """``kappa`` and its ``y``-derivatives for ``G = (1-rho)(s-1) E / F``,
    given ``log E``, ``E'/E``, ``E''/E`` and ``F, F', F''`` at ``s = e^y``."""
    t = s - 1.0
    kappa = math.log1p(-rho) + math.log(abs(t)) + e_log - math.log(abs(f))
    l1 = 1.0 / t + e1 - f1 / f
    l2 = -1.0 / (t * t) + e2 - e1 * e1 - f2 / f + (f1 / f) ** 2
    return kappa, s * l1, s * l1 + s * s * l2


def _service_derivatives(service: ServiceModel):
    """``s -> (G_S(s), G_S'(s), G_S''(s))`` evaluated from the service
    parameters."""
    if service.kind == "geometric":
        eps = service.eps_frame

        def geo(s):
            den = 1.0 - eps * s
            return (1.0 - eps) * s / den, (1.0 - eps) / den**2, 2.0 * eps * (1.0 - eps) / den**3

        return geo
    c0 = np.asarray(service.pmf, dtype=float)
    c1 = np.polynomial.polynomial.polyder(c0)
    c2 = np.polynomial.polynomial.polyder(c1)
    pv = np.polynomial.polynomial.polyval
    return lambda s: (float(pv(s, c0)), float(pv(s, c1)), float(pv(s, c2)))


def _service_radius(service: ServiceModel) -> float:
    if service.kind == "geometric" and service.eps_frame > 0.0:
        return 1.0 / service.eps_frame
    return math.inf


def _first_root_above_one(f, limit: float) -> float:
    """Smallest ``s > 1`` with ``f(s) = 0`` for a concave ``f`` that
    vanishes at 1 with positive slope; ``limit`` bounds the search (the
    point where ``f`` diverges to minus infinity)."""
    cap = min(limit, math.exp(60.0))
    step = 1e-3
    lo = 1.0
    while True:
        hi = 1.0 + step
        if hi >= cap:
            if not math.isfinite(limit):
                return math.inf
            # f -> -inf at the service pole, so the root lies below it
            hi = 1.0 + (cap - 1.0) * (1.0 - 1e-12)
            break
        try:
            val = f(hi)
        except (ArithmeticError, ValueError):
            val = -math.inf
        if not val > 0.0:
            break
        lo = hi
        step *= 2.0
    if lo == 1.0:
        lo = 1.0 + 1e-9
        if not f(lo) > 0.0:
            raise NumericalError("load function is not positive just above s = 1")
    return float(brentq(lambda s: _finite(f, s), lo, hi, xtol=1e-14, rtol=1e-13))


def _finite(f, s):
    try:
        v = f(s)
    except (ArithmeticError, ValueError):
        return -1e300
    return v if math.isfinite(v) else -1e300


def delay_pgf_async(service: ServiceModel, q: QueueConfig, degree_cap: int = ASYNC_DEGREE_CAP) -> RationalPgf:
    """PGF of the steady-state delay (in channel uses) of the
    frame-asynchronous queue."""
    rho = q.check_stable(service)
    G = service.pgf()
    deg = q.n * max(G.numerator.degree, G.denominator.degree)
    if deg > degree_cap:
        raise DegreeOverflowError(
            "async delay transform would have degree %d (cap %d); use the saddlepoint method" % (deg, degree_cap)
        )
    N, D = G.numerator.substitute_power(q.n), G.denominator.substitute_power(q.n)
    # s - 1 + lam (1 - N/D) = (s - 1)(D + lam Q) / D  with  D - N = (s - 1) Q
    Qp, rem = (D - N).deflate_at_one()
    if abs(rem) > 1e-9 * max(D.scale(), 1.0):
        raise NumericalError("service transform is not normalized")
    lam, n = q.lam, q.n
    g_s = _service_derivatives(service)

    def load(s):
        # (s - 1) - lam (G_S(s^n) - 1), positive on (1, radius)
        return (s - 1.0) - lam * (g_s(s**n)[0] - 1.0)

    def cgf(y):
        # G = (1-rho)(s-1) g / F with g = G_S(s^n), F = (s-1) - lam (g-1)
        s = math.exp(y)
        sn = math.exp(n * y)
        z, z1, z2 = g_s(sn)
        g1 = n * sn / s * z1
        g2 = n * (n - 1) * sn / (s * s) * z1 + (n * sn / s) ** 2 * z2
        f, f1, f2 = (s - 1.0) - lam * (z - 1.0), 1.0 - lam * g1, -lam * g2
        return _assemble_cgf(s, rho, math.log(z), g1 / z, g2 / z, f, f1, f2)

    radius = _first_root_above_one(load, _service_radius(service) ** (1.0 / n))
    R = Rational(N * (1.0 - rho), D + Qp * q.lam).reduced()
    return RationalPgf.of(
        R, cgf, radius, _async_tail_series(service, q, rho), _async_mean(service, q, rho)
    )


def _tail_at(G: RationalPgf, d: int, method: str):
    """``P[X >= d]`` and the curve it was read from."""
    if method == "exact":
        curve = invert_ccdf(G, max(d - 1, 0))
        return (1.0 if d <= 0 else curve.at(d - 1)), curve
    if method == "saddlepoint":
        v = saddlepoint_ccdf(G, d)
        return v, TailCurve(max(d - 1, 0), [v], "saddlepoint")
    raise ConfigError("method must be 'exact' or 'saddlepoint'")


def delay_violation(
    delay_pgf: RationalPgf,
    d0: int,
    q: QueueConfig,
    eps_undetected: float = 0.0,
    method: str = "exact",
    unit: str = "frames",
) -> DelayAnalysis:
    """Union bound ``P[delay >= d] + eps_undetected``, clipped to [0, 1].

    With ``unit="frames"`` the threshold is ``ceil(d0 / n)`` frames; with
    ``unit="channel_uses"`` (asynchronous model) it is ``d0`` itself.
    """
    if not 0.0 <= eps_undetected <= 1.0:
        raise ConfigError("eps_undetected must lie in [0, 1]")
    if unit == "frames":
        d = frames_threshold(d0, q.n)
    elif unit == "channel_uses":
        if d0 < 1:
            raise ConfigError("d0 must be >= 1")
        d = int(d0)
    else:
        raise ConfigError("unit must be 'frames' or 'channel_uses'")
    tail, curve = _tail_at(delay_pgf, d, method)
    p_dv = min(1.0, max(0.0, tail + eps_undetected))
    return DelayAnalysis(delay_pgf, pgf_mean(delay_pgf), curve, d, tail, p_dv, method)


# ---------------------------------------------------------------------------
# network-calculus comparison bound


def snc_delay_bound(eps_frame: float, q: QueueConfig, d0: int) -> float:
    """Chernoff-type bound on ``P[delay >= ceil(d0/n)]`` for ARQ.

    Minimizes ``G_S(1/s)**(d-1) / (1 - G_A(s) G_S(1/s))`` over ``s > 1`` with
    ``G_A(s) = (1-lam+lam s)**n`` and ``G_S(s) = eps + (1-eps) s``.  In
    ``x = log s`` the log-objective is convex, so golden-section search on
    the feasible interval finds the infimum.  Returns 1 when no ``s`` is
    feasible.
    """
    if not 0.0 <= eps_frame < 1.0:
        raise ConfigError("eps_frame must lie in [0, 1)")
    d = frames_threshold(d0, q.n)
    n, lam = q.n, q.lam

    def log_ga(x):
        return n * math.log1p(lam * math.expm1(x))

    def log_gs_inv(x):
        return math.log(eps_frame + (1.0 - eps_frame) * math.exp(-x))

    def h(x):
        return log_ga(x) + log_gs_inv(x)

    if n * lam >= 1.0 - eps_frame:
        return 1.0
    # h is convex with h(0) = 0 and h'(0) < 0; find where it returns to 0
    x_max = 1.0
    while h(x_max) < 0.0 and x_max < 700.0:
        x_max *= 2.0
    if h(x_max) < 0.0:
        x_max = 700.0
    else:
        lo, hi = 0.0, x_max
        if h(hi / 2.0) < 0.0:
            lo = hi / 2.0
        while hi - lo > 1e-13 * hi:
            mid = 0.5 * (lo + hi)
            if h(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        x_max = lo

    def log_obj(x):
        hx = h(x)
        if not hx < 0.0:
            return math.inf
        return (d - 1) * log_gs_inv(x) - math.log(-math.expm1(hx))

    _, best = golden_section(log_obj, 0.0, x_max, tol=1e-12)
    if not math.isfinite(best):
        return 1.0
    return min(1.0, math.exp(best))


# ---------------------------------------------------------------------------
# throughput maximization


def stability_limit(service: ServiceModel, n: int) -> float:
    return min(1.0, 1.0 / (n * service.mean())) - STABILITY_GUARD


def exact_violation(service: ServiceModel, n: int, d0: int) -> Callable[[float], float]:
    """``lam -> P_dv(d0)`` for the synchronous queue, by exact inversion."""

    def f(lam):
        q = QueueConfig(n, lam)
        return delay_violation(delay_pgf_sync(service, q), d0, q, service.eps_undetected).p_dv

    return f


def snc_violation(service: ServiceModel, n: int, d0: int) -> Callable[[float], float]:
    if service.kind != "geometric":
        raise ConfigError("the network-calculus bound needs an ARQ (geometric) service model")

    def f(lam):
        return min(1.0, snc_delay_bound(service.eps_frame, QueueConfig(n, lam), d0) + service.eps_undetected)

    return f


def max_arrival_rate(
    service: ServiceModel,
    n: int,
    d0: int,
    target: float,
    k_bits: int = 1,
    violation: Optional[Callable[[float], float]] = None,
    rel_tol: float = 1e-4,
):
    """Largest ``lam`` with ``P_dv(d0) <= target``; returns ``(lam_star, k * lam_star)``.

    ``violation`` maps ``lam`` to ``P_dv``; the default is the exact
    synchronous analysis.  Bisection relies on ``P_dv`` being
    non-decreasing in ``lam``.  A numerical failure of the evaluator is
    treated as a violation: it only happens next to the stability limit,
    where ``P_dv`` is close to one.
    """
    if not target > 0.0:
        raise ConfigError("target must be positive")
    hi = stability_limit(service, n)
    if not hi > 0.0:
        raise NoFeasibleRateError("no stable arrival rate")
    if target >= 1.0:
        return hi, k_bits * hi
    f = violation if violation is not None else exact_violation(service, n, d0)
    if service.eps_undetected > target:
        raise NoFeasibleRateError(
            "undetected-error probability %.3g alone exceeds the target" % service.eps_undetected
        )

    def ok(lam):
        try:
            return f(lam) <= target
        except NumericalError:
            return False

    lo = hi * 1e-9
    if not ok(lo):
        raise NoFeasibleRateError("target %.3g is violated even as lambda -> 0" % target)
    if ok(hi):
        return hi, k_bits * hi
    while hi - lo > rel_tol * lo:
        mid = 0.5 * (lo + hi) if hi < 1e3 * lo else math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, k_bits * lo
