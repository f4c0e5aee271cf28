"""Peak age of information under four packet-management policies.

All quantities are in frames.  In each frame at most one new packet is
offered to the transmitter (with probability ``u0 = 1 - (1-lam)^n``):

* DWT: capacity one, arrivals during service are dropped.
* KTN: one waiting slot, later arrivals are dropped.
* KTL: one waiting slot that always holds the latest arrival.
* LCFS_S: a new arrival preempts the packet in service.

DWT accepts any service model; the others need geometric (ARQ) service.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy.stats import binom

from .channel import ServiceModel
from .errors import ConfigError, DegenerateChainError
from .pgf import Polynomial, Rational, RationalPgf, TailCurve, invert_ccdf, product_pgf, saddlepoint_ccdf
from .queueing import QueueConfig, frames_threshold


class AgePolicy(enum.Enum):
    DWT = "DWT"
    KTN = "KTN"
    KTL = "KTL"
    LCFS_S = "LCFS_S"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, name) -> "AgePolicy":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ConfigError("unknown policy %r (expected DWT, KTN, KTL or LCFS_S)" % name) from None


_CODES = {AgePolicy.DWT: 0, AgePolicy.KTN: 1, AgePolicy.KTL: 2, AgePolicy.LCFS_S: 3}


@dataclass(frozen=True)
class ChainProbabilities:
    """Transition and stationary probabilities of the waiting-room chain
    (empty / one in service / one in service plus one waiting)."""

    u0: float
    u1: float
    d: float
    p0: float
    p1: float
    p2: float


def chain_probabilities(eps: float, q: QueueConfig) -> ChainProbabilities:
    empty = q.p_empty_frame
    u0 = q.p_busy_frame
    u1 = eps * u0
    d = (1.0 - eps) * empty
    if not d > 0.0:
        raise DegenerateChainError("no departures are possible (d = 0)")
    # divide through by d^2 so that tiny d does not underflow the ratios
    r = u0 / d
    z = 1.0 + r + r * (u1 / d)
    p0 = 1.0 / z
    p1 = r / z
    p2 = r * (u1 / d) / z
    return ChainProbabilities(u0, u1, d, p0, p1, p2)


def _geometric(q_fail: float) -> Rational:
    # (1 - q) s / (1 - q s)
    return Rational(Polynomial([0.0, 1.0 - q_fail]), Polynomial([1.0, -q_fail]))


def _interarrival(q: QueueConfig) -> Rational:
    """Frames from a service completion until the next arrival, ``Geom(u0)``."""
    return _geometric(q.p_empty_frame)


def _service_pieces(eps: float, q: QueueConfig):
    g_t = _geometric(eps)
    g_t0 = _geometric(eps * q.p_empty_frame)
    return g_t, g_t0


def _service_after_arrival(eps: float, q: QueueConfig, ch: ChainProbabilities) -> Rational:
    """``G_T1 = ((d+u0) G_T - d G_T0) / u0`` without dividing by ``u0``.

    ``G_T - G_T0 = -eps u0 s (1-s) / ((1-eps s)(1-eps e s))`` with
    ``e = (1-lam)^n`` and ``d = (1-eps) e``, which collapses the expression
    to ``G_T G_T0 / s``.
    """
    g_t, g_t0 = _service_pieces(eps, q)
    return (g_t * g_t0).shift(-1)


def _pgf(r: Rational) -> RationalPgf:
    return RationalPgf.of(r.reduced())


def peak_age_pgf(policy, service: ServiceModel, q: QueueConfig) -> RationalPgf:
    """PGF of the steady-state peak age (frames) for ``policy``.

    The peak age is a sum of independent pieces; the pieces are kept as
    factors (see :func:`product_pgf`).
    """
    policy = AgePolicy.parse(policy)
    if policy is AgePolicy.DWT:
        # arrivals during service are dropped, so the buffer cannot grow and
        # no load condition is needed
        g = service.pgf()
        return product_pgf(g, g, _pgf(_interarrival(q)))
    if service.kind != "geometric":
        raise ConfigError("%s needs an ARQ (geometric) service model" % policy.value)
    eps = service.eps_frame
    g_t, g_t0 = _service_pieces(eps, q)
    g_a = _interarrival(q)
    if policy is AgePolicy.LCFS_S:
        g_a0, ret = _lcfs_pieces(eps, q, g_t0, g_a)
        return product_pgf(_pgf(g_a0), _pgf(ret))
    ch = chain_probabilities(eps, q)
    # p0/(p0+p1) = d/(d+u0) and p1/(p0+p1) = u0/(d+u0)
    w0 = ch.d / (ch.d + ch.u0)
    w1 = ch.u0 / (ch.d + ch.u0)
    if policy is AgePolicy.KTN:
        g_w = g_t.shift(-1) * w1 + w0
    else:
        g_w = g_t0.shift(-1) * (1.0 - ch.p0) + ch.p0
    # w0 G_T0 G_A + w1 G_T1 = G_T0 (w0 G_A + w1 G_T / s), as G_T1 = G_T G_T0 / s
    mix = g_a * w0 + g_t.shift(-1) * w1
    return product_pgf(_pgf(g_w), _pgf(g_t), _pgf(g_t0), _pgf(mix))


def _lcfs_pieces(eps, q, g_t0, g_a):
    p_del = (1.0 - eps) / (1.0 - eps * q.p_empty_frame)
    g_a0 = (g_a - g_t0 * (1.0 - p_del)) / p_del
    # p_del G_T0 / (1 - (1 - p_del) G_T0)
    ret = g_t0 * p_del / (1.0 - g_t0 * (1.0 - p_del))
    return g_a0, ret


def intermediate_pgfs(policy, eps: float, q: QueueConfig) -> dict:
    """The component transforms used to assemble the peak-age PGF, keyed by
    name; exposed so that their normalization can be checked."""
    policy = AgePolicy.parse(policy)
    g_t, g_t0 = _service_pieces(eps, q)
    g_a = _interarrival(q)
    out = {"A": g_a, "T": g_t, "T0": g_t0}
    if policy in (AgePolicy.KTN, AgePolicy.KTL):
        ch = chain_probabilities(eps, q)
        out["T1"] = _service_after_arrival(eps, q, ch)
        if policy is AgePolicy.KTN:
            out["W"] = g_t.shift(-1) * (ch.u0 / (ch.d + ch.u0)) + ch.d / (ch.d + ch.u0)
        else:
            out["W"] = g_t0.shift(-1) * (1.0 - ch.p0) + ch.p0
    elif policy is AgePolicy.LCFS_S:
        p_del = (1.0 - eps) / (1.0 - eps * q.p_empty_frame)
        out["A0"] = (g_a - g_t0 * (1.0 - p_del)) / p_del
    return out


@dataclass(frozen=True)
class AgeAnalysis:
    peak_age_pgf: RationalPgf
    ccdf: TailCurve
    threshold: int
    tail: float
    p_av: float
    method: str


def age_violation(
    pgf: RationalPgf, a0: int, q: QueueConfig, eps_undetected: float = 0.0, method: str = "exact"
) -> AgeAnalysis:
    """``P[peak age >= ceil(a0/n)] + eps_undetected``, clipped to [0, 1]."""
    if not 0.0 <= eps_undetected <= 1.0:
        raise ConfigError("eps_undetected must lie in [0, 1]")
    d = frames_threshold(a0, q.n)
    if method == "exact":
        curve = invert_ccdf(pgf, d - 1)
        tail = curve.at(d - 1)
    elif method == "saddlepoint":
        tail = saddlepoint_ccdf(pgf, d)
        curve = TailCurve(d - 1, [tail], "saddlepoint")
    else:
        raise ConfigError("method must be 'exact' or 'saddlepoint'")
    return AgeAnalysis(pgf, curve, d, tail, min(1.0, tail + eps_undetected), method)


# number of i.i.d. Geom(1-eps) terms and constant offset of the limit
_LIMIT_FORM = {
    AgePolicy.DWT: (2, 1),
    AgePolicy.KTN: (3, -1),
    AgePolicy.KTL: (2, 0),
    AgePolicy.LCFS_S: (1, 1),
}


def sum_geometric_tail(m: int, eps: float, j: int) -> float:
    """``P[T_1 + ... + T_m >= j]`` for i.i.d. ``T_i ~ Geom(1 - eps)`` on {1, 2, ...}.

    The sum reaches ``j`` iff fewer than ``m`` successes occur in the first
    ``j - 1`` trials.
    """
    if j <= m:
        return 1.0
    return float(binom.cdf(m - 1, j - 1, 1.0 - eps))


def high_rate_limit(policy, eps_frame: float, a0: int, n: int) -> float:
    """Limit of the peak-age violation probability as ``lam -> 1``."""
    policy = AgePolicy.parse(policy)
    if not 0.0 <= eps_frame < 1.0:
        raise ConfigError("eps_frame must lie in [0, 1)")
    d = frames_threshold(a0, n)
    m, c = _LIMIT_FORM[policy]
    return sum_geometric_tail(m, eps_frame, d - c)
