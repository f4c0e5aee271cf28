"""Discrete-event reference simulators.

These share no code with the transform-based analysis beyond the service
model's sampler, and serve as its oracle:

* :func:`simulate_fcfs_delay` - frame-synchronous bulk FCFS queue;
* :func:`simulate_async_delay` - channel-use-granular asynchronous queue;
* :func:`simulate_peak_age` - the four packet-management policies.

Random draws come from per-chunk Philox substreams (see :mod:`urllc_lab.mc`),
so a report depends only on the configuration, the run length and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binom

from . import _kernels, mc
from .age import AgePolicy
from .channel import ServiceModel
from .errors import ConfigError, NumericalError
from .pgf import TailCurve
from .queueing import QueueConfig

Z95 = 1.959963984540054
MIN_WARMUP = 1000
AGE_FRAME_CHUNK = 1 << 16
AGE_HIST_SIZE = 1 << 16


@dataclass(frozen=True)
class SimReport:
    """Empirical ``P[X > k]`` for ``k = 0..len(tail)-1`` (zero beyond)."""

    tail: np.ndarray
    std_error: np.ndarray
    samples: int
    seed: int
    config: dict
    counts: dict = field(default_factory=dict)

    def tail_gt(self, k: int) -> float:
        if k < 0:
            return 1.0
        return float(self.tail[k]) if k < self.tail.size else 0.0

    def tail_ge(self, d: int) -> float:
        return self.tail_gt(d - 1)

    def se_gt(self, k: int) -> float:
        if k < 0 or k >= self.std_error.size:
            return 0.0
        return float(self.std_error[k])

    def mean(self) -> float:
        # E[X] = sum_k P[X > k] for non-negative integers
        return float(self.tail.sum())

    def curve(self) -> TailCurve:
        return TailCurve(0, self.tail, "simulation", Z95 * self.std_error)


def default_warmup(total: int) -> int:
    return max(MIN_WARMUP, int(0.1 * total))


def _report(values: np.ndarray, seed, config, counts=None) -> SimReport:
    values = np.asarray(values, dtype=np.int64)
    n = values.size
    if n == 0:
        raise ConfigError("no samples left after warmup")
    hist = np.bincount(values)
    return _report_from_hist(hist, seed, config, counts)


def _report_from_hist(hist: np.ndarray, seed, config, counts=None) -> SimReport:
    n = int(hist.sum())
    tail = (n - np.cumsum(hist)) / n
    tail = np.clip(tail, 0.0, 1.0)
    se = np.sqrt(tail * (1.0 - tail) / n)
    return SimReport(tail, se, n, int(seed), dict(config), dict(counts or {}))


def _bulk_size_cdf(q: QueueConfig) -> np.ndarray:
    """CDF of ``Binomial(n, lam)`` conditioned on being positive, over 1..n."""
    k = np.arange(1, q.n + 1)
    pmf = binom.pmf(k, q.n, q.lam) / q.p_busy_frame
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return cdf


def _resolve_warmup(total, warmup):
    if total < 1:
        raise ConfigError("run length must be >= 1")
    w = default_warmup(total) if warmup is None else int(warmup)
    if w < 0:
        raise ConfigError("warmup must be >= 0")
    return w


def simulate_fcfs_delay(
    service: ServiceModel,
    q: QueueConfig,
    num_bulks: int,
    warmup_bulks: Optional[int] = None,
    seed: int = 0,
) -> SimReport:
    """Frame-synchronous bulk queue.

    Non-empty frames are ``Geom(u0)`` frames apart; a bulk of
    ``B ~ Binomial(n, lam) | B > 0`` packets needs the sum of ``B`` service
    times and starts in the frame after its arrival or when the previous
    bulk is done, whichever is later.  The recorded delay is waiting plus
    service time, in frames.
    """
    q.check_stable(service)
    warmup = _resolve_warmup(num_bulks, warmup_bulks)
    total = warmup + int(num_bulks)
    cdf = _bulk_size_cdf(q)
    u0 = q.p_busy_frame

    def draw(chunk, size):
        rng = mc.substream(seed, mc.STREAM_FCFS, chunk)
        gaps = rng.geometric(u0, size=size).astype(np.int64)
        sizes = np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64) + 1
        return gaps, service.sample_sums(rng, sizes), int(sizes.sum())

    parts = mc.map_chunks(draw, total)
    gaps = np.concatenate([p[0] for p in parts])
    services = np.concatenate([p[1] for p in parts])
    packets = sum(p[2] for p in parts)
    delays = _kernels.lindley_delays(gaps, services)
    config = {"model": "sync", "n": q.n, "lam": q.lam, "bulks": int(num_bulks), "warmup": warmup}
    return _report(delays[warmup:], seed, config, {"packets": packets})


def simulate_async_delay(
    service: ServiceModel,
    q: QueueConfig,
    num_packets: int,
    warmup: Optional[int] = None,
    seed: int = 0,
) -> SimReport:
    """Frame-asynchronous queue at channel-use granularity.

    Arrivals are ``Geom(lam)`` channel uses apart; a packet needs ``n * tau``
    channel uses and starts at the channel use after its arrival if the
    server is free.  Delays are in channel uses.
    """
    q.check_stable(service)
    warmup = _resolve_warmup(num_packets, warmup)
    total = warmup + int(num_packets)

    def draw(chunk, size):
        rng = mc.substream(seed, mc.STREAM_ASYNC, chunk)
        gaps = rng.geometric(q.lam, size=size).astype(np.int64)
        return gaps, q.n * service.sample(rng, size)

    parts = mc.map_chunks(draw, total)
    gaps = np.concatenate([p[0] for p in parts])
    services = np.concatenate([p[1] for p in parts])
    delays = _kernels.lindley_delays(gaps, services)
    config = {"model": "async", "n": q.n, "lam": q.lam, "packets": int(num_packets), "warmup": warmup}
    return _report(delays[warmup:], seed, config)


def simulate_peak_age(
    policy,
    service: ServiceModel,
    q: QueueConfig,
    num_departures: int,
    warmup: Optional[int] = None,
    seed: int = 0,
) -> SimReport:
    """Frame-level simulation of a packet-management policy.

    In each frame a packet is offered with probability ``u0`` (at most one
    per frame) and the packet in service is acknowledged with the service
    hazard.  An arrival sees the system state of its own frame; an ACK at
    the end of the frame then frees the server.  The peak age recorded at a
    delivery is the delivery frame minus the generation frame of the
    previously delivered packet.
    """
    policy = AgePolicy.parse(policy)
    if policy is not AgePolicy.DWT and service.kind != "geometric":
        raise ConfigError("%s needs an ARQ (geometric) service model" % policy.value)
    warmup = _resolve_warmup(num_departures, warmup)
    record_from = warmup + 1  # the first delivery has no predecessor
    record_until = record_from + int(num_departures)
    hazard = np.ascontiguousarray(service.hazard(), dtype=np.float64)
    state = np.zeros(_kernels.N_STATE, dtype=np.int64)
    state[6] = -1
    hist = np.zeros(AGE_HIST_SIZE, dtype=np.int64)
    p_arrive = q.p_busy_frame
    chunk = 0
    # a generous frame budget: stalls this long mean no progress is possible
    mean_cycle = 1.0 / p_arrive + service.mean()
    budget = int(50 * record_until * mean_cycle) + 10 * AGE_FRAME_CHUNK
    while state[8] < record_until:
        if state[0] > budget:
            raise NumericalError("peak-age simulation made no progress")
        rng = mc.substream(seed, mc.STREAM_AGE, chunk)
        u = rng.random((2, AGE_FRAME_CHUNK))
        _kernels.age_chunk(policy.code, u[0], u[1], p_arrive, hazard, state, hist, record_from, record_until)
        chunk += 1
    if state[12]:
        raise NumericalError("%d peak ages exceeded the histogram range" % state[12])
    in_system = int(state[1] + state[4])
    counts = {
        "frames": int(state[0]),
        "admitted": int(state[7]),
        "delivered": int(state[8]),
        "discarded": int(state[9]),
        "preempted": int(state[10]),
        "blocked": int(state[13]),
        "in_system": in_system,
    }
    if counts["admitted"] != counts["delivered"] + in_system + counts["discarded"] + counts["preempted"]:
        raise NumericalError("packet conservation violated: %r" % counts)
    config = {
        "policy": policy.value,
        "n": q.n,
        "lam": q.lam,
        "departures": int(num_departures),
        "warmup": warmup,
    }
    last = int(np.flatnonzero(hist)[-1]) + 1 if hist.any() else 1
    return _report_from_hist(hist[:last], seed, config, counts)
