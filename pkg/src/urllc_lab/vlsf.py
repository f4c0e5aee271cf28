"""Threshold decoding with stop feedback (VLSF) and its truncated HARQ
variant.

The decoder accumulates the information density of the transmitted
codeword frame by frame and stops at the first frame where it reaches
``gamma``.  An undetected error needs some other codeword to cross the
threshold first; its probability is bounded by ``(2^k - 1)`` times the
probability that one independent codeword crosses no later than the true
one.  Both walks are driven by the same channel output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels, mc
from .channel import ChannelSpec, ServiceModel, draw_products
from .errors import ConfigError, InfeasibleError, NormalizationError, NumericalError
from .mc import McEstimate

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class VlsfBoundResult:
    """``tau_tail[t-1]`` estimates ``P[min(ell_max, tau_hat) >= t]``."""

    gamma: float
    ell_max: int
    k_bits: int
    tau_tail: tuple
    eps_undetected_bound: McEstimate
    eps_detected_term: McEstimate
    event_probability: McEstimate  # P[tau_bar <= min(ell_max, tau_hat)] before scaling

    @property
    def eps_total(self) -> float:
        return min(1.0, self.eps_undetected_bound.value + self.eps_detected_term.value)

    def tail_values(self) -> np.ndarray:
        return np.array([e.value for e in self.tau_tail])


def _codebook_multiplier(k_bits: int) -> float:
    return 2.0**k_bits - 1.0


def _walk_counts(spec, gammas, ell_max, samples, seed):
    """Sufficient statistics shared by every threshold in ``gammas``.

    Returns ``stop_hist[g, t]`` = #samples with ``tau_hat = t`` (``t`` in
    1..ell_max+1, sentinel ell_max+1) and ``events[g]`` = #samples with
    ``tau_bar <= min(ell_max, tau_hat)``.
    """
    gammas = np.asarray(gammas, dtype=float)
    n = spec.n
    length = n * ell_max

    def work(chunk, size):
        rng = mc.substream(seed, mc.STREAM_VLSF, chunk)
        # x_bar = s x with s an independent random sign, so x_bar y = s (x y)
        xy = draw_products(spec, rng, (size, length))
        sign = np.where(rng.random((size, length)) < 0.5, -1.0, 1.0)
        both = np.concatenate([xy, sign * xy], axis=0)
        frames = _kernels.grouped_info_density(both, np.array([1.0]), n)[0]
        walks = np.cumsum(frames, axis=1)
        true_walk, bar_walk = walks[:size], walks[size:]
        hist = np.zeros((gammas.size, ell_max + 2), dtype=np.int64)
        events = np.zeros(gammas.size, dtype=np.int64)
        for g, gamma in enumerate(gammas):
            hit = true_walk >= gamma
            tau_hat = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, ell_max + 1)
            hit_bar = bar_walk >= gamma
            tau_bar = np.where(hit_bar.any(axis=1), hit_bar.argmax(axis=1) + 1, ell_max + 1)
            hist[g] = np.bincount(tau_hat, minlength=ell_max + 2)
            events[g] = np.count_nonzero(tau_bar <= np.minimum(tau_hat, ell_max))
        return hist, events

    hist = np.zeros((gammas.size, ell_max + 2), dtype=np.int64)
    events = np.zeros(gammas.size, dtype=np.int64)
    for h, e in mc.map_chunks(work, samples):
        hist += h
        events += e
    return hist, events


def _result(gamma, ell_max, k_bits, hist_row, event_count, samples, seed):
    # at_least[t] = #samples with tau_hat >= t, t = 0..ell_max+1
    at_least = np.cumsum(hist_row[::-1])[::-1]
    tail = tuple(McEstimate.proportion(int(at_least[t]), samples, seed) for t in range(1, ell_max + 1))
    detected = McEstimate.proportion(int(at_least[ell_max + 1]), samples, seed)
    event = McEstimate.proportion(int(event_count), samples, seed)
    bound = McEstimate.proportion(int(event_count), samples, seed, scale=_codebook_multiplier(k_bits))
    return VlsfBoundResult(float(gamma), int(ell_max), int(k_bits), tail, bound, detected, event)


def _check(spec, k_bits, ell_max, samples):
    if k_bits < 1:
        raise ConfigError("k_bits must be >= 1")
    if int(ell_max) != ell_max or ell_max < 1:
        raise ConfigError("ell_max must be a positive integer")
    if samples < 1:
        raise ConfigError("samples must be >= 1")


def simulate_threshold_crossing(
    spec: ChannelSpec, k_bits: int, gamma: float, ell_max: int, samples: int, seed: int = 0
) -> VlsfBoundResult:
    """Monte Carlo estimates of the stopping-time tail and both error terms
    for one threshold.  Calls with the same seed share all random draws, so
    results for different thresholds are coupled."""
    if not gamma > 0.0:
        raise ConfigError("gamma must be positive")
    return simulate_threshold_grid(spec, k_bits, [gamma], ell_max, samples, seed)[0]


def simulate_threshold_grid(
    spec: ChannelSpec, k_bits: int, gammas: Sequence[float], ell_max: int, samples: int, seed: int = 0
) -> list:
    """Like :func:`simulate_threshold_crossing` for several thresholds,
    evaluated on one set of walks."""
    _check(spec, k_bits, ell_max, samples)
    gammas = [float(g) for g in gammas]
    if not gammas or any(not g > 0.0 for g in gammas):
        raise ConfigError("gamma values must be positive")
    hist, events = _walk_counts(spec, gammas, int(ell_max), int(samples), int(seed))
    return [
        _result(g, int(ell_max), k_bits, hist[i], events[i], int(samples), int(seed))
        for i, g in enumerate(gammas)
    ]


def vlsf_service_model(result: VlsfBoundResult) -> ServiceModel:
    """Empirical service model from the truncated stopping time.

    ``pmf[t] = tail[t] - tail[t+1]`` for ``t < ell_max``; the last frame
    takes the remaining mass ``tail[ell_max]``.
    """
    tail = result.tail_values()
    ell = result.ell_max
    pmf = np.zeros(ell + 1)
    pmf[1:ell] = tail[:-1] - tail[1:]
    pmf[ell] = tail[-1]
    total = pmf.sum()
    if abs(total - 1.0) > 1e-9:
        raise NormalizationError("stopping-time pmf sums to %.12g" % total)
    return ServiceModel("empirical", pmf=pmf, eps_undetected=result.eps_total)


def default_gamma_grid(k_bits: int, points: int = 20) -> np.ndarray:
    """Log-spaced thresholds spanning ``[k ln2 / 4, 4 k ln2]`` nats."""
    base = k_bits * LOG2
    return np.geomspace(0.25 * base, 4.0 * base, points)


@dataclass(frozen=True)
class GammaPoint:
    gamma: float
    feasible: bool
    delay_tail: float
    eps_total: float
    p_dv: float
    mean_frames: float


def optimize_gamma(
    spec: ChannelSpec,
    k_bits: int,
    lam: float,
    d0: int,
    gamma_grid: Optional[Sequence[float]] = None,
    ell_max: int = 10,
    samples: int = 100_000,
    seed: int = 0,
    method: str = "exact",
):
    """Threshold minimizing ``P_dv(d0)`` on a grid.

    Returns ``(gamma_star, curve)``; ``curve`` holds one
    :class:`GammaPoint` per grid value, with unstable points marked
    infeasible (``p_dv = 1``).
    """
    from .queueing import QueueConfig, delay_pgf_sync, delay_violation

    grid = default_gamma_grid(k_bits) if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("gamma grid is empty")
    q = QueueConfig(spec.n, lam)
    curve = []
    for res in simulate_threshold_grid(spec, k_bits, grid, ell_max, samples, seed):
        service = vlsf_service_model(res)
        try:
            a = delay_violation(delay_pgf_sync(service, q), d0, q, service.eps_undetected, method)
            point = GammaPoint(res.gamma, True, a.tail, service.eps_undetected, a.p_dv, a.mean)
        except (InfeasibleError, NumericalError):
            point = GammaPoint(res.gamma, False, 1.0, service.eps_undetected, 1.0, math.inf)
        curve.append(point)
    feasible = [p for p in curve if p.feasible]
    if not feasible:
        raise InfeasibleError("no threshold on the grid gives a stable queue")
    best = min(feasible, key=lambda p: p.p_dv)
    return best.gamma, curve
