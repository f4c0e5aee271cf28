"""Binary-input AWGN channel: information densities, the RCUs frame-error
bound, and per-packet service models.

Inputs are equiprobable on ``{-sqrt(rho), +sqrt(rho)}`` and the noise has
unit variance.  With ``x y`` the product of input and output, the
generalized information density of one symbol reduces to

    log 2 - log(1 + exp(-2 alpha x y)),

which is how every density in this module is evaluated (in log-space, so
large SNRs do not underflow).  ``alpha = 1`` gives the ordinary density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels, mc
from .errors import ConfigError, NormalizationError
from .mc import McEstimate
from .pgf import RationalPgf, golden_section

DEFAULT_ALPHAS = tuple(0.25 * i for i in range(1, 9))
REFINE_TOL = 0.02  # golden-section stopping width for alpha, relative to max(1, |a|+|b|)


@dataclass(frozen=True)
class ChannelSpec:
    rho: float
    n: int

    def __post_init__(self):
        if not (self.rho >= 0.0 and math.isfinite(self.rho)):
            raise ConfigError("rho must be a finite non-negative number")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("frame size n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def from_db(cls, snr_db: float, n: int) -> "ChannelSpec":
        return cls(10.0 ** (snr_db / 10.0), n)


# ---------------------------------------------------------------------------
# service models


@dataclass(frozen=True)
class ServiceModel:
    """Distribution of the per-packet stopping time (in frames) and the
    undetected-error probability.

    ``kind`` is "geometric" (ARQ, parameter ``eps_frame``) or "empirical"
    (finite support; ``pmf[j]`` is the probability of ``j`` frames,
    ``pmf[0] == 0``).
    """

    kind: str
    eps_frame: float = 0.0
    pmf: Optional[np.ndarray] = None
    eps_undetected: float = 0.0

    def __post_init__(self):
        if self.kind not in ("geometric", "empirical"):
            raise ConfigError("unknown service kind %r" % self.kind)
        if not 0.0 <= self.eps_undetected <= 1.0:
            raise ConfigError("eps_undetected must lie in [0, 1]")
        if self.kind == "geometric":
            if not 0.0 <= self.eps_frame < 1.0:
                raise ConfigError("eps_frame must lie in [0, 1)")
        else:
            p = np.array(self.pmf, dtype=float).reshape(-1)
            if p.size < 2 or p[0] != 0.0:
                raise ConfigError("empirical pmf must start at one frame (pmf[0] == 0)")
            if np.any(p < 0.0):
                raise ConfigError("negative pmf entry")
            if abs(p.sum() - 1.0) > 1e-9:
                raise NormalizationError("pmf sums to %.12g" % p.sum())
            nz = np.flatnonzero(p)
            p = p[: nz[-1] + 1]
            p.setflags(write=False)
            object.__setattr__(self, "pmf", p)

    @classmethod
    def geometric(cls, eps_frame: float, eps_undetected: float = 0.0) -> "ServiceModel":
        return cls("geometric", eps_frame=float(eps_frame), eps_undetected=float(eps_undetected))

    @classmethod
    def deterministic(cls, frames: int = 1) -> "ServiceModel":
        p = np.zeros(frames + 1)
        p[frames] = 1.0
        return cls("empirical", pmf=p)

    @property
    def ell_max(self) -> Optional[int]:
        return None if self.kind == "geometric" else self.pmf.size - 1

    def pgf(self) -> RationalPgf:
        if self.kind == "geometric":
            return RationalPgf.geometric(self.eps_frame)
        return RationalPgf.from_pmf(self.pmf)

    def mean(self) -> float:
        if self.kind == "geometric":
            return 1.0 / (1.0 - self.eps_frame)
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def tail(self, j: int) -> float:
        """``P[tau > j]``."""
        if j < 0:
            return 1.0
        if self.kind == "geometric":
            return self.eps_frame**j
        return float(self.pmf[j + 1 :].sum())

    def hazard(self) -> np.ndarray:
        """``h[j] = P[tau = j+1 | tau > j]``; the last entry repeats."""
        if self.kind == "geometric":
            return np.array([1.0 - self.eps_frame])
        p = self.pmf[1:]
        surv = np.concatenate([[1.0], 1.0 - np.cumsum(p)[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(surv > 0, p / np.where(surv > 0, surv, 1.0), 1.0)
        h[-1] = 1.0
        return np.clip(h, 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "geometric":
            return rng.geometric(1.0 - self.eps_frame, size=size).astype(np.int64)
        cdf = np.cumsum(self.pmf)
        cdf[-1] = 1.0
        u = rng.random(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def sample_sums(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """Total frames for bulks of ``counts`` packets each."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.kind == "geometric":
            if self.eps_frame == 0.0:
                return counts.copy()
            return counts + rng.negative_binomial(counts, 1.0 - self.eps_frame).astype(np.int64)
        draws = self.sample(rng, int(counts.sum()))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return np.add.reduceat(draws, starts).astype(np.int64)


def arq_service_model(eps_frame: float) -> ServiceModel:
    """ARQ with perfect error detection: geometric stopping time, no
    undetected errors."""
    if not eps_frame < 1.0:
        raise ConfigError("eps_frame >= 1: service never completes")
    if eps_frame < 0.0:
        raise ConfigError("eps_frame must be non-negative")
    return ServiceModel.geometric(eps_frame, 0.0)


# ---------------------------------------------------------------------------
# information densities


def density_terms(x: np.ndarray, y: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Per-symbol ``log P(y|x)^a / E P(y|X')^a`` for inputs ``x``, outputs ``y``."""
    return math.log(2.0) - np.logaddexp(0.0, -2.0 * alpha * x * y)


def draw_inputs_outputs(spec: ChannelSpec, rng: np.random.Generator, shape):
    """Equiprobable antipodal inputs and AWGN outputs."""
    amp = math.sqrt(spec.rho)
    x = np.where(rng.random(shape) < 0.5, -amp, amp)
    y = x + rng.standard_normal(shape)
    return x, y


def sample_info_density(spec: ChannelSpec, t_frames: int, rng: np.random.Generator, size=None):
    """Accumulated ``i(X;Y)`` over ``n * t_frames`` symbols."""
    if t_frames < 1:
        raise ConfigError("t_frames must be >= 1")
    return sample_generalized_info_density(spec, 1.0, rng, size=size, t_frames=t_frames)


def sample_generalized_info_density(
    spec: ChannelSpec, alpha: float, rng: np.random.Generator, size=None, t_frames: int = 1
):
    """Generalized information density with parameter ``alpha`` over one
    frame (or ``t_frames`` frames).  Returns a float when ``size`` is None."""
    if not alpha > 0.0:
        raise ConfigError("alpha must be positive")
    length = spec.n * t_frames
    m = 1 if size is None else int(size)
    x, y = draw_inputs_outputs(spec, rng, (m, length))
    vals = _kernels.grouped_info_density(x * y, np.array([alpha]), length)[0, :, 0]
    return float(vals[0]) if size is None else vals


def log_codebook_size(k_bits: int) -> float:
    """``log(2**k - 1)`` without overflow."""
    if k_bits < 1:
        raise ConfigError("k_bits must be >= 1")
    return k_bits * math.log(2.0) + math.log1p(-(2.0 ** -k_bits))


def draw_products(spec: ChannelSpec, rng: np.random.Generator, shape) -> np.ndarray:
    """Products ``x * y`` drawn directly.

    ``x y = rho + x z`` and ``x z`` has the law of ``sqrt(rho) z`` by the
    symmetry of the noise, so one normal per symbol suffices.  Every
    information density depends on ``(x, y)`` only through this product.
    """
    return spec.rho + math.sqrt(spec.rho) * rng.standard_normal(shape)


class _RcusSampler:
    """Common random numbers for the RCUs objective across alpha values."""

    CACHE_LIMIT = 200_000_000  # products kept in memory (as float64) up to this many

    def __init__(self, spec: ChannelSpec, k_bits: int, samples: int, seed: int):
        self.spec = spec
        self.log_m = log_codebook_size(k_bits)
        self.samples = samples
        self.seed = seed
        self._cache = {} if samples * spec.n <= self.CACHE_LIMIT else None

    def _xy(self, chunk: int, size: int) -> np.ndarray:
        if self._cache is not None and chunk in self._cache:
            return self._cache[chunk]
        rng = mc.substream(self.seed, mc.STREAM_RCUS, chunk)
        xy = draw_products(self.spec, rng, (size, self.spec.n))
        if self._cache is not None:
            self._cache[chunk] = xy
        return xy

    def sums(self, alphas: np.ndarray):
        alphas = np.asarray(alphas, dtype=float)

        def work(chunk, size):
            dens = _kernels.grouped_info_density(self._xy(chunk, size), alphas, self.spec.n)[:, :, 0]
            e = np.exp(-np.maximum(dens - self.log_m, 0.0))
            return e.sum(axis=1), (e * e).sum(axis=1)

        parts = mc.map_chunks(work, self.samples)
        total = np.zeros(alphas.size)
        total_sq = np.zeros(alphas.size)
        for s1, s2 in parts:
            total += s1
            total_sq += s2
        return total, total_sq


def rcus_epsilon(
    spec: ChannelSpec,
    k_bits: int,
    alpha_candidates: Sequence[float] = DEFAULT_ALPHAS,
    samples: int = 1_000_000,
    seed: int = 0,
    refine: bool = True,
) -> McEstimate:
    """Monte Carlo RCUs bound ``inf_a E exp(-[i_a - log(2^k - 1)]^+)``.

    All alpha values are evaluated on the same draws.  The best grid point
    is refined by golden-section search between its grid neighbours.
    """
    alphas = np.array(sorted(float(a) for a in alpha_candidates))
    if alphas.size == 0 or np.any(~(alphas > 0.0)):
        raise ConfigError("alpha candidates must be a nonempty list of positive numbers")
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    sampler = _RcusSampler(spec, k_bits, int(samples), int(seed))
    total, total_sq = sampler.sums(alphas)
    best = int(np.argmin(total))
    best_alpha, best_total, best_sq = alphas[best], total[best], total_sq[best]
    if refine and alphas.size > 1 and spec.rho > 0.0:
        lo = alphas[max(best - 1, 0)]
        hi = alphas[min(best + 1, alphas.size - 1)]
        memo = {}

        def objective(a):
            if a not in memo:
                memo[a] = sampler.sums(np.array([a]))
            return memo[a][0][0]

        a_star, _ = golden_section(objective, lo, hi, tol=REFINE_TOL)
        s1, s2 = memo[a_star]
        if s1[0] < best_total:
            best_alpha, best_total, best_sq = a_star, s1[0], s2[0]
    return McEstimate.from_sums(best_total, best_sq, int(samples), int(seed), alpha=float(best_alpha))
