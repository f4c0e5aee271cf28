"""Deterministic random streams and chunked Monte Carlo.

Every chunk of work gets its own Philox generator keyed by
``SeedSequence(seed, spawn_key=(stream, chunk))``.  Results are merged in
chunk order, so outputs depend only on (configuration, seed, samples) and
not on how many worker threads are used.  ``URLLC_LAB_THREADS`` caps the
worker count (default 1).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

CHUNK = 8192

# stream identifiers, kept distinct so that different estimators never share draws
STREAM_RCUS = 1
STREAM_VLSF = 2
STREAM_FCFS = 3
STREAM_ASYNC = 4
STREAM_AGE = 5
STREAM_MISC = 9


def substream(seed: int, stream: int, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    raw = os.environ.get("URLLC_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def chunk_sizes(total: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(total), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[int, int], object], total: int, chunk: int = CHUNK, workers: Optional[int] = None):
    """Apply ``fn(chunk_index, chunk_size)`` to every chunk; results are
    returned in chunk order regardless of scheduling."""
    sizes = chunk_sizes(total, chunk)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(sizes) <= 1:
        return [fn(i, m) for i, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with a 95% normal-approximation half-width."""

    value: float
    half_width: float
    samples: int
    seed: int
    alpha: Optional[float] = None

    @property
    def std_error(self) -> float:
        return self.half_width / 1.959963984540054

    @classmethod
    def from_sums(cls, total: float, total_sq: float, samples: int, seed: int, alpha=None, clip=True):
        mean = total / samples
        var = max(total_sq / samples - mean * mean, 0.0)
        hw = 1.959963984540054 * np.sqrt(var / samples) if samples > 1 else float("inf")
        if clip:
            mean = min(max(mean, 0.0), 1.0)
        return cls(float(mean), float(hw), int(samples), int(seed), alpha)

    @classmethod
    def proportion(cls, hits: int, samples: int, seed: int, scale: float = 1.0, clip=True):
        """Estimate of ``scale * p`` from ``hits`` successes."""
        p = hits / samples
        hw = 1.959963984540054 * np.sqrt(p * (1.0 - p) / samples) * scale
        value = p * scale
        if clip:
            value = min(value, 1.0)
        return cls(float(value), float(hw), int(samples), int(seed))
