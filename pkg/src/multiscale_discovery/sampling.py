"""Subsampling schedules: uniform decimation and burst sampling.

Burst sampling keeps the fine time step inside short bursts but spreads the
bursts over a long duration, so derivatives stay accurate while the effective
sampling rate drops. All randomness goes through ``numpy.random.PCG64``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .timeseries import TimeSeries


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class BurstSchedule:
    burst_size: int
    start_indices: np.ndarray
    fine_dt: float
    span: float
    seed: int | None = None

    def __post_init__(self):
        starts = np.asarray(self.start_indices, dtype=np.int64)
        if self.burst_size < 1:
            raise ValueError("burst_size must be positive")
        if starts.ndim != 1:
            raise ValueError("start_indices must be one-dimensional")
        if np.any(np.diff(starts) < self.burst_size):
            raise ValueError("bursts overlap or are unsorted")
        limit = n_fine_slots(self.span, self.fine_dt) - self.burst_size
        if len(starts) and (starts[0] < 0 or starts[-1] > limit):
            raise ValueError("a burst falls outside the sampled span")
        starts.setflags(write=False)
        object.__setattr__(self, "start_indices", starts)

    @property
    def n_bursts(self) -> int:
        return len(self.start_indices)

    @property
    def n_samples(self) -> int:
        return self.n_bursts * self.burst_size

    def indices(self) -> np.ndarray:
        """All fine-grid sample indices, burst by burst."""
        return (self.start_indices[:, None] + np.arange(self.burst_size)).ravel()

    def to_json(self) -> str:
        return json.dumps(
            {
                "burst_size": self.burst_size,
                "starts": self.start_indices.tolist(),
                "fine_dt": self.fine_dt,
                "span": self.span,
                "seed": self.seed,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BurstSchedule":
        d = json.loads(text)
        return cls(d["burst_size"], np.array(d["starts"], dtype=np.int64), d["fine_dt"], d["span"], d.get("seed"))


def n_fine_slots(duration: float, fine_dt: float) -> int:
    return int(math.floor(duration / fine_dt + 1e-9))


def uniform_schedule(fine_rate: int, target_rate: int, duration: float) -> np.ndarray:
    """Every ``fine_rate / target_rate``-th fine index over ``[0, duration)`` periods."""
    if target_rate <= 0 or fine_rate <= 0:
        raise ValueError("rates must be positive")
    if fine_rate % target_rate:
        raise ValueError(f"target rate {target_rate} does not divide fine rate {fine_rate}")
    stride = fine_rate // target_rate
    count = math.ceil(duration * target_rate - 1e-9)
    return np.arange(count, dtype=np.int64) * stride


def jittered_burst_schedule(duration: float, fine_dt: float, burst_size: int = 8, n_bursts: int = 1, rng_seed: int = 0) -> BurstSchedule:
    """Evenly spaced bursts, each shifted by a uniform random offset.

    The fine grid is split into ``n_bursts`` equal slots; each burst starts at
    a uniformly drawn index inside its slot such that it stays in the slot,
    which makes overlaps impossible and the sample count exact.
    """
    if burst_size < 1 or n_bursts < 1:
        raise ValueError("burst_size and n_bursts must be positive")
    n = n_fine_slots(duration, fine_dt)
    if n_bursts * burst_size > n:
        raise ValueError(f"cannot pack {n_bursts} bursts of {burst_size} samples into {n} fine samples")
    edges = (np.arange(n_bursts + 1) * n) // n_bursts
    lo = edges[:-1]
    hi = edges[1:] - burst_size
    rng = make_rng(rng_seed)
    starts = rng.integers(lo, hi, endpoint=True)
    return BurstSchedule(burst_size, starts, fine_dt, duration, rng_seed)


def poisson_burst_schedule(duration: float, fine_dt: float, burst_size: int = 8, target_rate: float = 1.0, rng_seed: int = 0) -> BurstSchedule:
    """Bursts starting at Poisson arrival times (streaming variant).

    The arrival intensity is ``target_rate / burst_size`` per unit time, so the
    expected sample count is ``target_rate * duration``. A burst that would
    overlap its predecessor or run past the end is dropped.
    """
    if target_rate * duration < burst_size:
        raise ValueError("target_rate * duration must cover at least one burst")
    intensity = target_rate / burst_size
    rng = make_rng(rng_seed)
    n = n_fine_slots(duration, fine_dt)
    starts = []
    t = rng.exponential(1.0 / intensity)
    while t < duration:
        idx = int(t / fine_dt)
        if idx <= n - burst_size and (not starts or idx >= starts[-1] + burst_size):
            starts.append(idx)
        t += rng.exponential(1.0 / intensity)
    return BurstSchedule(burst_size, np.array(starts, dtype=np.int64), fine_dt, duration, rng_seed)


def extract_training_pairs(series: TimeSeries, schedule):
    """Build aligned ``(X, Xdot)`` rows for SINDy from a schedule.

    Burst schedules difference within each burst on the fine grid, giving
    ``burst_size - 2`` rows per burst. Index arrays must be uniformly spaced
    and are differenced at their own stride.
    """
    v = series.values
    if isinstance(schedule, BurstSchedule):
        if schedule.burst_size < 3:
            raise ValueError("bursts need at least 3 samples for a central difference")
        if not math.isclose(schedule.fine_dt, series.dt, rel_tol=1e-9):
            raise ValueError(f"schedule fine_dt {schedule.fine_dt} does not match series dt {series.dt}")
        if schedule.n_bursts and schedule.start_indices[-1] + schedule.burst_size > series.m:
            raise ValueError("schedule runs past the end of the series")
        mid = (schedule.start_indices[:, None] + np.arange(1, schedule.burst_size - 1)).ravel()
        return v[mid], (v[mid + 1] - v[mid - 1]) / (2.0 * series.dt)
    idx = np.asarray(schedule, dtype=np.int64)
    if len(idx) < 3:
        raise ValueError("need at least 3 samples for a central difference")
    steps = np.diff(idx)
    if np.any(steps != steps[0]) or steps[0] < 1:
        raise ValueError("index schedule must be uniformly spaced and increasing")
    if idx[0] < 0 or idx[-1] >= series.m:
        raise ValueError("index out of range for the series")
    sub = v[idx]
    return sub[1:-1], (sub[2:] - sub[:-2]) / (2.0 * series.dt * steps[0])
