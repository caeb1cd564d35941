"""Delay embeddings for signals with two separated time scales.

Two strategies live here. ``spaced_config`` stretches the rows of the Hankel
matrix so one column spans a slow period without growing the matrix. The
iterative method fits the fast oscillation on a short window, subtracts its
closed-form prediction from a coarsely sampled long record, and fits the
remainder as the slow model.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import make_coupled, simulate
from .havok import HankelConfig, HavokModel, build_hankel, fit_dmd, predict, stabilize
from .timeseries import TimeSeries


class SlowDriftError(ValueError):
    """The fast training window is not short compared with the slow scale."""


@dataclass(frozen=True, eq=False)
class TwoScaleObservable:
    fast_series: TimeSeries
    slow_series: TimeSeries
    summed: TimeSeries
    F: float
    T_fast: float
    T_slow: float

    def __post_init__(self):
        a, b, s = self.fast_series, self.slow_series, self.summed
        if not (a.m == b.m == s.m and a.dt == b.dt == s.dt and a.t0 == b.t0 == s.t0):
            raise ValueError("component and summed series must share one grid")
        if not np.array_equal(s.values, a.values + b.values):
            raise ValueError("summed series must equal the sum of its components")
        if not math.isclose(self.F, self.T_slow / self.T_fast, rel_tol=1e-9):
            raise ValueError("F must equal T_slow / T_fast")


def two_scale_vdp(
    F: float,
    samples_per_fast_period: int = 128,
    n_slow_periods: float = 7.0,
    mu: float = 5.0,
    coupling: float = 0.0,
    transient_slow_periods: float = 2.0,
    substeps: int | None = None,
) -> TwoScaleObservable:
    """Summed ``x`` of a fast and a slow Van der Pol oscillator.

    The oscillators are uncoupled by default so each component is exactly
    periodic. Time zero is the end of the transient.
    """
    spec = make_coupled("vdp-vdp", F, c1=coupling, c2=coupling, mu=mu)
    if substeps is None:
        substeps = max(1, math.ceil(512 / samples_per_fast_period))
    series = simulate(
        spec,
        rate=samples_per_fast_period,
        n_periods=n_slow_periods * F,
        transient=transient_slow_periods * F,
        substeps=substeps,
    )
    fast = TimeSeries(0.0, series.dt, series.values[:, [0]])
    slow = TimeSeries(0.0, series.dt, series.values[:, [2]])
    summed = TimeSeries(0.0, series.dt, fast.values + slow.values)
    return TwoScaleObservable(fast, slow, summed, float(F), spec.T_fast, spec.T_slow)


def dominant_frequency(values, dt: float, pad: int = 16) -> float:
    """Angular frequency of the strongest spectral peak, excluding the mean.

    A Hann window, zero padding and parabolic interpolation of the log peak
    refine the estimate well below the raw bin spacing.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 4:
        raise ValueError("need at least 4 samples")
    x = (x - x.mean()) * np.hanning(x.size)
    n = pad * x.size
    power = np.abs(np.fft.rfft(x, n)) ** 2
    power[0] = 0.0
    k = int(np.argmax(power))
    if 0 < k < len(power) - 1 and np.all(power[k - 1 : k + 2] > 0):
        a, b, c = np.log(power[k - 1 : k + 2])
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return float(2 * np.pi * (k + shift) / (n * dt))


def slow_drift_fraction(values, dt: float, T_fast: float, band: float = 0.75) -> float:
    """Share of non-constant spectral energy below ``band`` times the fast frequency."""
    x = np.asarray(values, dtype=float).ravel()
    x = (x - x.mean()) * np.hanning(x.size)
    power = np.abs(np.fft.rfft(x)) ** 2
    omega = 2 * np.pi * np.fft.rfftfreq(x.size, dt)
    total = power[1:].sum()
    if total == 0:
        return 0.0
    low = (omega > 0) & (omega < band * 2 * np.pi / T_fast)
    return float(power[low].sum() / total)


def spaced_config(T_slow: float, q: int, dt: float, sample_budget: int, train_span: float) -> HankelConfig:
    """Row spacing so one column spans ``T_slow``; column spacing to fit the budget.

    ``sample_budget`` is the target ``numel(H)`` for a scalar observable; the
    column count is pinned to ``sample_budget // q`` so the matrix size does
    not depend on the time-scale ratio.
    """
    d = max(1, round(T_slow / ((q - 1) * dt)))
    p = sample_budget // q
    if p < 2:
        raise ValueError("sample budget too small for two columns")
    m = math.floor(train_span / dt + 1e-9) + 1
    c = (m - 2 - (q - 1) * d) // (p - 1)
    if c < 1:
        raise ValueError(f"training span of {m} samples cannot hold {p} columns at row spacing {d}")
    return HankelConfig(q, dt, d, c, n_columns=p)


@dataclass(frozen=True, eq=False)
class TwoScaleModel:
    fast_model: HavokModel
    slow_model: HavokModel
    constant_offset: float

    def to_json(self, **kw) -> str:
        return json.dumps(
            {
                "fast_model": self.fast_model.to_dict(),
                "slow_model": self.slow_model.to_dict(),
                "constant_offset": self.constant_offset,
            },
            **kw,
        )

    @classmethod
    def from_json(cls, text: str) -> "TwoScaleModel":
        d = json.loads(text)
        return cls(HavokModel.from_dict(d["fast_model"]), HavokModel.from_dict(d["slow_model"]), d["constant_offset"])


def combined_predict(model: TwoScaleModel, t) -> np.ndarray:
    return predict(model.fast_model, t) + predict(model.slow_model, t) + model.constant_offset


def _split_constant_modes(model: HavokModel, tol: float):
    const = np.abs(model.omegas) <= tol
    offset = float(np.real(model.modes[0, const] @ model.amplitudes[const])) if const.any() else 0.0
    keep = ~const
    rest = HavokModel(
        model.omegas[keep], model.modes[:, keep], model.amplitudes[keep], model.config, model.t_ref, model.n_observables
    )
    return rest, offset


def _stride(target_dt: float, dt: float, what: str) -> int:
    k = round(target_dt / dt)
    if k < 1 or not math.isclose(k * dt, target_dt, rel_tol=1e-6):
        raise ValueError(f"{what} step {target_dt:.6g} is not a multiple of the series step {dt:.6g}")
    return k


def _fit_capped(series: TimeSeries, config: HankelConfig, r: int) -> HavokModel:
    pair = build_hankel(series, config)
    S = np.linalg.svd(pair.H, compute_uv=False)
    numerical = int(np.sum(S > S[0] * max(pair.H.shape) * np.finfo(float).eps)) if S[0] > 0 else 0
    if numerical == 0:
        empty = np.zeros(0, dtype=complex)
        return HavokModel(empty, np.zeros((pair.H.shape[0], 0), dtype=complex), empty, config, series.t0, series.n)
    if numerical < r:
        warnings.warn(f"rank reduced from {r} to the numerical rank {numerical}", RuntimeWarning, stacklevel=3)
        r = numerical
    return stabilize(fit_dmd(pair, r))


def iterative_fit(
    summed: TimeSeries,
    T_fast_est: float,
    F_est: float,
    r_fast: int = 50,
    r_slow: int = 50,
    q: int = 128,
    n_periods: int = 5,
    samples_per_period: int = 128,
    start: int = 0,
    drift_threshold: float = 0.1,
    drift_band: float = 0.75,
    residual_floor: float = 1e-10,
) -> TwoScaleModel:
    """Fast model on a short fine window, slow model on the coarse residual.

    ``summed`` must be a scalar series whose step divides ``T_fast_est /
    samples_per_period``. Raises :class:`SlowDriftError` when the fast window
    carries more than ``drift_threshold`` of its energy below ``drift_band``
    times the fast frequency. A slow residual smaller than ``residual_floor``
    relative to the record yields an empty slow model.
    """
    if summed.n != 1:
        raise ValueError("iterative_fit expects a scalar observable")
    dt_fast = T_fast_est / samples_per_period
    k_fast = _stride(dt_fast, summed.dt, "fast sampling")
    k_slow = _stride(dt_fast * F_est, summed.dt, "slow sampling")
    n_rows = n_periods * samples_per_period

    fast_window = summed.window(start, start + k_fast * n_rows, k_fast)
    if fast_window.m < n_rows:
        raise ValueError("series too short for the fast window")
    drift = slow_drift_fraction(fast_window.values, fast_window.dt, T_fast_est, drift_band)
    if drift > drift_threshold:
        raise SlowDriftError(
            f"{drift:.1%} of the fast-window energy is slow drift (limit {drift_threshold:.0%}); "
            "the time scales are not separated enough for the iterative method"
        )
    fast_cfg = HankelConfig(q, fast_window.dt)
    fast_model, offset = _split_constant_modes(_fit_capped(fast_window, fast_cfg, r_fast), 1e-12 / fast_window.dt)

    slow_window = summed.window(start, start + k_slow * n_rows, k_slow)
    if slow_window.m < n_rows:
        raise ValueError("series too short for the slow window")
    residual = slow_window.values[:, 0] - predict(fast_model, slow_window.times)[:, 0] - offset
    slow_cfg = HankelConfig(q, slow_window.dt)
    if np.linalg.norm(residual) <= residual_floor * np.linalg.norm(slow_window.values):
        # the fast model already explains the record; fitting roundoff would only add noise modes
        slow_model = _fit_capped(TimeSeries(slow_window.t0, slow_window.dt, np.zeros_like(residual)), slow_cfg, r_slow)
    else:
        slow_model = _fit_capped(TimeSeries(slow_window.t0, slow_window.dt, residual), slow_cfg, r_slow)
    return TwoScaleModel(fast_model, slow_model, offset)
