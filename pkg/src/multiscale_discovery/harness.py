"""Parameter sweeps behind the benchmark experiments.

Every sweep returns a :class:`SweepResult`, a plain record of the grid that
was evaluated. Results serialise to JSON and to a flat CSV with one row per
cell and trial; both are byte-identical for identical arguments.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SystemSpec, make_coupled, make_system, orbit_period, rk4_steps, simulate
from .havok import HankelConfig, build_hankel, fit_dmd, predict, stabilize, svd_mode_report
from .multiscale import (
    SlowDriftError,
    dominant_frequency,
    iterative_fit,
    combined_predict,
    slow_drift_fraction,
    spaced_config,
    two_scale_vdp,
)
from .sampling import extract_training_pairs, jittered_burst_schedule, make_rng, uniform_schedule
from .sindy import fit_pairs, support_matches
from .timeseries import TimeSeries


def rmse(pred, truth, normalize: bool = False) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    err = math.sqrt(float(np.mean((pred - truth) ** 2)))
    if not normalize:
        return err
    scale = math.sqrt(float(np.mean(truth**2)))
    if scale == 0:
        raise ValueError("cannot normalise by a truth series with zero RMS")
    return err / scale


def _clean(value):
    """Turn numpy scalars/arrays into JSON-native values; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


@dataclass
class SweepResult:
    """Grid of evaluated cells; each cell holds exactly ``n_trials`` records.

    A record that could not produce a metric carries ``failed: True`` and a
    ``reason`` instead of a non-finite number.
    """

    experiment: str
    axes: dict
    n_trials: int
    seed: int
    cells: list = field(default_factory=list)
    anomalies: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_cell(self, params: dict, records: list, summary: dict | None = None) -> None:
        if len(records) != self.n_trials:
            raise ValueError(f"cell {params} has {len(records)} records, expected {self.n_trials}")
        for rec in records:
            for key, value in rec.items():
                if isinstance(value, (float, np.floating)) and not math.isfinite(value):
                    raise ValueError(f"non-finite metric {key!r} in cell {params}; mark the record failed instead")
        self.cells.append({"params": params, "records": records, "summary": summary or {}})

    def cell(self, **params) -> dict:
        for c in self.cells:
            if all(c["params"].get(k) == v for k, v in params.items()):
                return c
        raise KeyError(f"no cell matching {params}")

    def to_dict(self) -> dict:
        return _clean(
            {
                "experiment": self.experiment,
                "axes": self.axes,
                "n_trials": self.n_trials,
                "seed": self.seed,
                "meta": self.meta,
                "cells": self.cells,
                "anomalies": self.anomalies,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        d = json.loads(text)
        return cls(d["experiment"], d["axes"], d["n_trials"], d["seed"], d["cells"], d["anomalies"], d["meta"])

    def to_csv(self) -> str:
        rows = []
        for index, c in enumerate(self.cells):
            for trial, rec in enumerate(c["records"]):
                flat = {"experiment": self.experiment, "cell": index, "trial": trial}
                flat.update({f"param.{k}": v for k, v in c["params"].items()})
                flat.update({k: v for k, v in rec.items() if not isinstance(v, (list, dict))})
                rows.append(_clean(flat))
        fixed = ["experiment", "cell", "trial"]
        rest = sorted({k for r in rows for k in r} - set(fixed))
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fixed + rest, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()

    def save(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        js, cs = stem.with_suffix(".json"), stem.with_suffix(".csv")
        js.write_text(self.to_json())
        cs.write_text(self.to_csv())
        return js, cs


def _child_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def random_phases(spec, n: int, seed: int, n_periods: float = 60.0, coarse_rate: int = 256, transient: float = 10.0):
    """``n`` distinct states drawn uniformly from a long post-transient trajectory."""
    ts = simulate(spec, rate=coarse_rate, n_periods=n_periods, transient=transient)
    rng = make_rng(seed)
    return ts.values[rng.choice(ts.m, n, replace=False)]


# ----------------------------------------------------------------- SINDy data requirements


class _PhaseBank:
    """Fine trajectories from several phases, decimated on demand."""

    def __init__(self, spec, x0, fine_rate: int, max_duration: float):
        self.spec = spec
        self.dt = spec.period / fine_rate
        self.fine_rate = fine_rate
        self.traj = rk4_steps(spec.rhs, x0, self.dt, math.ceil(max_duration * fine_rate) + 2)

    def identifies(self, trial: int, duration: float, rate: int, threshold, degree: int = 3) -> bool:
        stride = self.fine_rate // rate
        count = math.ceil(duration * rate - 1e-9)
        if count < 3:
            return False
        series = TimeSeries(0.0, self.dt, self.traj[: (count - 1) * stride + 1, trial])
        idx = uniform_schedule(self.fine_rate, rate, duration)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = fit_pairs(*extract_training_pairs(series, idx), threshold, degree)
        return support_matches(model, self.spec.true_support)


def data_requirement_sweep(
    system: SystemSpec,
    rates=(2**12,),
    n_trials: int = 20,
    seed: int = 0,
    threshold: float = 0.1,
    degree: int = 3,
    max_duration: float = 2.0,
    resolution: float = 0.05,
    monotone_checks: int = 3,
    progress=None,
) -> SweepResult:
    """Minimal identifying duration (in periods) per sampling rate, by bisection.

    Each trial starts from a different random point of the attractor. Success
    is assumed monotone in duration; after bisection the next
    ``monotone_checks`` grid durations are re-tested and any failure is logged
    as an anomaly.
    """
    rates = sorted(int(r) for r in rates)
    for r in rates:
        if r < 2**5 or r > 2**18 or r & (r - 1):
            raise ValueError(f"rates must be powers of two in [2^5, 2^18], got {r}")
    bank = _PhaseBank(system, random_phases(system, n_trials, seed), rates[-1], max_duration)
    steps = int(round(max_duration / resolution))
    result = SweepResult(
        "data-requirement",
        {"rate": rates},
        n_trials,
        seed,
        meta={"system": system.name, "params": system.params, "period": system.period, "threshold": threshold,
              "resolution": resolution, "max_duration": max_duration},
    )
    for rate in rates:
        records = []
        for trial in range(n_trials):
            if not bank.identifies(trial, steps * resolution, rate, threshold, degree):
                records.append({"failed": True, "reason": f"not identified within {max_duration} periods"})
                continue
            lo, hi = 0, steps
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if bank.identifies(trial, mid * resolution, rate, threshold, degree):
                    hi = mid
                else:
                    lo = mid
            for k in range(hi + 1, min(steps, hi + monotone_checks) + 1):
                if not bank.identifies(trial, k * resolution, rate, threshold, degree):
                    result.anomalies.append(
                        {"rate": rate, "trial": trial, "succeeded_at": hi * resolution, "failed_at": k * resolution}
                    )
            records.append({"duration": round(hi * resolution, 10)})
        durations = [r["duration"] for r in records if "duration" in r]
        summary = {"n_failed": n_trials - len(durations)}
        if durations:
            summary.update(mean=round(float(np.mean(durations)), 10), min=min(durations), max=max(durations))
        result.add_cell({"rate": rate}, records, summary)
        if progress:
            progress(f"rate {rate}: {summary}")
    return result


def identification_trials(system: SystemSpec, duration: float, rate: int = 2**12, n_trials: int = 100, seed: int = 0,
                          threshold: float = 0.1) -> list[bool]:
    """Per-phase success of SINDy on windows of ``duration`` periods."""
    bank = _PhaseBank(system, random_phases(system, n_trials, seed), rate, duration)
    return [bank.identifies(i, duration, rate, threshold) for i in range(n_trials)]


# ----------------------------------------------------------------- burst vs uniform sampling


def coefficient_thresholds(true_coefficients, fraction: float = 0.5) -> np.ndarray:
    """One STLSQ threshold per equation: ``fraction`` of its smallest true term."""
    out = []
    for col in np.asarray(true_coefficients).T:
        nz = np.abs(col[col != 0])
        if nz.size == 0:
            raise ValueError("an equation has no nonzero coefficients")
        out.append(fraction * nz.min())
    return np.array(out)


def _burst_grid(limit: int) -> list[int]:
    return sorted({int(round(2 ** (k / 2))) for k in range(0, 64) if round(2 ** (k / 2)) <= limit})


def burst_vs_uniform_sweep(
    coupled_kind: str = "vdp-vdp",
    F_grid=(2, 4, 8, 16),
    n_trials: int = 20,
    seed: int = 0,
    fine_rate: int = 4096,
    burst_size: int = 8,
    span_slow_periods: float = 2.0,
    threshold_fraction: float = 0.5,
    progress=None,
) -> SweepResult:
    """Smallest sample count that identifies the coupled system in every trial.

    Both methods observe the same ``span_slow_periods`` slow periods of one
    fine trajectory per trial. Uniform sampling scans power-of-two rates per
    fast period; burst sampling scans the number of bursts on a sqrt(2) grid.
    A cell's count is the first level at which all trials succeed; each trial
    record keeps the first level at which that trial alone succeeded.
    """
    F_grid = sorted(F_grid)
    result = SweepResult(
        "burst-vs-uniform",
        {"F": list(F_grid), "method": ["uniform", "burst"]},
        n_trials,
        seed,
        meta={"kind": coupled_kind, "fine_rate": fine_rate, "burst_size": burst_size,
              "span_slow_periods": span_slow_periods, "threshold_fraction": threshold_fraction},
    )
    for ci, F in enumerate(F_grid):
        spec = make_coupled(coupled_kind, F)
        lam = coefficient_thresholds(spec.true_coefficients, threshold_fraction)
        span = span_slow_periods * F  # in fast periods
        x0 = random_phases(spec, n_trials, _child_seed(seed, ci), n_periods=4 * F, transient=2 * F)
        dt = spec.T_fast / fine_rate
        traj = rk4_steps(spec.rhs, x0, dt, math.ceil(span * fine_rate))
        series = [TimeSeries(0.0, dt, traj[:, i]) for i in range(n_trials)]

        def fits(pairs):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return support_matches(fit_pairs(*pairs, lam), spec.true_support)

        def uniform_level(rate):
            idx = uniform_schedule(fine_rate, rate, span)
            return [fits(extract_training_pairs(s, idx)) for s in series], len(idx)

        def burst_level(k):
            out = []
            for i, s in enumerate(series):
                sched = jittered_burst_schedule(span * spec.T_fast, dt, burst_size, k, _child_seed(seed, ci, i, k))
                out.append(fits(extract_training_pairs(s, sched)))
            return out, k * burst_size

        n_fine = math.ceil(span * fine_rate)
        levels = {
            "uniform": (uniform_level, [2**e for e in range(1, int(math.log2(fine_rate)) + 1)]),
            "burst": (burst_level, _burst_grid(n_fine // burst_size)),
        }
        for method in ("uniform", "burst"):
            fn, grid = levels[method]
            first = [None] * n_trials
            found = None
            for level in grid:
                ok, count = fn(level)
                for i, good in enumerate(ok):
                    if good and first[i] is None:
                        first[i] = count
                if all(ok):
                    found = count
                    break
            records = [
                {"samples_required": f} if f is not None else {"failed": True, "reason": "never identified"}
                for f in first
            ]
            summary = {"samples_required": found, "failed": found is None, "threshold": lam.tolist()}
            result.add_cell({"F": F, "method": method}, records, summary)
            if progress:
                progress(f"F={F} {method}: {found}")
    return result


# ----------------------------------------------------------------- HAVOK studies


def _train_test(series: TimeSeries, samples_per_period: int, n_train: float, n_test: float):
    n_tr = int(round(samples_per_period * n_train))
    n_te = int(round(samples_per_period * n_test))
    if series.m < n_tr + n_te:
        raise ValueError("series too short for the requested split")
    return series.window(0, n_tr), series.window(n_tr, n_tr + n_te)


def havok_benchmark(spec: SystemSpec, variable: int, rank: int, q: int = 128, period: float | None = None,
                    n_train: float = 5.0, n_test: float = 2.0, substeps: int = 8, transient: float = 20.0) -> dict:
    """Fit a stabilised HAVOK model with ``dt = T/(q-1)`` and score it on held-out periods."""
    T = spec.period if period is None else period
    rate = q - 1
    series = _sample_by_period(spec, T, rate, n_train + n_test, transient, substeps)
    obs = series.column(variable)
    train, test = _train_test(obs, rate, n_train, n_test)
    model = stabilize(fit_dmd(build_hankel(train, HankelConfig(q, obs.dt)), rank))
    pred_test = predict(model, test.times)[:, 0]
    pred_train = predict(model, train.times)[:, 0]
    bound = float(np.sum(np.abs(model.modes[0]) * np.abs(model.amplitudes)))
    data = obs.values[:, 0]
    return {
        "model": model,
        "period": T,
        "train_rmse": rmse(pred_train, train.values[:, 0], normalize=True),
        "test_rmse": rmse(pred_test, test.values[:, 0], normalize=True),
        "max_abs_prediction": float(np.abs(pred_test).max()),
        "bound": bound,
        "model_frequency": model.dominant_frequency(min_frequency=1e-9),
        "data_frequency": dominant_frequency(data, obs.dt),
        "test_prediction": pred_test,
        "test": test,
    }


def _sample_by_period(spec, T, rate, n_periods, transient, substeps):
    """Simulate on the grid ``dt = T / rate`` for a period ``T`` that may differ from ``spec.period``."""
    dt = T / rate
    x0 = np.array(spec.default_x0, dtype=float)
    n_tr = math.ceil(transient * spec.period / dt)
    h = dt / substeps
    x0 = rk4_steps(spec.rhs, x0, h, n_tr * substeps, keep_every=n_tr * substeps)[-1]
    m = math.ceil(rate * n_periods - 1e-9) + 1
    traj = rk4_steps(spec.rhs, x0, h, (m - 1) * substeps, keep_every=substeps)
    return TimeSeries(n_tr * dt, dt, traj)


PERIODIC_ORBIT_CASES = (
    ("vanderpol", {}, 0, 24),
    ("lorenz", {"rho": 160.0}, 0, 12),
    ("rossler", {"c": 8.5}, 2, 105),
)


def periodic_orbit_study(q: int = 128) -> SweepResult:
    """Single-scale HAVOK models of three periodic orbits, one full orbit per delay window."""
    result = SweepResult("havok-periodic", {"system": [c[0] for c in PERIODIC_ORBIT_CASES]}, 1, 0, meta={"q": q})
    for name, params, variable, rank in PERIODIC_ORBIT_CASES:
        spec = make_system(name, **params)
        bench = havok_benchmark(spec, variable, rank, q=q, period=orbit_period(spec))
        rec = {k: bench[k] for k in ("period", "train_rmse", "test_rmse", "max_abs_prediction", "bound",
                                     "model_frequency", "data_frequency")}
        rec["max_abs_real_omega"] = float(np.abs(bench["model"].omegas.real).max())
        result.add_cell({"system": name, "params": params, "variable": variable, "rank": rank}, [rec])
    return result


def rank_delay_study(system: SystemSpec, ranks=(2, 8, 32), delay_counts=(8, 64), q: int = 128, variable: int = 0,
                     n_train: float = 5.0, n_test: float = 2.0, n_singular: int = 20, n_modes: int = 4) -> SweepResult:
    """Test error against rank (at ``q`` delays) and singular spectra against delay count.

    All variants share the grid ``dt = T/(q-1)``, so changing the number of
    delays also changes the delay duration.
    """
    rate = q - 1
    series = _sample_by_period(system, system.period, rate, n_train + n_test, 20.0, 8).column(variable)
    train, test = _train_test(series, rate, n_train, n_test)
    result = SweepResult("rank-delay", {"rank": list(ranks), "delays": list(delay_counts)}, 1, 0,
                         meta={"system": system.name, "q": q, "variable": variable})
    pair = build_hankel(train, HankelConfig(q, series.dt))
    for r in ranks:
        model = stabilize(fit_dmd(pair, r))
        result.add_cell(
            {"kind": "rank", "rank": r},
            [{
                "train_rmse": rmse(predict(model, train.times)[:, 0], train.values[:, 0], normalize=True),
                "test_rmse": rmse(predict(model, test.times)[:, 0], test.values[:, 0], normalize=True),
            }],
        )
    for nd in delay_counts:
        p = build_hankel(train, HankelConfig(nd, series.dt))
        k = min(n_singular, min(p.H.shape))
        sigma, U = svd_mode_report(p, k)
        result.add_cell(
            {"kind": "delays", "delays": nd},
            [{"energy_first": float(sigma[0]), "singular_values": sigma.tolist(),
              "modes": U[:, : min(n_modes, k)].T.tolist()}],
        )
    return result


# ----------------------------------------------------------------- multiscale HAVOK


def spacing_tradeoff_sweep(
    F_grid=(4, 8, 16),
    r: int = 100,
    seed: int = 0,
    q_large: int = 128,
    q_spaced: int = 256,
    samples_per_fast_period: int = 127,
    spaced_budget: int = 2**18,
    max_numel: int = 2 * 10**7,
    n_train: float = 5.0,
    n_test: float = 2.0,
    progress=None,
) -> SweepResult:
    """Size and held-out error of three embeddings of the summed two-oscillator signal.

    ``large_dt``: ``q_large`` delays on a grid coarsened so the delays span
    one slow period. ``small_dt``: the fine grid with as many delays as one
    slow period needs. ``spaced``: the fine grid, ``q_spaced`` delays spread
    over one slow period and a fixed column budget. The simulation is
    deterministic; ``seed`` is recorded for provenance only.
    """
    result = SweepResult(
        "spacing-tradeoff",
        {"F": list(F_grid), "model": ["large_dt", "small_dt", "spaced"]},
        1,
        seed,
        meta={"rank": r, "q_large": q_large, "q_spaced": q_spaced, "samples_per_fast_period": samples_per_fast_period,
              "spaced_budget": spaced_budget, "max_numel": max_numel},
    )
    for F in F_grid:
        obs = two_scale_vdp(F, samples_per_fast_period, n_train + n_test + 0.1)
        s, dt = obs.summed, obs.summed.dt
        n_tr = int(round(n_train * F * samples_per_fast_period)) + 1
        train = s.window(0, n_tr)
        test = s.window(n_tr - 1, n_tr - 1 + int(round(n_test * F * samples_per_fast_period)))
        truth = test.values[:, 0]

        def score(config, series):
            pair = build_hankel(series, config)
            model = stabilize(fit_dmd(pair, r))
            return {"numel": pair.numel, "rmse": rmse(predict(model, test.times)[:, 0], truth, normalize=True),
                    "q": config.q, "d": config.d, "c": config.c, "p": pair.p, "dt": config.dt}

        stride = round(obs.T_slow / ((q_large - 1) * dt))
        coarse = train.window(0, None, stride)
        result.add_cell({"F": F, "model": "large_dt"}, [score(HankelConfig(q_large, coarse.dt), coarse)])

        q_small = round(obs.T_slow / dt) + 1
        cfg_small = HankelConfig(q_small, dt)
        attempted = q_small * cfg_small.max_columns(train.m)
        if attempted > max_numel:
            rec = {"failed": True, "reason": "memory budget exceeded", "numel": attempted}
        else:
            rec = score(cfg_small, train)
        result.add_cell({"F": F, "model": "small_dt"}, [rec])

        cfg = spaced_config(obs.T_slow, q_spaced, dt, spaced_budget, n_train * obs.T_slow)
        result.add_cell({"F": F, "model": "spaced"}, [score(cfg, train)])
        if progress:
            progress(f"F={F}: done")
    return result


def iterative_comparison(F: float = 20, r: int = 50, q: int = 128, seed: int = 0, baseline_rank: int = 100,
                         n_test_slow: float = 1.0) -> SweepResult:
    """Iterative fast/slow model against a single coarse-grid model at the same ratio."""
    n_slow = 5 + n_test_slow + 0.1
    obs = two_scale_vdp(F, 128, n_slow)
    s = obs.summed
    rec: dict = {}
    window = s.window(0, 5 * 128)
    rec["drift_fraction"] = slow_drift_fraction(window.values, window.dt, obs.T_fast)
    n5 = int(round(5 * F * 128))
    test = s.window(n5, n5 + int(round(n_test_slow * F * 128)))
    try:
        model = iterative_fit(s, obs.T_fast, F, r_fast=r, r_slow=r, q=q)
    except SlowDriftError as exc:
        rec.update(failed=True, reason=str(exc))
    else:
        rec.update(
            drift_fired=False,
            combined_rmse=rmse(combined_predict(model, test.times)[:, 0], test.values[:, 0], normalize=True),
            fast_model_frequency=model.fast_model.dominant_frequency(1e-9),
            slow_model_frequency=model.slow_model.dominant_frequency(1e-9),
            constant_offset=model.constant_offset,
        )
    rec["fast_data_frequency"] = dominant_frequency(obs.fast_series.values, s.dt)
    rec["slow_data_frequency"] = dominant_frequency(obs.slow_series.values, s.dt)

    base_obs = two_scale_vdp(F, q - 1, n_slow)
    b = base_obs.summed
    stride = round(base_obs.T_slow / ((q - 1) * b.dt))
    n5b = int(round(5 * F * (q - 1)))
    coarse = b.window(0, n5b + 1, stride)
    base = stabilize(fit_dmd(build_hankel(coarse, HankelConfig(q, coarse.dt)), baseline_rank))
    btest = b.window(n5b, n5b + int(round(n_test_slow * F * (q - 1))))
    rec["baseline_rmse"] = rmse(predict(base, btest.times)[:, 0], btest.values[:, 0], normalize=True)
    result = SweepResult("iterative", {"F": [F]}, 1, seed, meta={"rank": r, "q": q, "baseline_rank": baseline_rank})
    result.add_cell({"F": F}, [rec])
    return result
