"""Command-line interface: ``msd {simulate,sindy,havok,sweep}``.

Every option may also come from a JSON file given with ``--config``; flags on
the command line win. The merged configuration is written into every output
file. Output paths default to the directory named by ``MSD_OUTPUT_DIR`` (or
the working directory).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import make_coupled, make_system, simulate
from .harness import (
    burst_vs_uniform_sweep,
    coefficient_thresholds,
    data_requirement_sweep,
    periodic_orbit_study,
    iterative_comparison,
    rank_delay_study,
    rmse,
    spacing_tradeoff_sweep,
)
from .havok import HankelConfig, build_hankel, fit_dmd, predict, stabilize
from .multiscale import combined_predict, iterative_fit, two_scale_vdp
from .sampling import extract_training_pairs, jittered_burst_schedule
from .sindy import center_difference, fit_pairs, support_matches
from .timeseries import TimeSeries

ENV_OUTPUT = "MSD_OUTPUT_DIR"

EXPERIMENTS = ("data-requirement", "burst-vs-uniform", "spacing-tradeoff", "rank-delay", "havok-periodic", "iterative")
STOCHASTIC_EXPERIMENTS = {"data-requirement", "burst-vs-uniform"}


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on. Durations in ``span`` accept ``T``/``Tslow`` suffixes."""

    command: str = ""
    system: str | None = None
    params: dict = field(default_factory=dict)
    kind: str | None = None
    F: float | list | None = None
    rate: float | None = None
    periods: float | None = None
    duration: str | None = None
    transient: float = 10.0
    substeps: int = 1
    threshold: float | str = 0.1
    degree: int = 3
    stride: int | None = None
    burst_size: int | None = None
    bursts: int | None = None
    span: str | None = None
    variable: int = 0
    q: int = 128
    d: int = 1
    c: int = 1
    rank: int | None = None
    test_periods: float = 2.0
    iterative: bool = False
    experiment: str | None = None
    trials: int | None = None
    rates: list | None = None
    seed: int | None = None
    input: str | None = None
    output: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise CliError(f"unknown config key {key!r}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_DURATION = re.compile(r"^\s*([-+0-9.eE]+)\s*(Tslow|Tfast|T)?\s*$")


def parse_duration(text, T: float | None, T_slow: float | None = None) -> float:
    """``"5T"`` is five periods, ``"2Tslow"`` two slow periods, a bare number is absolute time."""
    match = _DURATION.match(str(text))
    if not match:
        raise CliError(f"cannot parse duration {text!r}; use e.g. 12.5, 5T or 2Tslow")
    value = float(match.group(1))
    unit = match.group(2)
    if unit in ("T", "Tfast"):
        if T is None:
            raise CliError(f"duration {text!r} needs a known period; pass --system or --kind")
        value *= T
    elif unit == "Tslow":
        if T_slow is None:
            raise CliError(f"duration {text!r} needs a slow period; pass --kind and --F")
        value *= T_slow
    if not (value > 0 and math.isfinite(value)):
        raise CliError(f"duration must be positive, got {text!r}")
    return value


def _number_list(text: str):
    items = [float(v) for v in str(text).split(",") if v.strip()]
    items = [int(v) if v.is_integer() else v for v in items]
    return items if len(items) > 1 or "," in str(text) else items[0]


def _param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), float(value)


def _threshold(text: str):
    return "auto" if text == "auto" else float(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": message, "type": "UsageError"}), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="msd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=S, help="JSON file with RunConfig fields")
        p.add_argument("--system", default=S, help="lorenz, duffing, vanderpol or rossler")
        p.add_argument("--param", dest="params", action="append", type=_param, default=S, metavar="NAME=VALUE")
        p.add_argument("--kind", default=S, help="coupled system: vdp-vdp, slowvdp-fastlorenz, fastvdp-slowlorenz")
        p.add_argument("--F", type=_number_list, default=S, help="frequency ratio, or a comma list for sweeps")
        p.add_argument("--rate", type=float, default=S, help="samples per (fast) period")
        p.add_argument("--periods", type=float, default=S)
        p.add_argument("--duration", default=S, help="overrides --periods; e.g. 12.5, 5T, 2Tslow")
        p.add_argument("--transient", type=float, default=S)
        p.add_argument("--substeps", type=int, default=S)
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("-i", "--input", default=S, help="CSV trajectory instead of simulating")
        p.add_argument("-o", "--output", default=S, help="output file or stem")
        return p

    common(sub.add_parser("simulate", help="integrate a system and write a CSV trajectory"))

    p = common(sub.add_parser("sindy", help="fit sparse governing equations"))
    p.add_argument("--threshold", type=_threshold, default=S, help="number, or 'auto' for per-equation values")
    p.add_argument("--degree", type=int, default=S)
    p.add_argument("--stride", type=int, default=S, help="uniform decimation factor")
    p.add_argument("--burst-size", dest="burst_size", type=int, default=S)
    p.add_argument("--bursts", type=int, default=S)
    p.add_argument("--span", default=S, help="burst sampling span, e.g. 2Tslow")

    p = common(sub.add_parser("havok", help="fit a delay-embedding linear model"))
    p.add_argument("--variable", type=int, default=S)
    p.add_argument("--q", type=int, default=S)
    p.add_argument("--d", type=int, default=S)
    p.add_argument("--c", type=int, default=S)
    p.add_argument("--rank", type=int, default=S)
    p.add_argument("--test-periods", dest="test_periods", type=float, default=S)
    p.add_argument("--iterative", action="store_true", default=S)

    p = common(sub.add_parser("sweep", help="run a benchmark experiment"))
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--rates", type=lambda s: [int(v) for v in s.split(",")], default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--rank", type=int, default=S)
    return parser


def resolve_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    merged: dict = {}
    if "config" in ns:
        try:
            merged.update(json.loads(Path(ns.pop("config")).read_text()))
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}") from exc
    if "params" in ns:
        ns["params"] = dict(ns["params"])
    merged.update(ns)
    return RunConfig.from_mapping(merged)


# ----------------------------------------------------------------- helpers


def _provenance(cfg: RunConfig) -> dict:
    return {"artifact": "artifact", "version": __version__, "run_config": cfg.to_dict()}


def _output(cfg: RunConfig, default_name: str) -> Path:
    path = Path(cfg.output) if cfg.output else Path(os.environ.get(ENV_OUTPUT, ".")) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _source(cfg: RunConfig):
    """Return ``(spec, T, T_slow)`` for the configured system, or ``(None, None, None)``."""
    if cfg.kind:
        F = cfg.F if cfg.F is not None else 8
        if isinstance(F, list):
            raise CliError("--F must be a single value here")
        spec = make_coupled(cfg.kind, F)
        return spec, spec.T_fast, spec.T_slow
    if cfg.system:
        spec = make_system(cfg.system, **cfg.params)
        return spec, spec.period, spec.period
    return None, None, None


def _series(cfg: RunConfig, spec, T, T_slow, default_rate: float, default_periods: float) -> TimeSeries:
    if cfg.input:
        return TimeSeries.from_csv(cfg.input)
    if spec is None:
        raise CliError("give --system, --kind or --input")
    rate = cfg.rate or default_rate
    periods = cfg.periods or default_periods
    if cfg.duration:
        periods = parse_duration(cfg.duration, T, T_slow) / T
    return simulate(spec, rate=rate, n_periods=periods, transient=cfg.transient, substeps=cfg.substeps)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _comments(cfg: RunConfig) -> list[str]:
    return [f"artifact {__version__}", "run_config " + cfg.to_json()]


# ----------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig) -> None:
    spec, T, T_slow = _source(cfg)
    if spec is None:
        raise CliError("simulate needs --system or --kind")
    series = _series(cfg, spec, T, T_slow, 2**12, 1.0)
    path = _output(cfg, f"{spec.name}.csv")
    series.to_csv(path, comments=_comments(cfg))
    print(f"wrote {series.m} rows to {path}", file=sys.stderr)


def cmd_sindy(cfg: RunConfig) -> None:
    spec, T, T_slow = _source(cfg)
    series = _series(cfg, spec, T, T_slow, 2**12, 1.0)
    schedule = None
    if cfg.burst_size is not None or cfg.bursts is not None:
        if cfg.seed is None:
            raise CliError("--seed is required for burst sampling")
        span = parse_duration(cfg.span, T, T_slow) if cfg.span else series.m * series.dt
        schedule = jittered_burst_schedule(span, series.dt, cfg.burst_size or 8, cfg.bursts or 1, cfg.seed)
        X, Xdot = extract_training_pairs(series, schedule)
    elif cfg.stride:
        X, Xdot = extract_training_pairs(series, np.arange(0, series.m, cfg.stride))
    else:
        X, Xdot = center_difference(series)
    threshold = cfg.threshold
    if threshold == "auto":
        if spec is None:
            raise CliError("--threshold auto needs a known system")
        threshold = coefficient_thresholds(spec.true_coefficients)
    model = fit_pairs(X, Xdot, threshold, cfg.degree)

    names = list(spec.state_names) if spec is not None and spec.dimension == series.n else None
    lines = model.equations(names)
    payload = {"model": model.to_dict(), "n_training_rows": int(len(X)), **_provenance(cfg)}
    if spec is not None and spec.dimension == series.n and cfg.degree == 3:
        match = support_matches(model, spec.true_support)
        truth = spec.true_coefficients
        nz = truth != 0
        rel = np.abs(model.coefficients[nz] - truth[nz]) / np.abs(truth[nz])
        payload.update(support_match=match, max_relative_coefficient_error=float(rel.max()))
        lines += [f"support match: {str(match).lower()}", f"max relative coefficient error: {rel.max():.3g}"]
    path = _output(cfg, f"sindy-{spec.name if spec else 'input'}.json")
    _write_json(path, payload)
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")
    if schedule is not None:
        path.with_suffix(".schedule.json").write_text(schedule.to_json() + "\n")
    print("\n".join(lines))


def cmd_havok(cfg: RunConfig) -> None:
    spec, T, T_slow = _source(cfg)
    if cfg.iterative:
        _havok_iterative(cfg)
        return
    if cfg.rank is None:
        raise CliError("--rank is required")
    if spec is None and cfg.input is None:
        raise CliError("give --system, --kind or --input")
    rate = cfg.rate or (cfg.q - 1)
    train_periods = cfg.periods or 5.0
    if cfg.input:
        full = TimeSeries.from_csv(cfg.input)
        if T is None:
            raise CliError("--input needs --system or --kind to define the period")
        rate = T / full.dt
    else:
        full = simulate(spec, rate=rate, n_periods=train_periods + cfg.test_periods, transient=cfg.transient,
                        substeps=max(cfg.substeps, math.ceil(1024 / rate)))
    obs = full.column(cfg.variable)
    n_train = int(round(train_periods * rate))
    train = obs.window(0, n_train)
    config = HankelConfig(cfg.q, obs.dt, cfg.d, cfg.c)
    model = stabilize(fit_dmd(build_hankel(train, config), cfg.rank))
    pred = predict(model, obs.times)[:, 0]
    truth = obs.values[:, 0]
    payload = {
        "model": model.to_dict(),
        "hankel": asdict(config),
        "delay_duration": config.delay_duration,
        "train_rmse": rmse(pred[:n_train], truth[:n_train], normalize=True),
        **_provenance(cfg),
    }
    if obs.m > n_train:
        payload["test_rmse"] = rmse(pred[n_train:], truth[n_train:], normalize=True)
    path = _output(cfg, f"havok-{spec.name if spec else 'input'}.json")
    _write_json(path, payload)
    TimeSeries(obs.t0, obs.dt, np.column_stack([truth, pred])).to_csv(
        path.with_suffix(".csv"), comments=_comments(cfg) + ["columns: x1 = data, x2 = model"]
    )
    print(json.dumps({k: payload[k] for k in ("train_rmse", "test_rmse", "delay_duration") if k in payload}))


def _havok_iterative(cfg: RunConfig) -> None:
    F = cfg.F if cfg.F is not None else 20
    if isinstance(F, list):
        raise CliError("--F must be a single value for --iterative")
    rank = cfg.rank or 50
    obs = two_scale_vdp(F, 128, 7.0)
    model = iterative_fit(obs.summed, obs.T_fast, F, r_fast=rank, r_slow=rank, q=cfg.q)
    s = obs.summed
    pred = combined_predict(model, s.times)[:, 0]
    n_train = int(round(5 * F * 128))
    payload = {
        "two_scale_model": json.loads(model.to_json()),
        "T_fast": obs.T_fast,
        "T_slow": obs.T_slow,
        "test_rmse": rmse(pred[n_train:], s.values[n_train:, 0], normalize=True),
        **_provenance(cfg),
    }
    path = _output(cfg, f"havok-iterative-F{F}.json")
    _write_json(path, payload)
    TimeSeries(s.t0, s.dt, np.column_stack([s.values[:, 0], pred])).to_csv(
        path.with_suffix(".csv"), comments=_comments(cfg) + ["columns: x1 = data, x2 = model"]
    )
    print(json.dumps({"test_rmse": payload["test_rmse"]}))


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def cmd_sweep(cfg: RunConfig) -> None:
    name = cfg.experiment
    if name in STOCHASTIC_EXPERIMENTS and cfg.seed is None:
        raise CliError(f"--seed is required for the {name} sweep")
    seed = cfg.seed if cfg.seed is not None else 0
    _progress(f"sweep {name}: started")
    if name == "data-requirement":
        if not cfg.system:
            raise CliError("data-requirement needs --system")
        spec = make_system(cfg.system, **cfg.params)
        result = data_requirement_sweep(spec, cfg.rates or (2**12,), cfg.trials or 20, seed, cfg.threshold,
                                        progress=_progress)
    elif name == "burst-vs-uniform":
        grid = cfg.F if isinstance(cfg.F, list) else [cfg.F] if cfg.F else [2, 4, 8, 16]
        result = burst_vs_uniform_sweep(cfg.kind or "vdp-vdp", grid, cfg.trials or 20, seed, progress=_progress)
    elif name == "spacing-tradeoff":
        grid = cfg.F if isinstance(cfg.F, list) else [cfg.F] if cfg.F else [4, 8, 16]
        result = spacing_tradeoff_sweep(grid, cfg.rank or 100, seed, progress=_progress)
    elif name == "rank-delay":
        result = rank_delay_study(make_system(cfg.system or "vanderpol", **cfg.params))
    elif name == "havok-periodic":
        result = periodic_orbit_study()
    else:
        result = iterative_comparison(cfg.F or 20, cfg.rank or 50, seed=seed)
    result.meta.update(_provenance(cfg))
    js, cs = result.save(_output(cfg, name))
    csv_text = "".join(f"# {line}\n" for line in _comments(cfg)) + cs.read_text()
    cs.write_text(csv_text)
    _progress(f"sweep {name}: wrote {js} and {cs}")


COMMANDS = {"simulate": cmd_simulate, "sindy": cmd_sindy, "havok": cmd_havok, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        COMMANDS[cfg.command](cfg)
    except (CliError, ValueError, ArithmeticError, OSError, KeyError, TypeError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    return 0
