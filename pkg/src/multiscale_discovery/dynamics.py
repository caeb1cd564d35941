"""Benchmark systems, linear fast/slow couplings, and a fixed-step RK4 integrator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .sindy import PolynomialLibrary, evaluate_library
from .timeseries import TimeSeries


class DivergenceError(ArithmeticError):
    """Raised when an integration produces non-finite states."""


def _lorenz(s, sigma, rho, beta):
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)


def _duffing(s, delta, alpha, beta):
    x, y = s[..., 0], s[..., 1]
    return np.stack([y, -delta * y - alpha * x - beta * x**3], axis=-1)


def _vanderpol(s, mu):
    x, y = s[..., 0], s[..., 1]
    return np.stack([y, mu * (1 - x**2) * y - x], axis=-1)


def _rossler(s, a, b, c, tau):
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([(-y - z) / tau, (x + a * y) / tau, (b + z * (x - c)) / tau], axis=-1)


# name -> (rhs, default params, state names, default x0, variable used to measure the period)
_CATALOGUE = {
    "lorenz": (_lorenz, {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}, ("x", "y", "z"), (-8.0, 8.0, 27.0), 0),
    "duffing": (_duffing, {"delta": 0.0, "alpha": 1.0, "beta": 4.0}, ("x", "y"), (1.0, 0.0), 0),
    "vanderpol": (_vanderpol, {"mu": 5.0}, ("x", "y"), (2.0, 0.0), 0),
    "rossler": (_rossler, {"a": 0.1, "b": 0.1, "c": 14.0, "tau": 0.1}, ("x", "y", "z"), (1.0, 1.0, 0.0), 1),
}

# Characteristic periods at the default parameters. Lorenz: mean one-lobe
# transit time. Rossler: 6.14 is the x-y loop time at tau = 1, so the loop
# time in simulation units is 6.14 * tau.
_CANONICAL_PERIOD = {
    "lorenz": lambda p: 0.759,
    "duffing": lambda p: 3.179,
    "vanderpol": lambda p: 11.45,
    "rossler": lambda p: 6.14 * p["tau"],
}


def polynomial_structure(rhs: Callable, dimension: int, degree: int = 3, seed: int = 0):
    """Recover the exact polynomial coefficients of ``rhs`` in the monomial basis.

    The rhs is probed at random points and regressed on the library; for a
    polynomial of degree <= ``degree`` the fit is exact up to rounding, so tiny
    entries are zeroed. Returns ``(coefficients, support)``.
    """
    lib = PolynomialLibrary(dimension, degree)
    pts = np.random.default_rng(seed).uniform(-2.0, 2.0, size=(6 * lib.n_terms, dimension))
    theta = evaluate_library(lib, pts)
    xi = np.linalg.lstsq(theta, rhs(pts), rcond=None)[0]
    scale = max(1.0, np.abs(xi).max())
    xi[np.abs(xi) < 1e-9 * scale] = 0.0
    residual = np.abs(theta @ xi - rhs(pts)).max()
    if residual > 1e-6 * scale:
        raise ValueError(f"rhs is not a polynomial of degree <= {degree} (residual {residual:.3g})")
    return xi, xi != 0


@dataclass(frozen=True, eq=False)
class SystemSpec:
    name: str
    dimension: int
    params: dict
    rhs: Callable = field(repr=False)
    period: float
    true_support: np.ndarray = field(repr=False)
    true_coefficients: np.ndarray = field(repr=False)
    state_names: tuple = ()
    default_x0: tuple = ()
    period_variable: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")
        p = PolynomialLibrary(self.dimension).n_terms
        if self.true_support.shape != (p, self.dimension):
            raise ValueError("true_support does not match the degree-3 library")


def rk4_steps(rhs: Callable, x0, dt: float, n_steps: int, keep_every: int = 1) -> np.ndarray:
    """Integrate ``n_steps`` classical RK4 steps; returns states incl. ``x0``.

    ``x0`` may carry leading batch axes (``(..., n)``); the output has shape
    ``(n_steps // keep_every + 1, ...)`` with every ``keep_every``-th state.
    """
    x = np.array(x0, dtype=float)
    n_out = n_steps // keep_every + 1
    out = np.empty((n_out,) + x.shape)
    out[0] = x
    half = 0.5 * dt
    sixth = dt / 6.0
    k = 1
    # overflow is reported through DivergenceError, not floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            k1 = rhs(x)
            k2 = rhs(x + half * k1)
            k3 = rhs(x + half * k2)
            k4 = rhs(x + dt * k3)
            x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            if step % keep_every == 0:
                out[k] = x
                k += 1
            if step % 4096 == 0 and not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state after {step} steps")
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite state encountered during integration")
    return out


def _crossing_times(t, s):
    idx = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    return t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])


def measure_period(rhs, x0, variable: int, time_scale: float, n_cycles: int = 20, steps_per_unit: int = 500):
    """Mean interval between upward mean-crossings of one state variable.

    ``time_scale`` is a rough guess of the period used to size the run; the
    first half of the run is discarded as transient.
    """
    dt = time_scale / steps_per_unit
    n = int(2 * (n_cycles + 2) * steps_per_unit)
    traj = rk4_steps(rhs, x0, dt, n)[n // 2 :]
    sig = traj[:, variable]
    t = np.arange(len(sig)) * dt
    tc = _crossing_times(t, sig - sig.mean())
    if len(tc) < 2:
        raise ValueError("no recurrent crossings found; cannot measure a period")
    return float(np.diff(tc).mean())


def orbit_period(spec, x0=None, max_loops: int = 8, rtol: float = 2e-3, steps_per_period: int = 1000, transient: float = 50.0):
    """Full recurrence time of a periodic orbit, in simulation time units.

    ``spec.period`` counts one loop of the period variable. A period-k orbit
    only repeats after k loops, so this compares the full state at successive
    upward crossings and returns the mean time of the shortest repeating
    cycle. Raises ``ValueError`` when no cycle of at most ``max_loops`` loops
    repeats (chaotic or quasiperiodic motion).
    """
    dt = spec.period / steps_per_period
    x = np.array(spec.default_x0 if x0 is None else x0, dtype=float)
    x = rk4_steps(spec.rhs, x, dt, int(transient * steps_per_period), keep_every=int(transient * steps_per_period))[-1]
    traj = rk4_steps(spec.rhs, x, dt, (3 * max_loops + 2) * steps_per_period)
    sig = traj[:, spec.period_variable]
    sig = sig - sig.mean()
    idx = np.nonzero((sig[:-1] < 0) & (sig[1:] >= 0))[0]
    frac = -sig[idx] / (sig[idx + 1] - sig[idx])
    states = traj[idx] + frac[:, None] * (traj[idx + 1] - traj[idx])
    times = (idx + frac) * dt
    scale = np.abs(traj).max()
    for k in range(1, max_loops + 1):
        if len(states) < 2 * k + 1:
            break
        if np.abs(states[k:] - states[:-k]).max() <= rtol * scale:
            return float((times[k:] - times[:-k]).mean())
    raise ValueError(f"no repeating cycle of at most {max_loops} loops found")


def make_system(name: str, period: float | None = None, **params) -> SystemSpec:
    """Build one of the benchmark systems (lorenz, duffing, vanderpol, rossler).

    Unspecified parameters take the benchmark defaults. At the defaults the
    period is the published constant; for other parameter sets it is measured
    from a simulation unless ``period`` is given.
    """
    if name not in _CATALOGUE:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(_CATALOGUE)}")
    fn, defaults, names, x0, pvar = _CATALOGUE[name]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    full = {**defaults, **{k: float(v) for k, v in params.items()}}
    for key, value in full.items():
        if not math.isfinite(value):
            raise ValueError(f"parameter {key} must be finite, got {value}")
    rhs = partial(fn, **full)
    coeffs, support = polynomial_structure(rhs, len(names))
    if period is None:
        if full == defaults:
            period = _CANONICAL_PERIOD[name](full)
        else:
            guess = _CANONICAL_PERIOD[name](full)
            period = measure_period(rhs, np.array(x0), pvar, guess)
    return SystemSpec(name, len(names), full, rhs, float(period), support, coeffs, names, x0, pvar)


def _coupled_rhs(s, fast_rhs, slow_rhs, n, C, D, tau_fast, tau_slow):
    u, v = s[..., :n], s[..., n:]
    du = (fast_rhs(u) + v @ C.T) / tau_fast
    dv = (slow_rhs(v) + u @ D.T) / tau_slow
    return np.concatenate([du, dv], axis=-1)


@dataclass(frozen=True, eq=False)
class CoupledSpec:
    """Fast system ``u`` and slow system ``v`` with linear coupling.

    ``tau_fast * du/dt = f(u) + C v`` and ``tau_slow * dv/dt = g(v) + D u``.
    The combined system behaves like a :class:`SystemSpec` whose period is the
    fast period, so sampling rates are expressed per fast period.
    """

    kind: str
    fast: SystemSpec
    slow: SystemSpec
    C: np.ndarray
    D: np.ndarray
    tau_fast: float
    tau_slow: float
    F: float
    system: SystemSpec = field(init=False, repr=False)

    def __post_init__(self):
        n, l = self.fast.dimension, self.slow.dimension
        C, D = np.asarray(self.C, float), np.asarray(self.D, float)
        if C.shape != (n, l) or D.shape != (l, n):
            raise ValueError(f"coupling shapes must be C {(n, l)} and D {(l, n)}, got {C.shape} and {D.shape}")
        if not self.F > 1:
            raise ValueError(f"frequency ratio F must exceed 1, got {self.F}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        rhs = partial(
            _coupled_rhs,
            fast_rhs=self.fast.rhs,
            slow_rhs=self.slow.rhs,
            n=n,
            C=C,
            D=D,
            tau_fast=self.tau_fast,
            tau_slow=self.tau_slow,
        )
        coeffs, support = polynomial_structure(rhs, n + l)
        names = tuple(f"{s}_fast" for s in self.fast.state_names) + tuple(f"{s}_slow" for s in self.slow.state_names)
        params = {
            **{f"fast.{k}": v for k, v in self.fast.params.items()},
            **{f"slow.{k}": v for k, v in self.slow.params.items()},
            "tau_fast": self.tau_fast,
            "tau_slow": self.tau_slow,
        }
        combined = SystemSpec(
            self.kind,
            n + l,
            params,
            rhs,
            self.T_fast,
            support,
            coeffs,
            names,
            tuple(self.fast.default_x0) + tuple(self.slow.default_x0),
            self.fast.period_variable,
        )
        object.__setattr__(self, "system", combined)

    @property
    def T_fast(self) -> float:
        return self.tau_fast * self.fast.period

    @property
    def T_slow(self) -> float:
        return self.tau_slow * self.slow.period

    # SystemSpec-like surface so simulate() and the fitting code accept either.
    @property
    def name(self):
        return self.kind

    @property
    def dimension(self):
        return self.system.dimension

    @property
    def rhs(self):
        return self.system.rhs

    @property
    def period(self):
        return self.system.period

    @property
    def true_support(self):
        return self.system.true_support

    @property
    def true_coefficients(self):
        return self.system.true_coefficients

    @property
    def state_names(self):
        return self.system.state_names

    @property
    def default_x0(self):
        return self.system.default_x0


# kind -> (fast system, slow system, state receiving the coupling in fast, in slow)
# VdP-VdP couples through the x equations; a Van der Pol oscillator driven by
# Lorenz is forced through its y equation, where a forcing of size |c * x_lorenz|
# only stalls the relaxation cycle once it exceeds ~1 rather than ~0.13.
_COUPLED_KINDS = {
    "vdp-vdp": ("vanderpol", "vanderpol", 0, 0),
    "slowvdp-fastlorenz": ("lorenz", "vanderpol", 0, 1),
    "fastvdp-slowlorenz": ("vanderpol", "lorenz", 1, 0),
}


def make_coupled(kind: str, F: float, C=None, D=None, c1: float = 0.05, c2: float = 0.05, mu: float = 5.0) -> CoupledSpec:
    """Couple two benchmark systems with period ratio ``F = T_slow / T_fast``.

    The fast system keeps its natural time (``tau_fast = 1``) and the slow
    system is slowed by ``tau_slow = F * T_fast / T_slow``. Without explicit
    ``C``/``D`` the first state of each subsystem drives one equation of the
    other with strengths ``c1`` (into fast) and ``c2`` (into slow).
    """
    if kind not in _COUPLED_KINDS:
        raise ValueError(f"unknown coupled system {kind!r}; choose from {sorted(_COUPLED_KINDS)}")
    if not F > 1:
        raise ValueError(f"frequency ratio F must exceed 1, got {F}")
    fast_name, slow_name, fast_in, slow_in = _COUPLED_KINDS[kind]
    fast = make_system(fast_name, **({"mu": mu} if fast_name == "vanderpol" else {}))
    slow = make_system(slow_name, **({"mu": mu} if slow_name == "vanderpol" else {}))
    n, l = fast.dimension, slow.dimension
    if C is None:
        C = np.zeros((n, l))
        C[fast_in, 0] = c1
    if D is None:
        D = np.zeros((l, n))
        D[slow_in, 0] = c2
    tau_slow = F * fast.period / slow.period
    return CoupledSpec(kind, fast, slow, C, D, 1.0, tau_slow, float(F))


def simulate(spec, x0=None, rate: float = 2**12, n_periods: float = 1.0, transient: float = 10.0, substeps: int = 1) -> TimeSeries:
    """Fixed-step RK4 trajectory sampled at ``rate`` samples per period.

    The first ``transient`` periods are integrated and discarded. Returns
    ``ceil(rate * n_periods)`` rows. ``substeps`` > 1 integrates on a finer
    grid and keeps every ``substeps``-th state.
    """
    if rate < 2:
        raise ValueError(f"rate must be >= 2 samples per period, got {rate}")
    if transient < 0 or n_periods <= 0:
        raise ValueError("transient must be >= 0 and n_periods > 0")
    x0 = np.array(spec.default_x0 if x0 is None else x0, dtype=float)
    if x0.shape != (spec.dimension,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {spec.dimension}")
    dt = spec.period / rate
    m = math.ceil(rate * n_periods - 1e-9)
    n_transient = math.ceil(rate * transient - 1e-9)
    h = dt / substeps
    if n_transient:
        x0 = rk4_steps(spec.rhs, x0, h, n_transient * substeps, keep_every=n_transient * substeps)[-1]
    traj = rk4_steps(spec.rhs, x0, h, (m - 1) * substeps, keep_every=substeps)
    return TimeSeries(n_transient * dt, dt, traj)
