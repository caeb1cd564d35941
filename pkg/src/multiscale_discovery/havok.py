"""Delay embeddings and linear (exact DMD) models of delay coordinates.

A :class:`HankelPair` stacks ``q`` delayed copies of an observable. Rows are
``d`` fine steps apart and consecutive columns ``c`` fine steps apart; the
shifted matrix is the same construction advanced by one fine step, so the
fitted operator always describes a single step of length ``dt`` no matter how
sparse the embedding is.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .timeseries import TimeSeries


@dataclass(frozen=True)
class HankelConfig:
    q: int
    dt: float
    d: int = 1
    c: int = 1
    n_columns: int | None = None  # None: as many columns as the series allows

    def __post_init__(self):
        if self.q < 2 or self.d < 1 or self.c < 1:
            raise ValueError(f"need q >= 2, d >= 1, c >= 1 (got q={self.q}, d={self.d}, c={self.c})")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_columns is not None and self.n_columns < 1:
            raise ValueError("n_columns must be positive")

    @property
    def delay_duration(self) -> float:
        return (self.q - 1) * self.d * self.dt

    def samples_needed(self, p: int) -> int:
        """Fine samples needed for ``p`` columns, including the one-step shift."""
        return (self.q - 1) * self.d + (p - 1) * self.c + 2

    def max_columns(self, m: int) -> int:
        return (m - 2 - (self.q - 1) * self.d) // self.c + 1


@dataclass(frozen=True, eq=False)
class HankelPair:
    H: np.ndarray
    H_shift: np.ndarray
    config: HankelConfig
    n_observables: int
    t0: float

    @property
    def numel(self) -> int:
        return self.H.size

    @property
    def p(self) -> int:
        return self.H.shape[1]


def hankel_indices(config: HankelConfig, p: int) -> np.ndarray:
    """Fine-grid sample index of every (delay, column) position, shape ``(q, p)``."""
    return (np.arange(config.q) * config.d)[:, None] + (np.arange(p) * config.c)[None, :]


def build_hankel(series: TimeSeries, config: HankelConfig) -> HankelPair:
    if not math.isclose(series.dt, config.dt, rel_tol=1e-9):
        raise ValueError(f"series dt {series.dt} differs from config dt {config.dt}")
    p_max = config.max_columns(series.m)
    if p_max < 1:
        raise ValueError(
            f"series of {series.m} samples is too short for one column "
            f"(needs {config.samples_needed(1)})"
        )
    p = p_max if config.n_columns is None else config.n_columns
    if p > p_max:
        raise ValueError(f"requested {p} columns but the series only supports {p_max}")
    idx = hankel_indices(config, p)
    n = series.n
    v = series.values

    def stack(ix):
        # (q, p, n) -> (q, n, p) -> (q*n, p): block i holds all observables at delay i
        return np.ascontiguousarray(v[ix].transpose(0, 2, 1).reshape(config.q * n, p))

    return HankelPair(stack(idx), stack(idx + 1), config, n, series.t0)


def _interleave(z) -> list:
    z = np.asarray(z, dtype=complex).ravel(order="F")
    out = np.empty(2 * z.size)
    out[0::2], out[1::2] = z.real, z.imag
    return out.tolist()


def _deinterleave(values, shape) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    z = np.empty(a.size // 2, dtype=complex)
    z.real, z.imag = a[0::2], a[1::2]  # arithmetic would lose the sign of zero parts
    return z.reshape(shape, order="F")


@dataclass(frozen=True, eq=False)
class HavokModel:
    """Continuous-time modal model of a delay embedding.

    The state at time ``t`` is ``modes @ (exp(omegas * (t - t_ref)) * amplitudes)``
    and the observable is its first ``n_observables`` rows.
    """

    omegas: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    config: HankelConfig
    t_ref: float
    n_observables: int = 1

    @property
    def rank(self) -> int:
        return len(self.omegas)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Discrete-time eigenvalues for one fine step."""
        return np.exp(self.omegas * self.config.dt)

    def mode_weights(self) -> np.ndarray:
        """Size of each mode's contribution to the observable block."""
        return np.linalg.norm(self.modes[: self.n_observables], axis=0) * np.abs(self.amplitudes)

    def dominant_frequency(self, min_frequency: float = 0.0) -> float:
        """Angular frequency of the heaviest oscillating mode."""
        freq = np.abs(self.omegas.imag)
        weights = np.where(freq > min_frequency, self.mode_weights(), -1.0)
        if weights.max() < 0:
            return 0.0
        return float(freq[int(np.argmax(weights))])

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "rank": self.rank,
            "n_observables": self.n_observables,
            "t_ref": self.t_ref,
            "omegas": _interleave(self.omegas),
            "modes_shape": list(self.modes.shape),
            "modes": _interleave(self.modes),
            "amplitudes": _interleave(self.amplitudes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HavokModel":
        r = data["rank"]
        return cls(
            omegas=_deinterleave(data["omegas"], (r,)),
            modes=_deinterleave(data["modes"], tuple(data["modes_shape"])),
            amplitudes=_deinterleave(data["amplitudes"], (r,)),
            config=HankelConfig(**data["config"]),
            t_ref=data["t_ref"],
            n_observables=data["n_observables"],
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "HavokModel":
        return cls.from_dict(json.loads(text))


def fit_dmd(pair: HankelPair, r: int) -> HavokModel:
    """Rank-``r`` exact DMD of the snapshot pair.

    Raises ``ValueError`` when one of the leading ``r`` singular values is
    numerically zero. Modes whose discrete eigenvalue is exactly zero have no
    continuous-time counterpart and are dropped with a warning.
    """
    H, Hs = pair.H, pair.H_shift
    if not 1 <= r <= min(H.shape):
        raise ValueError(f"rank {r} outside [1, {min(H.shape)}] for H of shape {H.shape}")
    U, S, Vh = np.linalg.svd(H, full_matrices=False)
    tol = S[0] * max(H.shape) * np.finfo(float).eps
    if S[r - 1] <= tol:
        raise ValueError(
            f"singular value {r} is zero to working precision ({S[r - 1]:.3g}); reduce the rank "
            f"(numerical rank is {int(np.sum(S > tol))})"
        )
    U, S, V = U[:, :r], S[:r], Vh[:r].conj().T
    HsVS = Hs @ (V / S)
    A_tilde = U.conj().T @ HsVS
    lam, W = np.linalg.eig(A_tilde)
    zero = np.abs(lam) == 0.0
    if zero.any():
        warnings.warn(f"dropping {int(zero.sum())} mode(s) with zero eigenvalue", RuntimeWarning, stacklevel=2)
        lam, W = lam[~zero], W[:, ~zero]
    modes = HsVS @ W
    omegas = np.log(lam.astype(complex)) / pair.config.dt
    amplitudes = np.linalg.lstsq(modes, H[:, 0].astype(complex), rcond=None)[0]
    # A negative real eigenvalue flips sign every step. Its principal log sits
    # at +i*pi/dt with no conjugate partner, so between grid points it would
    # predict complex values. Splitting it into the pair +-i*pi/dt with half
    # the amplitude each gives cos(pi t / dt): identical on the grid, real off it.
    nyquist = (lam.imag == 0) & (lam.real < 0)
    if nyquist.any():
        omegas = np.concatenate([omegas, omegas[nyquist].conj()])
        modes = np.concatenate([modes, modes[:, nyquist]], axis=1)
        amplitudes[nyquist] *= 0.5
        amplitudes = np.concatenate([amplitudes, amplitudes[nyquist]])
    return HavokModel(omegas, modes, amplitudes, pair.config, pair.t0, pair.n_observables)


def stabilize(model: HavokModel) -> HavokModel:
    """Project every continuous-time eigenvalue onto the imaginary axis."""
    return HavokModel(1j * model.omegas.imag, model.modes, model.amplitudes, model.config, model.t_ref, model.n_observables)


def predict(model: HavokModel, t, full_state: bool = False) -> np.ndarray:
    """Evaluate the modal expansion at arbitrary times.

    Returns shape ``(n_observables,)`` for scalar ``t`` and ``(len(t), n_observables)``
    for a grid; ``full_state=True`` returns every delay block instead.
    """
    scalar = np.ndim(t) == 0
    tau = np.atleast_1d(np.asarray(t, dtype=float)) - model.t_ref
    if not np.all(np.isfinite(tau)):
        raise ValueError("prediction times must be finite")
    rows = model.modes if full_state else model.modes[: model.n_observables]
    out = np.empty((tau.size, rows.shape[0]), dtype=complex)
    chunk = max(1, 2**22 // max(1, model.rank))
    for lo in range(0, tau.size, chunk):
        expo = np.exp(np.outer(tau[lo : lo + chunk], model.omegas)) * model.amplitudes
        out[lo : lo + chunk] = expo @ rows.T
    magnitude = np.abs(out).max(initial=0.0)
    residue = np.abs(out.imag).max(initial=0.0)
    if residue > 1e-8 * max(magnitude, np.finfo(float).tiny):
        warnings.warn(
            f"prediction has imaginary residue {residue:.3g} (relative {residue / magnitude:.3g}); "
            "the spectrum is not conjugate-closed",
            RuntimeWarning,
            stacklevel=2,
        )
    real = out.real
    return real[0] if scalar else real


def reconstruct(model: HavokModel, series: TimeSeries) -> np.ndarray:
    """Model output on the time grid of ``series``."""
    return predict(model, series.times)


def svd_mode_report(pair: HankelPair, k: int):
    """Leading normalised singular values ``sigma_i / sum(sigma)`` and left vectors."""
    if not 1 <= k <= min(pair.H.shape):
        raise ValueError(f"k must lie in [1, {min(pair.H.shape)}]")
    U, S, _ = np.linalg.svd(pair.H, full_matrices=False)
    total = S.sum()
    if total == 0:
        raise ValueError("Hankel matrix is identically zero")
    return S[:k] / total, U[:, :k]


def one_step_residual(model: HavokModel, pair: HankelPair) -> float:
    """Relative Frobenius error of advancing every column of H by the model."""
    Phi = model.modes
    coords = np.linalg.lstsq(Phi, pair.H.astype(complex), rcond=None)[0]
    advanced = Phi @ (model.eigenvalues[:, None] * coords)
    return float(np.linalg.norm(pair.H_shift - advanced) / np.linalg.norm(pair.H_shift))


def fit_havok(series: TimeSeries, config: HankelConfig, r: int, stable: bool = True) -> HavokModel:
    model = fit_dmd(build_hankel(series, config), r)
    return stabilize(model) if stable else model
