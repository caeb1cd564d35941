"""Sparse identification of nonlinear dynamics over polynomial libraries.

The regression ``Xdot = Theta(X) Xi`` is solved by sequentially thresholded
least squares (STLSQ). The threshold is applied to raw coefficients; the
library columns are not normalised, so the threshold is scale sensitive.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .timeseries import TimeSeries


@dataclass(frozen=True)
class PolynomialLibrary:
    """All monomials in ``dimension`` variables of total degree <= ``max_degree``.

    Terms are ordered by total degree, then by descending exponent vector, so
    for two variables the columns read ``1, x, y, x^2, xy, y^2, x^3, ...``.
    """

    dimension: int
    max_degree: int = 3
    terms: tuple = field(init=False, repr=False)
    _combos: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension < 1 or self.max_degree < 1:
            raise ValueError("dimension and max_degree must be positive")
        combos, terms = [], []
        for degree in range(self.max_degree + 1):
            for combo in itertools.combinations_with_replacement(range(self.dimension), degree):
                exps = [0] * self.dimension
                for i in combo:
                    exps[i] += 1
                combos.append(combo)
                terms.append(tuple(exps))
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "_combos", tuple(combos))

    @property
    def n_terms(self) -> int:
        return comb(self.dimension + self.max_degree, self.max_degree)

    def index(self, exponents) -> int:
        return self.terms.index(tuple(exponents))

    def term_names(self, state_names=None) -> list[str]:
        names = state_names or [f"x{i + 1}" for i in range(self.dimension)]
        out = []
        for exps in self.terms:
            parts = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e]
            out.append(" ".join(parts) if parts else "1")
        return out


def evaluate_library(lib: PolynomialLibrary, X) -> np.ndarray:
    """Evaluate every library monomial row-wise on the snapshot matrix ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != lib.dimension:
        raise ValueError(f"expected X with {lib.dimension} columns, got shape {X.shape}")
    theta = np.empty((X.shape[0], len(lib.terms)))
    for j, combo in enumerate(lib._combos):
        if not combo:
            theta[:, j] = 1.0
        else:
            col = X[:, combo[0]].copy()
            for i in combo[1:]:
                col *= X[:, i]
            theta[:, j] = col
    return theta


def center_difference(series: TimeSeries):
    """Second-order central differences on the interior rows.

    Returns ``(X, Xdot)``, both with ``m - 2`` rows; the two endpoints are
    dropped rather than estimated with one-sided stencils.
    """
    if series.m < 3:
        raise ValueError(f"center differences need at least 3 rows, got {series.m}")
    v = series.values
    return v[1:-1], (v[2:] - v[:-2]) / (2.0 * series.dt)


@dataclass(frozen=True, eq=False)
class SparseModel:
    library: PolynomialLibrary | None
    coefficients: np.ndarray
    threshold: float | np.ndarray
    iterations_used: int

    @property
    def support(self) -> np.ndarray:
        return self.coefficients != 0

    def equations(self, state_names=None, precision: int = 4) -> list[str]:
        n = self.coefficients.shape[1]
        names = state_names or [f"x{i + 1}" for i in range(n)]
        terms = (
            self.library.term_names(names)
            if self.library is not None
            else [f"theta{j}" for j in range(self.coefficients.shape[0])]
        )
        lines = []
        for i, name in enumerate(names):
            col = self.coefficients[:, i]
            rhs = " + ".join(
                f"{c:.{precision}g}" + ("" if t == "1" else f" {t}") for c, t in zip(col, terms) if c != 0
            )
            lines.append(f"d{name}/dt = {rhs or '0'}")
        return lines

    def to_dict(self) -> dict:
        lib = self.library
        return {
            "library": None if lib is None else {"dimension": lib.dimension, "max_degree": lib.max_degree},
            "terms": None if lib is None else [list(t) for t in lib.terms],
            "coefficients": self.coefficients.tolist(),
            "threshold": self.threshold if np.ndim(self.threshold) == 0 else list(self.threshold),
            "iterations_used": self.iterations_used,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparseModel":
        lib = data.get("library")
        library = None if lib is None else PolynomialLibrary(lib["dimension"], lib["max_degree"])
        if library is not None and data.get("terms") is not None:
            if [tuple(t) for t in data["terms"]] != list(library.terms):
                raise ValueError("serialized term order does not match the library")
        lam = data["threshold"]
        lam = float(lam) if np.ndim(lam) == 0 else np.array(lam, dtype=float)
        coeffs = np.array(data["coefficients"], dtype=float).reshape(-1, len(data["coefficients"][0]) if data["coefficients"] else 0)
        return cls(library, coeffs, lam, data["iterations_used"])

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "SparseModel":
        return cls.from_dict(json.loads(text))


def _restricted_lstsq(theta, y, active, column):
    sol = np.zeros(theta.shape[1])
    if not active.any():
        return sol
    sub = theta[:, active]
    coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
    if rank < sub.shape[1]:
        warnings.warn(
            f"column {column}: restricted least-squares subproblem is rank deficient "
            f"({rank} < {sub.shape[1]}); using the minimum-norm solution",
            RuntimeWarning,
            stacklevel=3,
        )
    sol[active] = coef
    return sol


def stlsq(Theta, Xdot, threshold: float = 0.1, max_iter: int = 10, library: PolynomialLibrary | None = None):
    """Sequentially thresholded least squares.

    Each sweep zeroes coefficients below ``threshold`` and refits every column
    on its surviving terms; iteration stops once the support is unchanged.
    ``threshold`` is a scalar or one value per column of ``Xdot``.
    """
    Theta = np.asarray(Theta, dtype=float)
    Xdot = np.asarray(Xdot, dtype=float)
    if Xdot.ndim == 1:
        Xdot = Xdot[:, None]
    if Theta.ndim != 2 or Theta.shape[0] != Xdot.shape[0] or Theta.shape[0] < 1:
        raise ValueError(f"incompatible shapes Theta {Theta.shape}, Xdot {Xdot.shape}")
    lam = np.broadcast_to(np.asarray(threshold, dtype=float), (Xdot.shape[1],))
    if not np.all(lam > 0):
        raise ValueError("threshold must be positive")
    if library is not None and library.n_terms != Theta.shape[1]:
        raise ValueError("library size does not match Theta")

    xi = np.linalg.lstsq(Theta, Xdot, rcond=None)[0]
    support = np.ones(xi.shape, dtype=bool)
    iterations = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        new_support = support & (np.abs(xi) >= lam)
        if np.array_equal(new_support, support) and iterations > 1:
            converged = True
            break
        support = new_support
        xi = np.column_stack(
            [_restricted_lstsq(Theta, Xdot[:, j], support[:, j], j) for j in range(Xdot.shape[1])]
        )
    if not converged:
        # enforce the magnitude invariant even when the cap is hit
        small = np.abs(xi) < lam
        if small.any():
            warnings.warn(f"STLSQ did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
        xi[small] = 0.0
    stored = float(lam[0]) if np.ndim(threshold) == 0 else lam.copy()
    return SparseModel(library, xi, stored, iterations)


def support_matches(model: SparseModel, truth) -> bool:
    truth = np.asarray(truth, dtype=bool)
    if truth.shape != model.coefficients.shape:
        raise ValueError(f"shape mismatch: model {model.coefficients.shape} vs truth {truth.shape}")
    return bool(np.array_equal(model.support, truth))


def fit_sindy(series: TimeSeries, threshold: float = 0.1, degree: int = 3, max_iter: int = 10) -> SparseModel:
    X, Xdot = center_difference(series)
    lib = PolynomialLibrary(series.n, degree)
    return stlsq(evaluate_library(lib, X), Xdot, threshold, max_iter, library=lib)


def fit_pairs(X, Xdot, threshold: float = 0.1, degree: int = 3, max_iter: int = 10) -> SparseModel:
    """Fit from precomputed ``(X, Xdot)`` training pairs, e.g. burst samples."""
    lib = PolynomialLibrary(np.shape(X)[1], degree)
    return stlsq(evaluate_library(lib, X), Xdot, threshold, max_iter, library=lib)
