"""Uniformly sampled multivariate trajectories and their CSV form."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_GRID = re.compile(r"#\s*grid t0=(?P<t0>\S+) dt=(?P<dt>\S+)")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Snapshots on a uniform grid: row ``k`` is the state at ``t0 + k * dt``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"values must be an m x n matrix with m >= 1, got shape {values.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.m) * self.dt

    def __len__(self):
        return self.m

    def column(self, j: int) -> "TimeSeries":
        return TimeSeries(self.t0, self.dt, self.values[:, [j]])

    def window(self, start: int, stop: int | None = None, stride: int = 1) -> "TimeSeries":
        """Rows ``start:stop:stride`` as a new series on the coarser grid."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        stop = self.m if stop is None else stop
        rows = self.values[start:stop:stride]
        return TimeSeries(self.t0 + start * self.dt, self.dt * stride, rows)

    def to_csv(self, path, comments: list[str] | None = None) -> None:
        path = Path(path)
        names = ",".join(f"x{i + 1}" for i in range(self.n))
        table = np.column_stack([self.times, self.values])
        with path.open("w", newline="\n") as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            # the time column alone cannot restore dt bit-for-bit
            fh.write(f"# grid t0={self.t0!r} dt={self.dt!r}\n")
            fh.write(f"t,{names}\n")
            np.savetxt(fh, table, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with Path(path).open() as fh:
            grid = None
            header = fh.readline()
            while header.startswith("#"):
                found = _GRID.match(header)
                if found:
                    grid = float(found["t0"]), float(found["dt"])
                header = fh.readline()
            if header.split(",")[0].strip() != "t":
                raise ValueError(f"{path}: first column must be 't', got header {header.strip()!r}")
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
        if grid is not None:
            return cls(grid[0], grid[1], body[:, 1:])
        t = body[:, 0]
        dt = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
        return cls(t[0], dt, body[:, 1:])
