"""Sparse equation discovery and delay-embedding models for multiscale dynamics."""

from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.1.0"

from .dynamics import CoupledSpec, SystemSpec, make_coupled, make_system, simulate
from .havok import HankelConfig, HavokModel, build_hankel, fit_dmd, predict, stabilize
from .multiscale import TwoScaleModel, combined_predict, iterative_fit, spaced_config
from .sampling import BurstSchedule, jittered_burst_schedule, poisson_burst_schedule, uniform_schedule
from .sindy import PolynomialLibrary, SparseModel, fit_sindy, stlsq
from .timeseries import TimeSeries

__all__ = [
    "BurstSchedule",
    "CoupledSpec",
    "HankelConfig",
    "HavokModel",
    "PolynomialLibrary",
    "SparseModel",
    "SystemSpec",
    "TimeSeries",
    "TwoScaleModel",
    "build_hankel",
    "combined_predict",
    "fit_dmd",
    "fit_sindy",
    "iterative_fit",
    "jittered_burst_schedule",
    "make_coupled",
    "make_system",
    "poisson_burst_schedule",
    "predict",
    "simulate",
    "spaced_config",
    "stabilize",
    "stlsq",
    "uniform_schedule",
]
