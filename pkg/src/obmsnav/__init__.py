"""Loosely coupled 5G / IMU / odometer navigation with a scenario simulator."""

from importlib.metadata import PackageNotFoundError, version

from .kernels import backend
from .pipelines import PIPELINES, Flags, Inputs, run_pipeline
from .scenario import Scenario, load_scenario, reference_scenario, simulate

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "PIPELINES",
    "Flags",
    "Inputs",
    "Scenario",
    "backend",
    "load_scenario",
    "reference_scenario",
    "run_pipeline",
    "simulate",
]
