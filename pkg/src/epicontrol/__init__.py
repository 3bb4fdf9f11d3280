"""Delay-difference epidemic model with isolation-time control, parameter
fitting and hospital-bed allocation."""

from .kernel import DEFAULT_GAMMA, GammaKernel, GammaParams, build_kernel, gamma_cdf, gamma_pdf
from .model import BedPlan, ControlSchedule, CostModel, CouplingMatrix, RegionParams, Trajectory
from .simulate import (
    active_infectious,
    cumulative_cases,
    cumulative_deaths,
    hospitalized,
    observables,
    reproduction_number,
    simulate_multi,
    simulate_single,
    step_single,
)

__version__ = "0.1.0"
