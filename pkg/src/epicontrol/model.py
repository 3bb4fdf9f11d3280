"""Value objects shared by simulation, fitting and allocation."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernel import GammaKernel, build_kernel

__all__ = [
    "SEED_CONVENTIONS",
    "RegionParams",
    "CouplingMatrix",
    "ControlSchedule",
    "Trajectory",
    "BedPlan",
    "CostModel",
]

SEED_CONVENTIONS = ("constant", "pulse")


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RegionParams:
    """Per-region epidemic parameters.

    ``latent_d`` lags every generation access; ``sigma`` is the last lag
    that still counts towards the hospitalized population.
    """

    alpha: float
    latent_d: int = 6
    sigma: int = 6
    kernel: GammaKernel = field(default_factory=build_kernel, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if int(self.latent_d) != self.latent_d or self.latent_d < 0:
            raise ValueError(f"latent_d must be a non-negative integer, got {self.latent_d!r}")
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ValueError(f"sigma must be an integer >= 1, got {self.sigma!r}")
        object.__setattr__(self, "latent_d", int(self.latent_d))
        object.__setattr__(self, "sigma", int(self.sigma))


@dataclass(frozen=True)
class CouplingMatrix:
    """``beta[i][r]``: new cases in region r per active case in region i per day."""

    beta: np.ndarray

    def __post_init__(self):
        arr = np.array(self.beta, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError("coupling matrix must be square with at least one region")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("coupling entries must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "beta", arr)

    @property
    def m(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def diagonal(cls, betas: Sequence[float]) -> "CouplingMatrix":
        return cls(np.diag(np.asarray(betas, dtype=float)))

    def is_diagonal(self) -> bool:
        return bool(np.all(self.beta[~np.eye(self.m, dtype=bool)] == 0.0))


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant integer isolation time.

    ``tau(t) = values[j]`` for ``breakpoints[j] < t <= breakpoints[j + 1]``.
    """

    breakpoints: tuple
    values: tuple
    tau_min: int = 1
    tau_max: int | None = None

    def __post_init__(self):
        bps = tuple(int(b) for b in self.breakpoints)
        vals = tuple(int(v) for v in self.values)
        if any(int(v) != v for v in self.values) or any(int(b) != b for b in self.breakpoints):
            raise ValueError("breakpoints and isolation times must be integers")
        if len(bps) != len(vals) + 1 or not vals:
            raise ValueError("need len(breakpoints) == len(values) + 1 and at least one interval")
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError(f"breakpoints must be strictly increasing, got {bps}")
        tau_max = max(vals) if self.tau_max is None else int(self.tau_max)
        if self.tau_min < 1:
            raise ValueError("tau_min must be >= 1")
        if tau_max < self.tau_min:
            raise ValueError("tau_max must be >= tau_min")
        bad = [v for v in vals if not self.tau_min <= v <= tau_max]
        if bad:
            raise ValueError(f"isolation times {bad} fall outside [{self.tau_min}, {tau_max}]")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "tau_max", tau_max)

    @classmethod
    def constant(cls, tau: int, start: int, end: int, **kw) -> "ControlSchedule":
        return cls((start, end), (tau,), **kw)

    @property
    def first_day(self) -> int:
        return self.breakpoints[0] + 1

    @property
    def last_day(self) -> int:
        return self.breakpoints[-1]

    def covers(self, start: int, end: int) -> bool:
        return self.first_day <= start and end <= self.last_day

    def __call__(self, t: int) -> int:
        if not self.first_day <= t <= self.last_day:
            raise ValueError(f"day {t} outside control domain [{self.first_day}, {self.last_day}]")
        j = bisect.bisect_left(self.breakpoints, t) - 1
        return self.values[j]

    def daily(self, start: int, end: int) -> np.ndarray:
        """tau(t) for t = start..end inclusive."""
        if not self.covers(start, end):
            raise ValueError(f"control domain [{self.first_day}, {self.last_day}] does not cover [{start}, {end}]")
        return np.array([self(t) for t in range(start, end + 1)], dtype=np.int64)

    def intervals(self):
        """Yield ``(first_day, last_day, tau)`` per interval."""
        for j, tau in enumerate(self.values):
            yield self.breakpoints[j] + 1, self.breakpoints[j + 1], tau

    def with_final_value(self, tau: int) -> "ControlSchedule":
        vals = self.values[:-1] + (int(tau),)
        return ControlSchedule(self.breakpoints, vals, self.tau_min, max(self.tau_max, int(tau)))


@dataclass(frozen=True)
class Trajectory:
    """Daily new infections ``x(t)`` for ``t = start .. start + len(values) - 1``.

    Days ``t <= 0`` are prehistory, filled according to ``convention``:
    ``"constant"`` puts ``x0`` on every prehistory day, ``"pulse"`` puts it
    on day 0 only.
    """

    values: np.ndarray
    start: int
    x0: float = 0.0
    convention: str = "constant"
    region: str = "region"

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("trajectory values must be one-dimensional")
        if np.any(arr < 0) or np.any(~np.isfinite(arr)):
            raise ValueError("trajectory values must be finite and non-negative")
        if self.start > 0:
            raise ValueError("trajectory must start in the prehistory (start <= 0)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def end(self) -> int:
        return self.start + len(self.values) - 1

    @property
    def depth(self) -> int:
        """Number of prehistory days (t <= 0) held."""
        return 1 - self.start

    def __call__(self, t: int) -> float:
        if not self.start <= t <= self.end:
            raise IndexError(f"day {t} outside trajectory [{self.start}, {self.end}]")
        return float(self.values[t - self.start])

    def window(self, first: int, last: int) -> np.ndarray:
        """x(first..last) inclusive."""
        if first < self.start or last > self.end:
            raise IndexError(f"days [{first}, {last}] outside trajectory [{self.start}, {self.end}]")
        return self.values[first - self.start : last - self.start + 1]

    def future(self) -> np.ndarray:
        """x(1..end)."""
        return self.values[1 - self.start :]

    @staticmethod
    def prehistory(x0: float, depth: int, convention: str = "constant") -> np.ndarray:
        """Seed values for days ``1 - depth .. 0``."""
        if x0 < 0:
            raise ValueError("prehistory value x0 must be non-negative")
        if convention not in SEED_CONVENTIONS:
            raise ValueError(f"seed convention must be one of {SEED_CONVENTIONS}, got {convention!r}")
        seed = np.zeros(depth)
        if convention == "constant":
            seed[:] = x0
        else:
            seed[-1] = x0
        return seed


@dataclass(frozen=True)
class BedPlan:
    """Bed capacity ``b(t) = base + sum of tranches with day <= t``."""

    base: float
    tranche_days: tuple = ()
    tranche_sizes: tuple = ()
    region: str = "region"

    def __post_init__(self):
        days = tuple(int(d) for d in self.tranche_days)
        sizes = tuple(float(s) for s in self.tranche_sizes)
        if len(days) != len(sizes):
            raise ValueError("tranche_days and tranche_sizes differ in length")
        if self.base < 0 or any(s < 0 for s in sizes):
            raise ValueError("bed counts must be non-negative")
        if any(d1 > d2 for d1, d2 in zip(days, days[1:])):
            raise ValueError("tranche days must be non-decreasing")
        object.__setattr__(self, "tranche_days", days)
        object.__setattr__(self, "tranche_sizes", sizes)

    def __call__(self, t: int) -> float:
        return float(self.base) + sum(s for d, s in zip(self.tranche_days, self.tranche_sizes) if d <= t)

    def daily(self, start: int, end: int) -> np.ndarray:
        days = np.arange(start, end + 1)
        beds = np.full(days.shape, float(self.base))
        for d, s in zip(self.tranche_days, self.tranche_sizes):
            beds[days >= d] += s
        return beds


@dataclass(frozen=True)
class CostModel:
    """Linear daily costs checked against the daily budget ``F(t)``.

    ``budget`` is a scalar or a per-day sequence aligned with the planning
    window.
    """

    kappa_B: float = 0.0
    kappa_S: float = 0.0
    kappa_I: float = 0.0
    budget: float | Sequence[float] = 0.0

    def __post_init__(self):
        if min(self.kappa_B, self.kappa_S, self.kappa_I) < 0:
            raise ValueError("cost coefficients must be non-negative")
        budget = np.atleast_1d(np.asarray(self.budget, dtype=float))
        if np.any(budget < 0):
            raise ValueError("budget must be non-negative")

    def budget_on(self, days: np.ndarray) -> np.ndarray:
        budget = np.atleast_1d(np.asarray(self.budget, dtype=float))
        if budget.size == 1:
            return np.full(len(days), budget[0])
        if budget.size != len(days):
            raise ValueError(f"budget series has {budget.size} entries for {len(days)} days")
        return budget.copy()
