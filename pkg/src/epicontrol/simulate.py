"""Delay-difference infection dynamics under an isolation-time control.

Day ``t``'s new cases are generated under the control in force on day ``t``::

    x(t) = beta * sum_{i < tau(t)} (1 - alpha * omega(i)) * x(t - 1 - d - i)

which is the one-step recurrence ``step_single`` evaluated at ``t - 1``.
"""
from __future__ import annotations

from typing import Sequence

import numba
import numpy as np

from .kernel import GammaKernel
from .model import ControlSchedule, CouplingMatrix, RegionParams, Trajectory

__all__ = [
    "prehistory_depth",
    "step_single",
    "simulate_single",
    "simulate_multi",
    "active_infectious",
    "hospitalized",
    "hospitalized_series",
    "cumulative_cases",
    "cumulative_deaths",
    "cumulative_infections",
    "reproduction_number",
    "hosp_rate",
    "observables",
]


@numba.njit(cache=True)
def _propagate(x, start, w, beta, taus, d, first):
    # x is indexed by day - start; fills x(first .. first + len(taus) - 1)
    for k in range(taus.shape[0]):
        t = first + k
        base = t - 1 - d - start
        s = 0.0
        for i in range(taus[k]):
            s += w[i] * x[base - i]
        x[t - start] = beta * s
    return x


@numba.njit(cache=True)
def _propagate_multi(x, start, w, beta, taus, d, first):
    # x: (m, days); w: (m, max_tau); beta[i, r] from i into r; taus: (m, steps)
    m = x.shape[0]
    active = np.empty(m)
    for k in range(taus.shape[1]):
        t = first + k
        for i in range(m):
            base = t - 1 - d[i] - start
            s = 0.0
            for j in range(taus[i, k]):
                s += w[i, j] * x[i, base - j]
            active[i] = s
        for r in range(m):
            acc = 0.0
            for i in range(m):
                acc += beta[i, r] * active[i]
            x[r, t - start] = acc
    return x


def prehistory_depth(params: RegionParams, tau_max: int) -> int:
    """Prehistory days needed so every lag in the dynamics and observables exists."""
    return params.latent_d + max(params.sigma, tau_max, params.kernel.max_lag) + 1


def _check_tau(tau, tau_min=1, tau_max=None):
    if int(tau) != tau or tau < max(1, tau_min) or (tau_max is not None and tau > tau_max):
        hi = "inf" if tau_max is None else tau_max
        raise ValueError(f"isolation time {tau!r} outside [{max(1, tau_min)}, {hi}]")
    return int(tau)


def _lagged(traj: Trajectory, t: int, d: int, first_lag: int, last_lag: int) -> np.ndarray:
    """x(t - d - i) for i = first_lag..last_lag."""
    lo, hi = t - d - last_lag, t - d - first_lag
    if lo < traj.start or hi > traj.end:
        raise ValueError(
            f"history [{traj.start}, {traj.end}] too short for lags {first_lag}..{last_lag} at day {t} (d={d})"
        )
    return traj.window(lo, hi)[::-1]


def active_infectious(traj: Trajectory, params: RegionParams, tau: int, t: int) -> float:
    """Not-yet-isolated infectious cases ``I_a(t)``."""
    tau = _check_tau(tau)
    w = params.kernel.survival(params.alpha, tau)
    return float(np.dot(w, _lagged(traj, t, params.latent_d, 0, tau - 1)))


def step_single(
    history: Trajectory,
    params: RegionParams,
    beta: float,
    tau: int,
    t: int,
    tau_min: int = 1,
    tau_max: int | None = None,
) -> float:
    """New cases ``x(t + 1)`` from the history up to day ``t``."""
    tau = _check_tau(tau, tau_min, tau_max)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    w = params.kernel.survival(params.alpha, tau)
    x = _lagged(history, t, params.latent_d, 0, tau - 1)
    s = 0.0
    for wi, xi in zip(w, x):
        s += wi * xi
    return beta * s


def _horizon(horizon) -> int:
    if np.ndim(horizon) == 0:
        T = int(horizon)
    else:
        first, T = (int(v) for v in horizon)
        if first != 1:
            raise ValueError("simulation horizon must start at day 1")
    if T < 1:
        raise ValueError("horizon must be at least one day")
    return T


def simulate_single(
    params: RegionParams,
    beta: float,
    control: ControlSchedule,
    x0: float,
    horizon,
    convention: str = "constant",
    region: str = "region",
) -> Trajectory:
    """Trajectory on days ``1..T`` (``horizon`` is ``T`` or ``(1, T)``)."""
    T = _horizon(horizon)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    taus = control.daily(1, T)
    depth = prehistory_depth(params, control.tau_max)
    x = np.zeros(depth + T)
    x[:depth] = Trajectory.prehistory(x0, depth, convention)
    w = params.kernel.survival(params.alpha, control.tau_max)
    _propagate(x, 1 - depth, w, float(beta), taus, params.latent_d, 1)
    return Trajectory(x, 1 - depth, x0=x0, convention=convention, region=region)


def simulate_multi(
    params: Sequence[RegionParams],
    coupling: CouplingMatrix,
    controls: Sequence[ControlSchedule],
    x0: Sequence[float],
    horizon,
    convention: str = "constant",
    regions: Sequence[str] | None = None,
) -> list[Trajectory]:
    """Coupled regions; ``coupling.beta[i, r]`` feeds region i's active cases into r."""
    m = coupling.m
    if not (len(params) == len(controls) == len(x0) == m):
        raise ValueError(
            f"dimension mismatch: coupling is {m}x{m} but got {len(params)} params, "
            f"{len(controls)} controls, {len(x0)} seeds"
        )
    regions = list(regions) if regions is not None else [f"region{r + 1}" for r in range(m)]
    T = _horizon(horizon)
    tau_max = max(c.tau_max for c in controls)
    depth = max(prehistory_depth(p, tau_max) for p in params)
    x = np.zeros((m, depth + T))
    for r in range(m):
        x[r, :depth] = Trajectory.prehistory(x0[r], depth, convention)
    taus = np.stack([c.daily(1, T) for c in controls])
    w = np.stack([p.kernel.survival(p.alpha, tau_max) for p in params])
    d = np.array([p.latent_d for p in params], dtype=np.int64)
    _propagate_multi(x, 1 - depth, w, coupling.beta, taus, d, 1)
    return [
        Trajectory(x[r], 1 - depth, x0=x0[r], convention=convention, region=regions[r]) for r in range(m)
    ]


def hospitalized(traj: Trajectory, params: RegionParams, tau: int, t: int) -> float:
    """Isolated cases on day ``t``: lags ``tau..sigma`` of the surviving cohorts."""
    tau = _check_tau(tau)
    if tau > params.sigma:
        raise ValueError(f"tau={tau} exceeds sigma={params.sigma}: hospital window is empty")
    w = params.kernel.survival(params.alpha, params.sigma + 1)[tau:]
    return float(np.dot(w, _lagged(traj, t, params.latent_d, tau, params.sigma)))


def hospitalized_series(traj: Trajectory, params: RegionParams, control: ControlSchedule, first: int, last: int):
    """h(t) for t = first..last with tau(t) from the control."""
    return np.array([hospitalized(traj, params, control(t), t) for t in range(first, last + 1)])


def _days(t):
    arr = np.asarray(t)
    if arr.dtype.kind not in "iu" and not np.all(np.mod(arr, 1) == 0):
        raise ValueError("days must be integers")
    return arr.astype(np.int64)


def cumulative_cases(traj: Trajectory, d: int, t):
    """Reported cumulative cases ``C(t) = sum_{s=0}^{t-1} x(s - d)``; ``t`` scalar or array."""
    days = _days(t)
    if np.any(days < 0):
        raise ValueError("cumulative series are defined for t >= 0")
    tmax = int(days.max()) if days.size else 0
    if tmax > 0 and (-d < traj.start or tmax - 1 - d > traj.end):
        raise ValueError(f"trajectory [{traj.start}, {traj.end}] too short for C({tmax}) with d={d}")
    daily = traj.window(-d, tmax - 1 - d) if tmax > 0 else np.zeros(0)
    csum = np.concatenate([[0.0], np.cumsum(daily)])
    out = csum[days]
    return float(out) if out.ndim == 0 else out


def _daily_deaths(traj: Trajectory, params: RegionParams, tmax: int) -> np.ndarray:
    """alpha * sum_i omega_p(i) x(s - d - i) for s = 0..tmax-1."""
    n, d = params.kernel.max_lag, params.latent_d
    if tmax <= 0:
        return np.zeros(0)
    lo = -d - n
    if lo < traj.start or tmax - 1 - d > traj.end:
        raise ValueError(f"trajectory [{traj.start}, {traj.end}] too short for D({tmax}) with d={d}, n={n}")
    src = traj.window(lo, tmax - 1 - d)
    return params.alpha * np.convolve(src, params.kernel.pdf_table, mode="valid")


def cumulative_deaths(traj: Trajectory, params: RegionParams, t):
    """``D(t) = sum_{s=0}^{t-1} sum_{i=0}^{n} alpha omega_p(i) x(s - d - i)``."""
    days = _days(t)
    if np.any(days < 0):
        raise ValueError("cumulative series are defined for t >= 0")
    tmax = int(days.max()) if days.size else 0
    csum = np.concatenate([[0.0], np.cumsum(_daily_deaths(traj, params, tmax))])
    out = csum[days]
    return float(out) if out.ndim == 0 else out


def cumulative_infections(traj: Trajectory, t):
    """Infections generated on days ``1..t`` (no reporting lag)."""
    days = _days(t)
    if np.any(days < 0) or np.any(days > traj.end):
        raise ValueError(f"days must lie in [0, {traj.end}]")
    csum = np.concatenate([[0.0], np.cumsum(traj.future())])
    out = csum[days]
    return float(out) if out.ndim == 0 else out


def reproduction_number(alpha: float, beta: float, tau: int, kernel: GammaKernel) -> float:
    """Stationary growth factor ``beta * (tau - alpha * sum_{i<tau} omega(i))``."""
    tau = _check_tau(tau)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return float(beta * (tau - alpha * kernel.omega_upto(tau).sum()))


def hosp_rate(h, beds):
    """Occupancy ``h / beds``."""
    beds_arr = np.asarray(beds, dtype=float)
    if np.any(beds_arr <= 0):
        raise ValueError("bed capacity must be positive on every day")
    out = np.asarray(h, dtype=float) / beds_arr
    return float(out) if out.ndim == 0 else out


def observables(traj: Trajectory, params: RegionParams, beta: float, control: ControlSchedule, T: int, beds=None):
    """Daily series on days ``1..T`` keyed by name.

    ``beds`` (a BedPlan) adds occupancy; hospitalized counts need
    ``tau(t) <= sigma`` everywhere.
    """
    days = np.arange(1, T + 1)
    taus = control.daily(1, T)
    out = {
        "day": days,
        "tau": taus,
        "x": traj.window(1, T).copy(),
        "C": cumulative_cases(traj, params.latent_d, days),
        "D": cumulative_deaths(traj, params, days),
        "I_a": np.array([active_infectious(traj, params, tau, t) for t, tau in zip(days, taus)]),
        "h": np.array([hospitalized(traj, params, tau, t) for t, tau in zip(days, taus)]),
    }
    if beds is not None:
        out["beds"] = beds.daily(1, T)
        out["occupancy"] = hosp_rate(out["h"], out["beds"])
    return out
