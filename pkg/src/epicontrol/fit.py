"""Estimate alpha, beta and a piecewise-constant isolation schedule from
cumulative case and death counts.

Every tuple of interval isolation times is enumerated (or refined
coordinate-wise when the tuple space is too large); for each tuple the two
continuous parameters are found by multistart Nelder-Mead.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .kernel import DEFAULT_GAMMA, GammaKernel, GammaParams, build_kernel
from .model import ControlSchedule, RegionParams, Trajectory
from .simulate import (
    _propagate,
    cumulative_cases,
    cumulative_deaths,
    prehistory_depth,
    reproduction_number,
    simulate_single,
)

__all__ = [
    "ObservedSeries",
    "FitSpec",
    "FitResult",
    "fit_loss",
    "fit",
    "synthesize",
    "IsolationScheduleFitter",
]

log = logging.getLogger(__name__)

MAX_ENUMERATION = 10_000


@dataclass(frozen=True)
class ObservedSeries:
    """Cumulative cases and deaths on integer day indices (day 0 = first report)."""

    days: np.ndarray
    cases: np.ndarray
    deaths: np.ndarray

    def __post_init__(self):
        days = np.asarray(self.days)
        if days.size and not np.all(np.mod(days, 1) == 0):
            raise ValueError("observation days must be integers")
        days = days.astype(np.int64)
        cases = np.asarray(self.cases, dtype=float)
        deaths = np.asarray(self.deaths, dtype=float)
        if not (days.ndim == cases.ndim == deaths.ndim == 1):
            raise ValueError("observed series must be one-dimensional")
        if not (len(days) == len(cases) == len(deaths)):
            raise ValueError("days, cases and deaths must have the same length")
        if np.any(days < 0) or np.any(np.diff(days) <= 0):
            raise ValueError("observation days must be non-negative and strictly increasing")
        if np.any(cases < 0) or np.any(deaths < 0) or not (np.all(np.isfinite(cases)) and np.all(np.isfinite(deaths))):
            raise ValueError("observed counts must be finite and non-negative")
        for name, arr in (("days", days), ("cases", cases), ("deaths", deaths)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.days)

    def monotonicity_violations(self) -> list[tuple[int, str]]:
        """(row index, column) where a cumulative count decreases."""
        bad = []
        for col in ("cases", "deaths"):
            arr = getattr(self, col)
            bad.extend((int(i) + 1, col) for i in np.flatnonzero(np.diff(arr) < 0))
        return sorted(bad)


@dataclass(frozen=True)
class FitSpec:
    """Search space and model settings for ``fit``.

    ``breakpoints`` delimit the isolation-time intervals on the observation
    day axis; they must cover days ``1 .. last observed day``.
    """

    breakpoints: tuple
    tau_min: int = 3
    tau_max: int = 5
    alpha_bounds: tuple = (0.0, 1.0)
    beta_bounds: tuple = (0.05, 0.6)
    x0: float = 1.0
    latent_d: int = 7
    kernel: GammaKernel = field(default_factory=build_kernel, repr=False)
    convention: str = "constant"
    n_starts: int = 16
    xatol: float = 1e-6
    max_enumeration: int = MAX_ENUMERATION

    def __post_init__(self):
        bps = tuple(int(b) for b in self.breakpoints)
        if len(bps) < 2 or any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError(f"breakpoints must be strictly increasing with at least one interval, got {bps}")
        object.__setattr__(self, "breakpoints", bps)
        if not 1 <= self.tau_min <= self.tau_max:
            raise ValueError("need 1 <= tau_min <= tau_max")
        for name in ("alpha_bounds", "beta_bounds"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not (0.0 <= self.alpha_bounds[0] and self.alpha_bounds[1] <= 1.0):
            raise ValueError("alpha bounds must lie within [0, 1]")
        if self.beta_bounds[0] < 0:
            raise ValueError("beta bounds must be non-negative")
        if self.x0 < 0:
            raise ValueError("x0 must be non-negative")
        if self.n_starts < 1:
            raise ValueError("n_starts must be positive")

    @property
    def n_intervals(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def tau_domain(self) -> range:
        return range(self.tau_min, self.tau_max + 1)

    def region(self, alpha: float) -> RegionParams:
        # sigma only matters for hospital counts; keep it out of the way
        return RegionParams(alpha=alpha, latent_d=self.latent_d, sigma=max(self.tau_max, 1), kernel=self.kernel)

    def schedule(self, taus) -> ControlSchedule:
        return ControlSchedule(self.breakpoints, tuple(taus), self.tau_min, self.tau_max)

    def starts(self) -> np.ndarray:
        """Stratified uniform starts over the (alpha, beta) box."""
        k = int(np.ceil(np.sqrt(self.n_starts)))
        grid = (np.arange(k) + 0.5) / k
        (alo, ahi), (blo, bhi) = self.alpha_bounds, self.beta_bounds
        pts = [(alo + ga * (ahi - alo), blo + gb * (bhi - blo)) for ga in grid for gb in grid]
        return np.array(pts[: self.n_starts])


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    taus: tuple
    reproduction_numbers: tuple
    loss: float
    days: np.ndarray = field(repr=False)
    cases_fit: np.ndarray = field(repr=False)
    deaths_fit: np.ndarray = field(repr=False)
    evaluations: int = 0
    tuple_losses: dict = field(default_factory=dict, repr=False)


def _check_coverage(spec: FitSpec, obs: ObservedSeries):
    if len(obs) == 0:
        raise ValueError("no observations to fit")
    last = int(obs.days[-1])
    if spec.breakpoints[0] > 0 or spec.breakpoints[-1] < max(last, 1):
        raise ValueError(
            f"fit intervals ({spec.breakpoints[0]}, {spec.breakpoints[-1]}] must cover observed days 1..{last}"
        )


def _scales(obs: ObservedSeries):
    c = float(obs.cases.max()) if len(obs) else 0.0
    d = float(obs.deaths.max()) if len(obs) else 0.0
    return (c if c > 0 else 1.0), (d if d > 0 else 1.0)


def model_series(alpha, beta, taus, spec: FitSpec, days):
    """Model C(t), D(t) on the given days (reference path through ``simulate``)."""
    days = np.asarray(days, dtype=np.int64)
    T = max(int(days.max()), 1)
    params = spec.region(alpha)
    traj = simulate_single(params, beta, spec.schedule(taus), spec.x0, T, spec.convention)
    return cumulative_cases(traj, params.latent_d, days), cumulative_deaths(traj, params, days)


def fit_loss(candidate, spec: FitSpec, obs: ObservedSeries) -> float:
    """Normalized squared error on both cumulative series.

    ``candidate`` is ``(alpha, beta, taus)``.
    """
    alpha, beta, taus = candidate
    (alo, ahi), (blo, bhi) = spec.alpha_bounds, spec.beta_bounds
    if not (alo <= alpha <= ahi and blo <= beta <= bhi):
        raise ValueError(f"candidate ({alpha}, {beta}) outside the search box")
    if len(taus) != spec.n_intervals:
        raise ValueError(f"expected {spec.n_intervals} isolation times, got {len(taus)}")
    _check_coverage(spec, obs)
    c_model, d_model = model_series(alpha, beta, taus, spec, obs.days)
    c_scale, d_scale = _scales(obs)
    return float(np.sum(((c_model - obs.cases) / c_scale) ** 2) + np.sum(((d_model - obs.deaths) / d_scale) ** 2))


@numba.njit(cache=True)
def _fast_loss(alpha, beta, omega, pdf, taus, d, seed, days, cases, deaths, c_scale, d_scale):
    depth = seed.shape[0]
    T = taus.shape[0]
    x = np.empty(depth + T)
    x[:depth] = seed
    x[depth:] = 0.0
    w = 1.0 - alpha * omega
    start = 1 - depth
    _propagate(x, start, w, beta, taus, d, 1)
    n = pdf.shape[0]
    loss = 0.0
    c_cum = 0.0
    d_cum = 0.0
    k = 0
    nobs = days.shape[0]
    s = 0
    while k < nobs:
        # C(t) and D(t) sum daily terms for s < t
        while s < days[k]:
            idx = s - d - start
            c_cum += x[idx]
            acc = 0.0
            for i in range(n):
                acc += pdf[i] * x[idx - i]
            d_cum += alpha * acc
            s += 1
        rc = (c_cum - cases[k]) / c_scale
        rd = (d_cum - deaths[k]) / d_scale
        loss += rc * rc + rd * rd
        k += 1
    return loss


class _Objective:
    """Fast loss for one observed series; tracks the best point it has seen."""

    def __init__(self, spec: FitSpec, obs: ObservedSeries):
        _check_coverage(spec, obs)
        self.spec = spec
        self.obs = obs
        self.T = max(int(obs.days[-1]), 1)
        probe = spec.region(0.0)
        self.depth = prehistory_depth(probe, spec.tau_max)
        self.seed = Trajectory.prehistory(spec.x0, self.depth, spec.convention)
        self.omega = spec.kernel.omega_upto(spec.tau_max)
        self.pdf = np.array(spec.kernel.pdf_table)
        self.c_scale, self.d_scale = _scales(obs)
        self.evaluations = 0

    def daily_taus(self, taus) -> np.ndarray:
        return self.spec.schedule(taus).daily(1, self.T)

    def __call__(self, alpha, beta, daily_taus) -> float:
        self.evaluations += 1
        return _fast_loss(
            float(alpha), float(beta), self.omega, self.pdf, daily_taus, self.spec.latent_d, self.seed,
            self.obs.days, self.obs.cases, self.obs.deaths, self.c_scale, self.d_scale,
        )


def _initial_simplex(start, lo, hi):
    width = hi - lo
    simplex = [start.copy()]
    for k in range(2):
        v = start.copy()
        step = 0.1 * width[k] if width[k] > 0 else 1e-3
        v[k] = v[k] + step if v[k] + step <= hi[k] else v[k] - step
        simplex.append(v)
    return np.array(simplex)


def _fit_continuous(objective: _Objective, taus):
    """Best (loss, alpha, beta) over the multistart descent for one tuple."""
    spec = objective.spec
    daily = objective.daily_taus(taus)
    lo = np.array([spec.alpha_bounds[0], spec.beta_bounds[0]])
    hi = np.array([spec.alpha_bounds[1], spec.beta_bounds[1]])
    best = [np.inf, np.nan, np.nan]

    def f(p):
        a, b = np.clip(p, lo, hi)
        val = objective(a, b, daily)
        if val < best[0]:
            best[:] = [val, a, b]
        return val

    for start in spec.starts():
        if np.all(hi == lo):
            f(lo)
            break
        minimize(
            f, start, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"xatol": spec.xatol, "fatol": np.inf, "initial_simplex": _initial_simplex(start, lo, hi),
                     "maxiter": 4000, "maxfev": 8000},
        )
    return best[0], float(best[1]), float(best[2])


def _coordinate_search(objective: _Objective, results: dict):
    spec = objective.spec
    current = (spec.tau_min,) * spec.n_intervals
    results[current] = _fit_continuous(objective, current)
    improved = True
    while improved:
        improved = False
        for j in range(spec.n_intervals):
            for tau in spec.tau_domain:
                cand = current[:j] + (tau,) + current[j + 1 :]
                if cand not in results:
                    results[cand] = _fit_continuous(objective, cand)
                if results[cand][0] < results[current][0]:
                    current = cand
                    improved = True


def fit(obs: ObservedSeries, spec: FitSpec) -> FitResult:
    """Best (alpha, beta, tau-schedule) for the observed series."""
    if len(obs) == 0:
        raise ValueError("no observations to fit")
    objective = _Objective(spec, obs)
    results: dict = {}
    n_tuples = len(spec.tau_domain) ** spec.n_intervals
    if n_tuples <= spec.max_enumeration:
        for taus in itertools.product(spec.tau_domain, repeat=spec.n_intervals):
            results[taus] = _fit_continuous(objective, taus)
    else:
        log.info("%d isolation-time tuples exceed %d; refining coordinate-wise", n_tuples, spec.max_enumeration)
        _coordinate_search(objective, results)

    # lexicographic tie-break: first tuple wins on equal loss
    best_taus = min(sorted(results), key=lambda k: results[k][0])
    loss, alpha, beta = results[best_taus]
    c_fit, d_fit = model_series(alpha, beta, best_taus, spec, obs.days)
    r_k = tuple(reproduction_number(alpha, beta, tau, spec.kernel) for tau in best_taus)
    return FitResult(
        alpha=alpha, beta=beta, taus=tuple(best_taus), reproduction_numbers=r_k, loss=loss,
        days=np.array(obs.days), cases_fit=c_fit, deaths_fit=d_fit,
        evaluations=objective.evaluations, tuple_losses={k: v[0] for k, v in results.items()},
    )


def synthesize(alpha, beta, taus, spec: FitSpec, days, noise=0.0, rng=None) -> ObservedSeries:
    """Cumulative series generated by the model itself.

    ``noise`` multiplies each daily increment by ``1 + noise * N(0, 1)``
    (clipped at zero) so the series stay non-decreasing.
    """
    days = np.asarray(days, dtype=np.int64)
    cases, deaths = model_series(alpha, beta, taus, spec, days)
    if noise:
        rng = np.random.default_rng(rng)
        out = []
        for series in (cases, deaths):
            inc = np.diff(np.concatenate([[0.0], series]))
            inc = inc * np.clip(1.0 + noise * rng.standard_normal(inc.shape), 0.0, None)
            out.append(np.cumsum(inc))
        cases, deaths = out
    return ObservedSeries(days, cases, deaths)


def _as_series(X) -> ObservedSeries:
    if isinstance(X, ObservedSeries):
        return X
    arr = check_array(X, ensure_min_samples=1)
    if arr.shape[1] != 3:
        raise ValueError("expected columns (day, cumulative cases, cumulative deaths)")
    return ObservedSeries(arr[:, 0], arr[:, 1], arr[:, 2])


class IsolationScheduleFitter(BaseEstimator):
    """Estimator wrapper around ``fit``.

    ``fit(X)`` takes an ``ObservedSeries`` or an ``(n, 3)`` array of
    ``(day, cumulative cases, cumulative deaths)``; ``predict(days)`` returns an ``(n, 2)`` array of
    the fitted ``C`` and ``D`` columns.
    """

    def __init__(
        self,
        breakpoints=(0, 50, 100),
        tau_min=3,
        tau_max=5,
        alpha_bounds=(0.0, 1.0),
        beta_bounds=(0.05, 0.6),
        x0=1.0,
        latent_d=7,
        gamma_shape=DEFAULT_GAMMA.shape,
        gamma_rate=DEFAULT_GAMMA.rate,
        max_lag=35,
        discretization="cumulative",
        convention="constant",
        n_starts=16,
        xatol=1e-6,
    ):
        self.breakpoints = breakpoints
        self.tau_min = tau_min
        self.tau_max = tau_max
        self.alpha_bounds = alpha_bounds
        self.beta_bounds = beta_bounds
        self.x0 = x0
        self.latent_d = latent_d
        self.gamma_shape = gamma_shape
        self.gamma_rate = gamma_rate
        self.max_lag = max_lag
        self.discretization = discretization
        self.convention = convention
        self.n_starts = n_starts
        self.xatol = xatol

    def _spec(self) -> FitSpec:
        kernel = build_kernel(GammaParams(self.gamma_shape, self.gamma_rate), self.max_lag, self.discretization)
        return FitSpec(
            breakpoints=tuple(self.breakpoints), tau_min=self.tau_min, tau_max=self.tau_max,
            alpha_bounds=tuple(self.alpha_bounds), beta_bounds=tuple(self.beta_bounds), x0=self.x0,
            latent_d=self.latent_d, kernel=kernel, convention=self.convention, n_starts=self.n_starts,
            xatol=self.xatol,
        )

    def fit(self, X, y=None):
        obs = _as_series(X)
        spec = self._spec()
        self.result_ = fit(obs, spec)
        self.spec_ = spec
        self.alpha_ = self.result_.alpha
        self.beta_ = self.result_.beta
        self.taus_ = self.result_.taus
        self.reproduction_numbers_ = self.result_.reproduction_numbers
        self.loss_ = self.result_.loss
        return self

    def predict(self, days):
        check_is_fitted(self, "result_")
        days = np.asarray(days)
        if days.ndim == 2:
            days = days[:, 0]
        c, d = model_series(self.alpha_, self.beta_, self.taus_, self.spec_, days)
        return np.column_stack([c, d])

    def score(self, X, y=None):
        """Negative fit loss on ``X`` (higher is better)."""
        check_is_fitted(self, "result_")
        obs = _as_series(X)
        return -fit_loss((self.alpha_, self.beta_, self.taus_), self.spec_, obs)
