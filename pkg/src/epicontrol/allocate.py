"""Distribute bed tranches across regions.

Beds do not feed back into the dynamics, so the hospitalized counts
``h_r(t)`` and final cases are computed once per problem and every candidate
split is a cheap function of the share matrix ``S`` (``S[r, i]`` is the
fraction of tranche ``i`` sent to region ``r``; each column sums to one).
With two regions ``lambda = S[0]``.

The penalty ``K * sum_t h/b`` is convex in ``S``, so projected gradient
descent plus a Frank-Wolfe duality gap gives a certified optimum.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .model import BedPlan, ControlSchedule, CostModel, CouplingMatrix, RegionParams
from .simulate import cumulative_cases, hospitalized_series, simulate_multi

__all__ = [
    "AllocationProblem",
    "AllocationSolution",
    "FeasibilityReport",
    "InfeasibleProblemError",
    "objective",
    "feasible",
    "cost_constraint",
    "solve",
    "grid_oracle",
    "project_simplex",
]

log = logging.getLogger(__name__)

CERT_TOL = 1e-6
TIE_RTOL = 1e-12
MAX_ORACLE_POINTS = 5_000_000


class InfeasibleProblemError(ValueError):
    """No allocation satisfies the daily budget."""


@dataclass(frozen=True)
class AllocationProblem:
    """Bed-splitting problem over the window ``[window[0], window[1]]``.

    ``costs`` switches on the daily budget constraint.
    """

    params: Sequence[RegionParams]
    coupling: CouplingMatrix
    controls: Sequence[ControlSchedule]
    x0: Sequence[float]
    base_beds: Sequence[float]
    tranche_days: Sequence[int]
    tranche_sizes: Sequence[float]
    K: float
    window: tuple
    costs: CostModel | None = None
    convention: str = "constant"
    regions: Sequence[str] | None = None

    def __post_init__(self):
        m = self.coupling.m
        errors = []
        if not (len(self.params) == len(self.controls) == len(self.x0) == len(self.base_beds) == m):
            errors.append(f"every per-region list must have {m} entries")
        if len(self.tranche_days) < 1:
            errors.append("need at least one tranche")
        if len(self.tranche_days) != len(self.tranche_sizes):
            errors.append("tranche_days and tranche_sizes differ in length")
        if any(s < 0 for s in self.tranche_sizes):
            errors.append("tranche sizes must be non-negative")
        if any(b < 0 for b in self.base_beds):
            errors.append("base beds must be non-negative")
        if self.K < 0:
            errors.append("K must be non-negative")
        first, last = (int(v) for v in self.window)
        if first < 1 or last < first:
            errors.append(f"degenerate planning window {self.window}")
        if errors:
            raise ValueError("; ".join(errors))
        object.__setattr__(self, "window", (first, last))
        names = list(self.regions) if self.regions is not None else [f"region{r + 1}" for r in range(m)]
        object.__setattr__(self, "regions", tuple(names))

    @property
    def m(self) -> int:
        return self.coupling.m

    @property
    def q(self) -> int:
        return len(self.tranche_days)

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    @cached_property
    def trajectories(self):
        return simulate_multi(
            self.params, self.coupling, self.controls, self.x0, self.window[1], self.convention, self.regions
        )

    @cached_property
    def hosp(self) -> np.ndarray:
        """h_r(t) on the window, shape (m, days)."""
        first, last = self.window
        h = np.array([
            hospitalized_series(traj, p, c, first, last)
            for traj, p, c in zip(self.trajectories, self.params, self.controls)
        ])
        h.setflags(write=False)
        return h

    @cached_property
    def hosp_before(self) -> np.ndarray:
        """h_r on the day before the window, for backward differences."""
        day = self.window[0] - 1
        if day < 1:
            return np.zeros(self.m)
        return np.array([
            hospitalized_series(traj, p, c, day, day)[0]
            for traj, p, c in zip(self.trajectories, self.params, self.controls)
        ])

    @cached_property
    def final_new_cases(self) -> np.ndarray:
        """x_r(T)."""
        return np.array([traj(self.window[1]) for traj in self.trajectories])

    @cached_property
    def final_cumulative(self) -> np.ndarray:
        T = self.window[1]
        return np.array([cumulative_cases(traj, p.latent_d, T) for traj, p in zip(self.trajectories, self.params)])

    @cached_property
    def membership(self) -> np.ndarray:
        """1 where tranche i is open on window day t, shape (days, q)."""
        return (np.asarray(self.tranche_days)[None, :] <= self.days[:, None]).astype(float)

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.tranche_sizes, dtype=float)

    def shares(self, split) -> np.ndarray:
        """Share matrix from a two-region ``lambda`` vector or an (m, q) matrix."""
        arr = np.asarray(split, dtype=float)
        if arr.ndim == 1:
            if self.m != 2:
                raise ValueError("a lambda vector only describes two-region splits")
            arr = np.vstack([arr, 1.0 - arr])
        if arr.shape != (self.m, self.q):
            raise ValueError(f"shares must have shape ({self.m}, {self.q}), got {arr.shape}")
        if np.any(arr < -1e-12) or np.any(np.abs(arr.sum(axis=0) - 1.0) > 1e-9):
            raise ValueError("each tranche's shares must be non-negative and sum to 1")
        return arr

    def beds(self, S) -> np.ndarray:
        """b_r(t) on the window, shape (m, days)."""
        S = np.asarray(S, dtype=float)
        return np.asarray(self.base_beds, dtype=float)[:, None] + (S * self.sizes) @ self.membership.T

    def plans(self, S) -> list[BedPlan]:
        S = np.asarray(S, dtype=float)
        return [
            BedPlan(self.base_beds[r], tuple(self.tranche_days), tuple(S[r] * self.sizes), self.regions[r])
            for r in range(self.m)
        ]

    def penalty(self, S) -> float:
        """K * sum_r sum_t h_r(t) / b_r(t)."""
        b = self.beds(S)
        if np.any(b <= 0):
            raise ValueError("bed capacity must be positive on every window day")
        return float(self.K * np.sum(self.hosp / b))

    def value(self, S) -> float:
        return float(self.final_new_cases.sum()) + self.penalty(S)

    def gradient(self, S) -> np.ndarray:
        """d value / d S, shape (m, q)."""
        b = self.beds(S)
        return -self.K * ((self.hosp / b**2) @ self.membership) * self.sizes

    def lambda_gradient(self, lam) -> np.ndarray:
        """Gradient along ``lambda`` for two regions."""
        g = self.gradient(self.shares(lam))
        return g[0] - g[1]


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    occupancy_violations: list = field(default_factory=list)  # (region, day, h, beds)
    cost_violations: list = field(default_factory=list)  # (day, spend, budget)

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True)
class AllocationSolution:
    shares: np.ndarray
    plans: list
    objective: float
    final_new_cases: np.ndarray
    final_cumulative: np.ndarray
    occupancy_mean: np.ndarray
    occupancy_max: np.ndarray
    feasibility: FeasibilityReport
    certificate_gap: float
    regions: tuple = ()

    @property
    def feasible(self) -> bool:
        return self.feasibility.feasible

    @property
    def lambdas(self) -> np.ndarray:
        return self.shares[0]

    @property
    def split_beds(self) -> np.ndarray:
        """Beds of each tranche per region, shape (m, q)."""
        return np.array([plan.tranche_sizes for plan in self.plans])


def _plan_beds(problem: AllocationProblem, plans: Sequence[BedPlan]) -> np.ndarray:
    if len(plans) != problem.m:
        raise ValueError(f"expected {problem.m} plans, got {len(plans)}")
    first, last = problem.window
    return np.array([plan.daily(first, last) for plan in plans])


def objective(problem: AllocationProblem, plans: Sequence[BedPlan]) -> float:
    """sum_r x_r(T) + K * sum_t h_r(t) / b_r(t) over the window."""
    b = _plan_beds(problem, plans)
    if np.any(b <= 0):
        raise ValueError("bed capacity must be positive on every window day")
    return float(problem.final_new_cases.sum() + problem.K * np.sum(problem.hosp / b))


def cost_constraint(problem: AllocationProblem, plans: Sequence[BedPlan], t: int):
    """(satisfied, spend) on day ``t`` under the problem's cost model."""
    if problem.costs is None:
        raise ValueError("problem has no cost model")
    spend = _spend(problem, plans)
    k = int(t) - problem.window[0]
    if not 0 <= k < len(spend):
        raise ValueError(f"day {t} outside the planning window {problem.window}")
    budget = problem.costs.budget_on(problem.days)
    return bool(spend[k] <= budget[k]), float(spend[k])


def _spend(problem: AllocationProblem, plans: Sequence[BedPlan]) -> np.ndarray:
    c = problem.costs
    b = _plan_beds(problem, plans)
    prev = np.array([plan(problem.window[0] - 1) for plan in plans])
    new_beds = np.diff(np.concatenate([prev[:, None], b], axis=1), axis=1).sum(axis=0)
    h = problem.hosp
    dh = np.diff(np.concatenate([problem.hosp_before[:, None], h], axis=1), axis=1)
    return c.kappa_B * new_beds + (c.kappa_S * h + c.kappa_I * np.maximum(dh, 0.0)).sum(axis=0)


def feasible(problem: AllocationProblem, plans: Sequence[BedPlan]) -> FeasibilityReport:
    """Occupancy at most one everywhere, and the budget held if costs are set."""
    b = _plan_beds(problem, plans)
    h = problem.hosp
    occ = [
        (problem.regions[r], int(problem.days[k]), float(h[r, k]), float(b[r, k]))
        for r, k in zip(*np.nonzero(h > b))
    ]
    cost = []
    if problem.costs is not None:
        spend = _spend(problem, plans)
        budget = problem.costs.budget_on(problem.days)
        cost = [(int(problem.days[k]), float(spend[k]), float(budget[k])) for k in np.flatnonzero(spend > budget)]
    return FeasibilityReport(not occ and not cost, occ, cost)


def project_simplex(S: np.ndarray) -> np.ndarray:
    """Euclidean projection of every column onto the probability simplex."""
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    u = -np.sort(-S, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, m + 1)[:, None]
    cond = u - css / ind > 0
    rho = m - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(S.shape[1])] / (rho + 1)
    return np.maximum(S - theta, 0.0)


def frank_wolfe_gap(problem: AllocationProblem, S) -> float:
    """Upper bound on value(S) - optimum, by convexity."""
    g = problem.gradient(S)
    return float(np.sum(g * S) - np.sum(g.min(axis=0)))


def _safe_penalty(problem: AllocationProblem, S) -> float:
    # trial points with an empty region are simply rejected by the line search
    try:
        return problem.penalty(S)
    except ValueError:
        return np.inf


def _pgd(problem: AllocationProblem, S, max_iter=5_000, tol=1e-15, noise=1e-14):
    """Projected gradient with Barzilai-Borwein trial steps and halving."""
    f = _safe_penalty(problem, S)
    if not np.isfinite(f):
        return S, f
    g = problem.gradient(S)
    gnorm = np.abs(g).max()
    if gnorm == 0.0:
        return S, f
    step = 0.1 / gnorm
    for _ in range(max_iter):
        while True:
            cand = project_simplex(S - step * g)
            move = cand - S
            fc = _safe_penalty(problem, cand)
            # Armijo along the projected step, blind below round-off
            if fc <= f + 1e-4 * np.sum(g * move) + noise * abs(f) or step < 1e-300:
                break
            step *= 0.5
        if np.abs(move).max() <= tol:
            break
        gc = problem.gradient(cand)
        dg = gc - g
        curv = np.sum(move * dg)
        step = float(np.sum(move * move) / curv) if curv > 0 else 2.0 * step
        S, f, g = cand, fc, gc
    return S, f


def _polish(problem: AllocationProblem, S, f, h=0.01):
    """Accept strictly improving moves of size h between two regions' shares."""
    improved = True
    while improved:
        improved = False
        for i in range(problem.q):
            for src, dst in itertools.permutations(range(problem.m), 2):
                delta = min(h, S[src, i])
                if delta <= 0:
                    continue
                cand = S.copy()
                cand[src, i] -= delta
                cand[dst, i] += delta
                fc = _safe_penalty(problem, cand)
                if fc < f:
                    S, f, improved = cand, fc, True
    return S, f


def _starts(problem: AllocationProblem):
    m, q = problem.m, problem.q
    starts = [np.full((m, q), 1.0 / m)]
    for r in range(m):
        corner = np.zeros((m, q))
        corner[r] = 1.0
        starts.append(corner)
    for shift in range(m):
        alt = np.zeros((m, q))
        alt[(np.arange(q) + shift) % m, np.arange(q)] = 1.0
        starts.append(alt)
    unique = []
    for s in starts:
        if not any(np.array_equal(s, u) for u in unique):
            unique.append(s)
    return unique[:5]


def _pick(problem: AllocationProblem, candidates):
    """Lowest value; among ties the split closest to equal shares, then lexicographic."""
    best = min(f for _, f in candidates)
    tol = TIE_RTOL * max(abs(best), 1.0)
    tied = [(S, f) for S, f in candidates if f <= best + tol]
    center = 1.0 / problem.m
    return min(tied, key=lambda c: (round(float(np.abs(c[0] - center).sum()), 9), tuple(c[0].ravel())))


def solve(problem: AllocationProblem) -> AllocationSolution:
    """Certified optimal split (see module docstring)."""
    if problem.costs is not None:
        # the daily spend does not depend on the split, so one check decides
        probe = problem.plans(np.full((problem.m, problem.q), 1.0 / problem.m))
        report = feasible(problem, probe)
        if report.cost_violations:
            days = [d for d, _, _ in report.cost_violations]
            raise InfeasibleProblemError(f"daily budget exceeded on {len(days)} day(s), first {days[0]}")

    candidates = []
    for start in _starts(problem):
        S, f = _pgd(problem, start)
        if not np.isfinite(f):
            continue
        S, f = _polish(problem, S, f)
        S, f = _pgd(problem, S)
        candidates.append((S, problem.value(S)))
    if not candidates:
        raise ValueError("every start leaves some region without beds")
    S, _ = _pick(problem, candidates)
    gap = frank_wolfe_gap(problem, S)
    if gap > CERT_TOL:
        log.warning("allocation certificate gap %.3g exceeds %.1g", gap, CERT_TOL)
    return _solution(problem, S, gap)


def _solution(problem: AllocationProblem, S, gap) -> AllocationSolution:
    plans = problem.plans(S)
    occ = problem.hosp / _plan_beds(problem, plans)
    return AllocationSolution(
        shares=S,
        plans=plans,
        objective=objective(problem, plans),
        final_new_cases=problem.final_new_cases.copy(),
        final_cumulative=problem.final_cumulative.copy(),
        occupancy_mean=occ.mean(axis=1),
        occupancy_max=occ.max(axis=1),
        feasibility=feasible(problem, plans),
        certificate_gap=gap,
        regions=problem.regions,
    )


def evaluate_split(problem: AllocationProblem, split) -> AllocationSolution:
    """Solution record for a given split (no optimization)."""
    S = problem.shares(split)
    return _solution(problem, S, frank_wolfe_gap(problem, S))


def _compositions(m: int, steps: int) -> np.ndarray:
    """All m-part shares on the grid 1/steps, lexicographic."""
    pts = [c for c in itertools.product(range(steps + 1), repeat=m - 1) if sum(c) <= steps]
    return np.array([list(c) + [steps - sum(c)] for c in pts], dtype=float) / steps


def grid_oracle(problem: AllocationProblem, resolution: float = 0.05, chunk: int = 20_000):
    """Brute-force minimum over the share grid; returns (shares, value)."""
    steps = int(round(1.0 / resolution))
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise ValueError("resolution must divide 1")
    column = _compositions(problem.m, steps)  # (k, m)
    n_points = len(column) ** problem.q
    if n_points > MAX_ORACLE_POINTS:
        raise ValueError(f"grid has {n_points} points; coarsen the resolution")
    base = np.asarray(problem.base_beds, dtype=float)
    mem = problem.membership  # (days, q)
    h = problem.hosp
    const = problem.final_new_cases.sum()
    idx = np.array(list(itertools.product(range(len(column)), repeat=problem.q)))
    best_val, best_idx = np.inf, None
    for lo in range(0, len(idx), chunk):
        block = idx[lo : lo + chunk]  # (n, q)
        shares = column[block]  # (n, q, m)
        beds = base[None, :, None] + np.einsum("nqm,q,tq->nmt", shares, problem.sizes, mem)
        with np.errstate(divide="ignore"):
            pen = np.where(beds > 0, h[None] / np.where(beds > 0, beds, 1.0), np.where(h[None] > 0, np.inf, 0.0))
        vals = const + problem.K * pen.sum(axis=(1, 2))
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_idx = float(vals[k]), block[k]
    S = column[best_idx].T
    return S, problem.value(S) if np.all(problem.beds(S) > 0) else best_val
