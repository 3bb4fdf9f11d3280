import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import random_problem, two_region_problem
from epicontrol.allocate import (
    AllocationProblem,
    InfeasibleProblemError,
    cost_constraint,
    evaluate_split,
    feasible,
    frank_wolfe_gap,
    grid_oracle,
    objective,
    project_simplex,
    solve,
)
from epicontrol.kernel import build_kernel
from epicontrol.model import BedPlan, ControlSchedule, CostModel, CouplingMatrix, RegionParams


@pytest.fixture(scope="module")
def case1():
    return two_region_problem(3, 3)


def single_tranche(x0=(2.0, 2.0), betas=(0.3, 0.3), base=(50.0, 50.0)):
    k = build_kernel()
    params = [RegionParams(0.6, 6, 6, k)] * 2
    controls = [ControlSchedule((0, 60, 100), (4, 3), tau_max=6)] * 2
    return AllocationProblem(params, CouplingMatrix.diagonal(betas), controls, list(x0), list(base), [70], [200.0],
                             50.0, (61, 100))


def test_problem_validation():
    p = two_region_problem()
    kw = dict(params=p.params, coupling=p.coupling, controls=p.controls, x0=p.x0, base_beds=p.base_beds,
              tranche_days=p.tranche_days, tranche_sizes=p.tranche_sizes, K=p.K, window=p.window)
    for bad in ({"K": -1}, {"window": (50, 40)}, {"tranche_days": []}, {"tranche_sizes": [1, 2, 3, -4]},
                {"base_beds": [1.0]}, {"window": (0, 10)}):
        with pytest.raises(ValueError):
            AllocationProblem(**{**kw, **bad})


def test_objective_k0_is_plan_independent():
    p = two_region_problem(K=0.0)
    vals = [objective(p, p.plans(p.shares(np.full(4, lam)))) for lam in (0.0, 0.3, 1.0)]
    assert vals[0] == vals[1] == vals[2] == pytest.approx(p.final_new_cases.sum(), rel=1e-15)


def test_doubling_beds_halves_penalty(case1):
    plans = case1.plans(case1.shares([0.5, 0.6, 0.7, 1.0]))
    doubled = [BedPlan(2 * pl.base, pl.tranche_days, tuple(2 * s for s in pl.tranche_sizes)) for pl in plans]
    const = case1.final_new_cases.sum()
    assert objective(case1, doubled) - const == pytest.approx((objective(case1, plans) - const) / 2, rel=1e-12)


def test_objective_rejects_empty_region():
    p = two_region_problem()
    zero = AllocationProblem(p.params, p.coupling, p.controls, p.x0, [0.0, 60.0], p.tranche_days,
                             p.tranche_sizes, p.K, p.window)
    with pytest.raises(ValueError, match="positive"):
        objective(zero, zero.plans(zero.shares(np.zeros(4))))


def test_objective_matches_hand_sum(case1):
    lam = np.array([0.55, 0.6, 0.75, 1.0])
    plans = case1.plans(case1.shares(lam))
    total = 0.0
    for r, plan in enumerate(plans):
        total += case1.trajectories[r](150)
        for k, t in enumerate(range(101, 151)):
            total += 100 * case1.hosp[r, k] / plan(t)
    assert objective(case1, plans) == pytest.approx(total, rel=1e-12)


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(1)
    errs = []
    for k in range(50):
        p = two_region_problem(*rng.integers(3, 6, 2)) if k < 10 else random_problem(rng)
        lam = rng.uniform(0.02, 0.98, p.q)
        g = p.lambda_gradient(lam)
        h = 1e-5
        fd = np.array([(p.value(p.shares(lam + h * e)) - p.value(p.shares(lam - h * e))) / (2 * h)
                       for e in np.eye(p.q)])
        scale = np.maximum(np.abs(g), 1e-8 * max(1.0, p.value(p.shares(lam))))
        errs.append(np.max(np.abs(fd - g) / scale))
    assert max(errs) < 1e-5


def test_convexity_midpoints():
    rng = np.random.default_rng(2)
    p = two_region_problem(4, 5)
    for _ in range(100):
        a, b = rng.uniform(0, 1, 4), rng.uniform(0, 1, 4)
        fa, fb = p.value(p.shares(a)), p.value(p.shares(b))
        assert p.value(p.shares((a + b) / 2)) <= (fa + fb) / 2 + 1e-9


def test_solver_not_worse_than_grid_random():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_problem(rng)
        sol = solve(p)
        _, best = grid_oracle(p)
        assert sol.objective <= best + 1e-9
        assert sol.certificate_gap <= 1e-6


def test_three_regions_simplex():
    rng = np.random.default_rng(4)
    p = random_problem(rng, m=3, q=2)
    sol = solve(p)
    np.testing.assert_allclose(sol.shares.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(sol.shares >= 0)
    _, best = grid_oracle(p, 0.1)
    assert sol.objective <= best + 1e-9
    with pytest.raises(ValueError):
        p.shares(np.full(2, 0.5))


def test_symmetric_regions_split_evenly():
    sol = solve(single_tranche())
    assert sol.lambdas[0] == pytest.approx(0.5, abs=1e-9)


def test_zero_epidemic_region_gets_nothing():
    p = single_tranche(x0=(2.0, 0.0))
    assert np.all(p.hosp[1] == 0)
    sol = solve(p)
    S, _ = grid_oracle(p, 0.01)
    assert S[0, 0] == 1.0
    assert sol.lambdas[0] == pytest.approx(1.0, abs=1e-12)


def test_k0_ties_to_center():
    sol = solve(two_region_problem(K=0.0))
    np.testing.assert_array_equal(sol.lambdas, [0.5] * 4)


def test_more_beds_never_raise_penalty(case1):
    rng = np.random.default_rng(5)
    for _ in range(20):
        lam = rng.uniform(0, 1, 4)
        b = case1.beds(case1.shares(lam))
        extra = b + rng.uniform(0, 50, b.shape)
        assert np.all((case1.hosp / extra).sum(axis=1) <= (case1.hosp / b).sum(axis=1))


def test_solution_invariants(case1):
    before = case1.hosp.copy()
    sol = solve(case1)
    np.testing.assert_array_equal(case1.hosp, before)
    assert abs(sol.objective - objective(case1, sol.plans)) <= 1e-9
    np.testing.assert_allclose(sol.shares.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(sol.split_beds.sum(axis=0), case1.sizes, rtol=1e-12)
    assert frank_wolfe_gap(case1, sol.shares) <= 1e-6
    assert sol.feasible


def test_evaluate_split(case1):
    sol = evaluate_split(case1, [192.3 / 350, 183.4 / 300, 72.9 / 100, 1.0])
    assert sol.objective >= solve(case1).objective


def test_feasibility_zero_epidemic():
    p = single_tranche(x0=(0.0, 0.0))
    rep = feasible(p, p.plans(p.shares([0.3])))
    assert rep.feasible and not rep.occupancy_violations


def test_feasibility_reports_violations():
    p = single_tranche(base=(1.0, 1.0))
    rep = feasible(p, p.plans(p.shares([0.5])))
    assert not rep.feasible
    region, day, h, beds = rep.occupancy_violations[0]
    assert h > beds and 61 <= day <= 100


def test_cost_constraint_trivial_cases():
    free = two_region_problem(costs=CostModel(0, 0, 0, 0.0))
    plans = free.plans(free.shares(np.full(4, 0.5)))
    assert all(cost_constraint(free, plans, t)[0] for t in range(101, 151))
    strict = two_region_problem(costs=CostModel(0, 1.0, 0, 0.0))
    ok, spend = cost_constraint(strict, plans, 120)
    assert not ok and spend > 0
    with pytest.raises(ValueError):
        cost_constraint(two_region_problem(), plans, 120)
    with pytest.raises(ValueError):
        cost_constraint(free, plans, 99)


def test_cost_budget_from_spend_profile():
    probe = two_region_problem(costs=CostModel(2.0, 0.5, 1.5, 0.0))
    plans = probe.plans(probe.shares(np.full(4, 0.5)))
    spend = np.array([cost_constraint(probe, plans, t)[1] for t in range(101, 151)])
    # hand check of one day with new beds and one without
    h, hb = probe.hosp, probe.hosp_before
    k = 7  # day 108, tranche of 300 opens
    dh = h[:, k] - h[:, k - 1]
    assert spend[k] == pytest.approx(2.0 * 300 + (0.5 * h[:, k] + 1.5 * np.maximum(dh, 0)).sum(), rel=1e-12)
    dh0 = h[:, 0] - hb
    assert spend[0] == pytest.approx(2.0 * 350 + (0.5 * h[:, 0] + 1.5 * np.maximum(dh0, 0)).sum(), rel=1e-12)
    budgeted = two_region_problem(costs=CostModel(2.0, 0.5, 1.5, list(1.1 * spend)))
    assert all(cost_constraint(budgeted, plans, t)[0] for t in range(101, 151))
    sol = solve(budgeted)
    assert not sol.feasibility.cost_violations


def test_problem2_without_budget_raises():
    p = two_region_problem(costs=CostModel(1.0, 1.0, 1.0, 10.0))
    with pytest.raises(InfeasibleProblemError):
        solve(p)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 10_000))
def test_project_simplex(m, q, seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(0, 2, (m, q))
    P = project_simplex(S)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(project_simplex(P), P, atol=1e-12)
    # optimality: no random simplex point is closer
    for _ in range(5):
        Y = rng.dirichlet(np.ones(m), q).T
        assert np.sum((S - P) ** 2, axis=0).sum() <= np.sum((S - Y) ** 2, axis=0).sum() + 1e-12


def test_grid_oracle_rejects_bad_resolution(case1):
    with pytest.raises(ValueError):
        grid_oracle(case1, 0.03)
