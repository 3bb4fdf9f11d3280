"""Problem builders shared by the allocation and acceptance tests."""
import numpy as np

from epicontrol.allocate import AllocationProblem
from epicontrol.kernel import build_kernel
from epicontrol.model import ControlSchedule, CouplingMatrix, RegionParams


def two_region_problem(tau1=3, tau2=3, K=100.0, convention="constant", costs=None):
    """The two-region planning setup: tau 4 then 5, then (tau1, tau2) on days 101-150."""
    k = build_kernel()
    params = [RegionParams(0.6, 6, 6, k), RegionParams(0.6, 6, 6, k)]
    controls = [ControlSchedule((0, 50, 100, 150), (4, 5, t), tau_max=6) for t in (tau1, tau2)]
    return AllocationProblem(
        params, CouplingMatrix.diagonal([0.30, 0.28]), controls, [2.0, 2.0], [126.0, 60.0],
        [101, 108, 115, 122], [350.0, 300.0, 100.0, 20.0], K, (101, 150), costs=costs, convention=convention,
        regions=["region1", "region2"],
    )


def random_problem(rng, m=2, q=None):
    k = build_kernel()
    q = q or int(rng.integers(1, 4))
    T = int(rng.integers(40, 90))
    first = int(rng.integers(T // 2, T - 5))
    params = [RegionParams(float(rng.uniform(0, 1)), int(rng.integers(2, 7)), 6, k) for _ in range(m)]
    beta = np.diag(rng.uniform(0.15, 0.35, m))
    controls = [ControlSchedule((0, first, T), tuple(int(v) for v in rng.integers(2, 6, 2)), tau_max=6)
                for _ in range(m)]
    days = sorted(int(v) for v in rng.integers(first + 1, T + 1, q))
    return AllocationProblem(
        params, CouplingMatrix(beta), controls, list(rng.uniform(0.5, 3, m)), list(rng.uniform(5, 80, m)),
        days, list(rng.uniform(0, 200, q)), float(rng.uniform(1, 200)), (first + 1, T),
    )
