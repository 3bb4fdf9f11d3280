import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from epicontrol.fit import (
    FitSpec,
    IsolationScheduleFitter,
    ObservedSeries,
    _Objective,
    fit,
    fit_loss,
    synthesize,
)
from epicontrol.simulate import reproduction_number

SPEC2 = dict(breakpoints=(0, 50, 100), tau_min=3, tau_max=5, x0=2.0, latent_d=6)


@pytest.fixture(scope="module")
def spec2():
    return FitSpec(**SPEC2)


@pytest.fixture(scope="module")
def two_interval_fit(spec2):
    obs = synthesize(0.6, 0.30, (4, 5), spec2, np.arange(0, 101))
    return obs, fit(obs, spec2)


def test_observed_series_validation():
    ObservedSeries([0, 1, 2], [1, 2, 3], [0, 0, 1])
    with pytest.raises(ValueError):
        ObservedSeries([0, 1], [1, 2, 3], [0, 0, 1])
    with pytest.raises(ValueError):
        ObservedSeries([0, 2, 1], [1, 2, 3], [0, 0, 1])
    with pytest.raises(ValueError):
        ObservedSeries([0, 1, 2], [1, -2, 3], [0, 0, 1])
    with pytest.raises(ValueError):
        ObservedSeries([0, 1.5], [1, 2], [0, 0])
    obs = ObservedSeries([0, 1, 2, 3], [1, 3, 2, 4], [0, 1, 1, 0])
    assert obs.monotonicity_violations() == [(2, "cases"), (3, "deaths")]


def test_spec_validation():
    with pytest.raises(ValueError):
        FitSpec(breakpoints=(0,))
    with pytest.raises(ValueError):
        FitSpec(breakpoints=(0, 10), alpha_bounds=(0.5, 0.2))
    with pytest.raises(ValueError):
        FitSpec(breakpoints=(0, 10), tau_min=5, tau_max=3)
    with pytest.raises(ValueError):
        FitSpec(breakpoints=(0, 10), alpha_bounds=(0.0, 1.5))
    assert FitSpec(breakpoints=(0, 10)).starts().shape == (16, 2)


def test_loss_self_consistent(spec2):
    obs = synthesize(0.6, 0.30, (4, 5), spec2, np.arange(0, 101, 5))
    assert fit_loss((0.6, 0.30, (4, 5)), spec2, obs) <= 1e-18
    assert fit_loss((0.6, 0.31, (4, 5)), spec2, obs) > 0


def test_loss_formula(spec2):
    obs = ObservedSeries(np.arange(0, 101, 10), np.linspace(0, 500, 11), np.linspace(0, 200, 11))
    from epicontrol.fit import model_series

    c, d = model_series(0.5, 0.25, (3, 4), spec2, obs.days)
    expected = np.sum(((c - obs.cases) / 500) ** 2) + np.sum(((d - obs.deaths) / 200) ** 2)
    assert fit_loss((0.5, 0.25, (3, 4)), spec2, obs) == pytest.approx(expected, rel=1e-14)


def test_loss_errors(spec2):
    obs = synthesize(0.6, 0.30, (4, 5), spec2, np.arange(0, 101, 5))
    with pytest.raises(ValueError):
        fit_loss((1.2, 0.3, (4, 5)), spec2, obs)
    with pytest.raises(ValueError):
        fit_loss((0.6, 0.3, (4,)), spec2, obs)
    long = ObservedSeries(np.arange(0, 201, 50), np.arange(5.0), np.zeros(5))
    with pytest.raises(ValueError, match="cover"):
        fit_loss((0.6, 0.3, (4, 5)), spec2, long)


def test_fast_loss_matches_reference(spec2):
    rng = np.random.default_rng(11)
    obs = synthesize(0.5, 0.28, (3, 5), spec2, np.sort(rng.choice(np.arange(1, 101), 30, replace=False)))
    objective = _Objective(spec2, obs)
    for _ in range(30):
        a, b = rng.uniform(0, 1), rng.uniform(0.05, 0.6)
        taus = tuple(int(v) for v in rng.integers(3, 6, 2))
        ref = fit_loss((a, b, taus), spec2, obs)
        fast = objective(a, b, objective.daily_taus(taus))
        assert fast == pytest.approx(ref, rel=1e-12, abs=1e-20)


def test_guinea_beats_sierra_leone_on_guinea_data():
    spec = FitSpec(breakpoints=(0, 62, 120, 257, 344), x0=1.0)
    obs = synthesize(0.66, 0.265, (3, 5, 4, 3), spec, np.arange(0, 345, 7))
    assert fit_loss((0.66, 0.265, (3, 5, 4, 3)), spec, obs) < fit_loss((0.32, 0.274, (5, 5, 4, 3)), spec, obs)


def test_noiseless_two_interval_recovery(two_interval_fit):
    _, res = two_interval_fit
    assert res.taus == (4, 5)
    assert abs(res.alpha - 0.6) < 1e-3 and abs(res.beta - 0.30) < 1e-3


def test_result_invariants(spec2, two_interval_fit):
    obs, res = two_interval_fit
    for tau, R in zip(res.taus, res.reproduction_numbers):
        assert abs(reproduction_number(res.alpha, res.beta, tau, spec2.kernel) - R) <= 1e-12
    # never worse than anything evaluated
    assert res.loss <= min(res.tuple_losses.values())
    assert len(res.tuple_losses) == 9
    assert fit_loss((res.alpha, res.beta, res.taus), spec2, obs) == pytest.approx(res.loss, rel=1e-9, abs=1e-20)
    np.testing.assert_allclose(res.cases_fit, obs.cases, rtol=1e-4)


def test_noisy_two_interval_recovery(spec2):
    obs = synthesize(0.6, 0.30, (4, 5), spec2, np.arange(0, 101), noise=0.02, rng=5)
    assert not obs.monotonicity_violations()
    res = fit(obs, spec2)
    assert res.taus == (4, 5)
    assert abs(res.alpha / 0.6 - 1) < 0.05 and abs(res.beta / 0.30 - 1) < 0.05


def test_flat_series_has_subcritical_fit():
    spec = FitSpec(**SPEC2)
    obs = ObservedSeries(np.arange(0, 101, 5), np.full(21, 40.0), np.full(21, 5.0))
    res = fit(obs, spec)
    assert all(R <= 1 for R in res.reproduction_numbers)


def test_coordinate_fallback_is_local_minimum():
    kw = dict(SPEC2, breakpoints=(0, 35, 70, 100))
    obs = synthesize(0.6, 0.30, (4, 5, 3), FitSpec(**kw), np.arange(0, 101, 2))
    res = fit(obs, FitSpec(**kw, max_enumeration=26))
    losses = res.tuple_losses
    assert len(losses) < 27
    assert res.loss <= losses[(3, 3, 3)]
    # no single-interval change improves the returned schedule
    for j in range(3):
        for tau in (3, 4, 5):
            cand = res.taus[:j] + (tau,) + res.taus[j + 1:]
            assert losses[cand] >= res.loss


def test_deterministic(spec2):
    obs = synthesize(0.4, 0.25, (5, 3), spec2, np.arange(0, 101, 4))
    a, b = fit(obs, spec2), fit(obs, spec2)
    assert (a.alpha, a.beta, a.taus, a.loss) == (b.alpha, b.beta, b.taus, b.loss)


def test_fit_errors(spec2):
    with pytest.raises(ValueError):
        fit(ObservedSeries([], [], []), spec2)


def test_estimator_api(spec2):
    obs = synthesize(0.6, 0.30, (4, 5), spec2, np.arange(0, 101, 2))
    X = np.column_stack([obs.days, obs.cases, obs.deaths])
    est = IsolationScheduleFitter(breakpoints=(0, 50, 100), x0=2.0, latent_d=6)
    with pytest.raises(NotFittedError):
        est.predict(obs.days)
    assert clone(est).get_params() == est.get_params()
    est.fit(X)
    assert est.taus_ == (4, 5)
    pred = est.predict(obs.days)
    assert pred.shape == (len(obs), 2)
    np.testing.assert_allclose(pred[:, 0], obs.cases, rtol=1e-4)
    assert est.score(X) <= 0 and est.score(X) > -1e-9
    with pytest.raises(ValueError):
        est.fit(X[:, :2])
