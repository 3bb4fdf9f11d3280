import warnings
from pathlib import Path

import numpy as np
import pytest
import yaml

from epicontrol.fit import ObservedSeries
from epicontrol.io import MonotonicityWarning, read_observed_csv, read_series, write_observed_csv, write_series
from epicontrol.scenario import ScenarioError, load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "epicontrol" / "scenarios"


def test_read_three_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("date,cases,deaths\n2014-03-22,49,29\n2014-03-25,86,60\n2014-04-01,122,80\n")
    obs, labels = read_observed_csv(f)
    assert len(obs) == 3
    np.testing.assert_array_equal(obs.days, [0, 3, 10])
    assert labels[0] == "2014-03-22"


def test_monotonicity_warning(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("date,cases,deaths\n2014-03-22,49,29\n2014-03-25,40,30\n2014-04-01,122,28\n")
    with pytest.warns(MonotonicityWarning, match=r"line 3 \(cases\).*line 4 \(deaths\)"):
        read_observed_csv(f)


def test_malformed_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("date,cases,deaths\n2014-03-22,49,29\n2014-03-25,abc,30\n")
    with pytest.raises(ValueError, match=":3:"):
        read_observed_csv(f)
    f.write_text("day,cases,deaths\n0,1,1\n")
    with pytest.raises(ValueError, match="header"):
        read_observed_csv(f)
    f.write_text("date,cases,deaths\n2014-03-22,49\n")
    with pytest.raises(ValueError, match=":2:"):
        read_observed_csv(f)
    with pytest.raises(FileNotFoundError):
        read_observed_csv(tmp_path / "missing.csv")


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cases = np.cumsum(rng.uniform(0, 50, 20))
    deaths = np.cumsum(rng.uniform(0, 5, 20))
    obs = ObservedSeries(np.arange(0, 40, 2), cases, deaths)
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_observed_csv(f1, obs)
    back, labels = read_observed_csv(f1)
    np.testing.assert_array_equal(back.cases, obs.cases)
    np.testing.assert_array_equal(back.deaths, obs.deaths)
    np.testing.assert_array_equal(back.days, obs.days)
    write_observed_csv(f2, back, labels)
    assert f1.read_text() == f2.read_text()


def test_write_series_exact(tmp_path):
    vals = np.array([0.1, 1 / 3, 2.0, 1e-300, 12345.678901234567])
    write_series(tmp_path / "s.csv", {"day": np.arange(5), "v": vals}, ["hello"])
    assert (tmp_path / "s.csv").read_text().startswith("# hello\n")
    back = read_series(tmp_path / "s.csv")
    np.testing.assert_array_equal(back["v"], vals)
    with pytest.raises(ValueError):
        write_series(tmp_path / "t.csv", {"a": [1, 2], "b": [1]})


def raw_two_region():
    return yaml.safe_load((SCENARIOS / "two_region.yaml").read_text())


def test_bundled_scenarios_load():
    sc = load_scenario(SCENARIOS / "two_region.yaml")
    assert sc.names == ["region1", "region2"] and len(sc.sha256) == 64
    p = sc.allocation_problem(1)
    assert p.m == 2 and p.q == 4 and p.window == (101, 150)
    g = load_scenario(SCENARIOS / "guinea_fit.yaml")
    assert g.fit_spec().breakpoints == (0, 62, 120, 257, 344)


def test_all_errors_reported_at_once():
    raw = raw_two_region()
    raw["regions"][0]["alpha"] = 1.5
    raw["coupling"] = [[0.3, -1], [0, 0.28]]
    raw["controls"]["tau"]["region3"] = [1, 2, 3]
    raw["beds"]["base"].pop("region2")
    raw["objective"]["window"] = [101, 200]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(raw)
    msgs = "\n".join(exc.value.errors)
    assert len(exc.value.errors) >= 5
    for key in ("alpha", "coupling", "region3", "beds.base", "objective.window"):
        assert key in msgs


def test_region_defined_once():
    raw = raw_two_region()
    raw["regions"][1]["name"] = "region1"
    with pytest.raises(ScenarioError, match="defined twice"):
        parse_scenario(raw)


def test_problem2_needs_costs():
    raw = raw_two_region()
    raw.pop("costs")
    sc = parse_scenario(raw)
    with pytest.raises(ScenarioError, match="costs"):
        sc.allocation_problem(2)


def test_with_final_taus_and_convention():
    sc = load_scenario(SCENARIOS / "two_region.yaml")
    s2 = sc.with_final_taus((5, 4))
    assert s2.taus == {"region1": (4, 5, 5), "region2": (4, 5, 4)}
    assert sc.taus["region1"] == (4, 5, 3)
    assert sc.with_convention("pulse").convention == "pulse"
    with pytest.raises(ScenarioError):
        sc.with_convention("ramp")
