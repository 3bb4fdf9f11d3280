"""Scenario files (YAML).

A scenario names its regions once and refers to them by name everywhere
else. Validation collects every problem before raising.

Layout::

    name: two-region
    seed_convention: constant
    kernel: {shape: 10, rate: 1.3333, max_lag: 35, discretization: cumulative}
    regions:
      - {name: north, alpha: 0.6, x0: 2, latent_d: 6, sigma: 6}
    coupling: [[0.30]]            # coupling[i][r]: from region i into r
    controls:
      breakpoints: [0, 50, 100, 150]
      tau: {north: [4, 5, 3]}
    beds:
      base: {north: 126}
      tranches: [{day: 101, size: 350}]
      shares: {north: [1.0]}      # optional, used by ``simulate``
    objective: {K: 100, window: [101, 150]}
    costs: {kappa_B: 1, kappa_S: 1, kappa_I: 1, budget: 1000}
    fit: {country: Guinea, breakpoints: [...], tau_min: 3, tau_max: 5, x0: 1}
"""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .allocate import AllocationProblem
from .fit import FitSpec
from .kernel import DISCRETIZATIONS, GammaParams, build_kernel
from .model import SEED_CONVENTIONS, BedPlan, ControlSchedule, CostModel, CouplingMatrix, RegionParams

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario"]


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


def _num(errors, where, value, *, integer=False, lo=None, hi=None, default=None):
    if value is None:
        if default is None:
            errors.append(f"{where}: missing")
        return default
    try:
        if isinstance(value, bool):
            raise TypeError
        v = float(value)
    except (TypeError, ValueError):
        errors.append(f"{where}: expected a number, got {value!r}")
        return default
    if integer and not v.is_integer():
        errors.append(f"{where}: expected an integer, got {value!r}")
        return default
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        errors.append(f"{where}: {value!r} outside [{lo}, {hi}]")
    return int(v) if integer else v


@dataclass
class Scenario:
    raw: dict
    sha256: str
    name: str
    convention: str
    kernel_spec: dict
    regions: list  # dicts with name, alpha, x0, latent_d, sigma
    coupling: np.ndarray
    breakpoints: tuple
    taus: dict  # region -> tuple
    tau_min: int
    tau_max: int
    horizon: int
    beds: dict | None = None
    objective: dict | None = None
    costs: dict | None = None
    fit: dict | None = None
    source: str = ""
    _kernel: object = field(default=None, repr=False)

    @property
    def names(self) -> list[str]:
        return [r["name"] for r in self.regions]

    @property
    def m(self) -> int:
        return len(self.regions)

    def kernel(self):
        if self._kernel is None:
            k = self.kernel_spec
            self._kernel = build_kernel(GammaParams(k["shape"], k["rate"]), k["max_lag"], k["discretization"])
        return self._kernel

    def region_params(self) -> list[RegionParams]:
        return [RegionParams(r["alpha"], r["latent_d"], r["sigma"], self.kernel()) for r in self.regions]

    def coupling_matrix(self) -> CouplingMatrix:
        return CouplingMatrix(self.coupling)

    def controls(self) -> list[ControlSchedule]:
        return [ControlSchedule(self.breakpoints, self.taus[n], self.tau_min, self.tau_max) for n in self.names]

    def x0(self) -> list[float]:
        return [r["x0"] for r in self.regions]

    def with_final_taus(self, taus) -> "Scenario":
        """Copy with the last control interval's isolation time replaced per region."""
        if len(taus) != self.m:
            raise ValueError(f"need {self.m} isolation times, got {len(taus)}")
        new = copy.copy(self)
        new.taus = {n: self.taus[n][:-1] + (int(t),) for n, t in zip(self.names, taus)}
        new.tau_max = max(self.tau_max, *(int(t) for t in taus))
        return new

    def with_convention(self, convention: str | None) -> "Scenario":
        if convention is None:
            return self
        if convention not in SEED_CONVENTIONS:
            raise ScenarioError([f"seed convention must be one of {SEED_CONVENTIONS}"])
        new = copy.copy(self)
        new.convention = convention
        return new

    def bed_plans(self) -> list[BedPlan] | None:
        """Plans from ``beds.shares`` (an even split when shares are omitted)."""
        if self.beds is None:
            return None
        days = tuple(t["day"] for t in self.beds["tranches"])
        sizes = np.array([t["size"] for t in self.beds["tranches"]], dtype=float)
        shares = self.beds.get("shares") or {n: [1.0 / self.m] * len(days) for n in self.names}
        return [BedPlan(self.beds["base"][n], days, tuple(np.asarray(shares[n]) * sizes), n) for n in self.names]

    def allocation_problem(self, problem: int = 1) -> AllocationProblem:
        errors = []
        if self.beds is None:
            errors.append("beds: section required for allocation")
        if self.objective is None:
            errors.append("objective: section required for allocation")
        if problem == 2 and self.costs is None:
            errors.append("costs: section required for problem 2")
        if problem not in (1, 2):
            errors.append(f"problem must be 1 or 2, got {problem!r}")
        if errors:
            raise ScenarioError(errors)
        costs = None
        if problem == 2:
            c = self.costs
            costs = CostModel(c["kappa_B"], c["kappa_S"], c["kappa_I"], c["budget"])
        return AllocationProblem(
            params=self.region_params(),
            coupling=self.coupling_matrix(),
            controls=self.controls(),
            x0=self.x0(),
            base_beds=[self.beds["base"][n] for n in self.names],
            tranche_days=[t["day"] for t in self.beds["tranches"]],
            tranche_sizes=[t["size"] for t in self.beds["tranches"]],
            K=self.objective["K"],
            window=tuple(self.objective["window"]),
            costs=costs,
            convention=self.convention,
            regions=self.names,
        )

    def fit_spec(self) -> FitSpec:
        if self.fit is None:
            raise ScenarioError(["fit: section required for fitting"])
        f = self.fit
        return FitSpec(
            breakpoints=tuple(f["breakpoints"]),
            tau_min=f["tau_min"],
            tau_max=f["tau_max"],
            alpha_bounds=tuple(f["alpha_bounds"]),
            beta_bounds=tuple(f["beta_bounds"]),
            x0=f["x0"],
            latent_d=f["latent_d"],
            kernel=self.kernel(),
            convention=self.convention,
            n_starts=f["n_starts"],
        )

    def resolved(self) -> dict:
        """Every parameter after defaults, for output headers."""
        out = {
            "name": self.name,
            "seed_convention": self.convention,
            "kernel": dict(self.kernel_spec),
            "regions": [dict(r) for r in self.regions],
            "coupling": self.coupling.tolist(),
            "controls": {"breakpoints": list(self.breakpoints), "tau": {k: list(v) for k, v in self.taus.items()},
                         "tau_min": self.tau_min, "tau_max": self.tau_max},
            "horizon": self.horizon,
        }
        for key in ("beds", "objective", "costs", "fit"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


def _regions(raw, errors):
    regions = []
    items = raw.get("regions")
    if not isinstance(items, list) or not items:
        errors.append("regions: expected a non-empty list")
        return regions
    seen = set()
    for k, item in enumerate(items):
        where = f"regions[{k}]"
        if not isinstance(item, dict):
            errors.append(f"{where}: expected a mapping")
            continue
        name = str(item.get("name", f"region{k + 1}"))
        if name in seen:
            errors.append(f"{where}: region {name!r} defined twice")
        seen.add(name)
        unknown = set(item) - {"name", "alpha", "x0", "latent_d", "sigma"}
        if unknown:
            errors.append(f"{where}: unknown keys {sorted(unknown)}")
        regions.append({
            "name": name,
            "alpha": _num(errors, f"{where}.alpha", item.get("alpha"), lo=0, hi=1, default=0.0),
            "x0": _num(errors, f"{where}.x0", item.get("x0"), lo=0, default=0.0),
            "latent_d": _num(errors, f"{where}.latent_d", item.get("latent_d", 6), integer=True, lo=0, default=6),
            "sigma": _num(errors, f"{where}.sigma", item.get("sigma", 6), integer=True, lo=1, default=6),
        })
    return regions


def _per_region(errors, where, mapping, names):
    if not isinstance(mapping, dict):
        errors.append(f"{where}: expected a mapping keyed by region name")
        return {}
    for key in mapping:
        if key not in names:
            errors.append(f"{where}: unknown region {key!r}")
    for n in names:
        if n not in mapping:
            errors.append(f"{where}: missing region {n!r}")
    return mapping


def parse_scenario(raw: dict, sha256: str = "", source: str = "") -> Scenario:
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioError(["top level must be a mapping"])
    known = {"name", "seed_convention", "kernel", "regions", "coupling", "controls", "horizon",
             "beds", "objective", "costs", "fit"}
    unknown = set(raw) - known
    if unknown:
        errors.append(f"unknown top-level keys {sorted(unknown)}")

    convention = raw.get("seed_convention", "constant")
    if convention not in SEED_CONVENTIONS:
        errors.append(f"seed_convention: expected one of {SEED_CONVENTIONS}, got {convention!r}")

    k = raw.get("kernel") or {}
    kernel = {
        "shape": _num(errors, "kernel.shape", k.get("shape", 10.0), lo=1e-12, default=10.0),
        "rate": _num(errors, "kernel.rate", k.get("rate", 1.3333), lo=1e-12, default=1.3333),
        "max_lag": _num(errors, "kernel.max_lag", k.get("max_lag", 35), integer=True, lo=1, default=35),
        "discretization": k.get("discretization", "cumulative"),
    }
    if kernel["discretization"] not in DISCRETIZATIONS:
        errors.append(f"kernel.discretization: expected one of {DISCRETIZATIONS}")

    regions = _regions(raw, errors)
    names = [r["name"] for r in regions]
    m = len(regions)

    coupling = np.zeros((m, m))
    try:
        c = np.array(raw.get("coupling"), dtype=float)
        if c.shape != (m, m):
            errors.append(f"coupling: expected a {m}x{m} matrix, got shape {c.shape}")
        elif np.any(c < 0) or not np.all(np.isfinite(c)):
            errors.append("coupling: entries must be finite and non-negative")
        else:
            coupling = c
    except (TypeError, ValueError):
        errors.append("coupling: expected a numeric matrix")

    ctl = raw.get("controls") or {}
    bps = tuple(ctl.get("breakpoints") or ())
    if len(bps) < 2 or any(not isinstance(b, int) for b in bps) or any(a >= b for a, b in zip(bps, bps[1:])):
        errors.append(f"controls.breakpoints: need strictly increasing integers, got {list(bps)}")
    tau_raw = _per_region(errors, "controls.tau", ctl.get("tau"), names)
    taus = {}
    for n in names:
        vals = tau_raw.get(n)
        if vals is None:
            continue
        if not isinstance(vals, list) or len(vals) != len(bps) - 1 or any(not isinstance(v, int) for v in vals):
            errors.append(f"controls.tau.{n}: need {max(len(bps) - 1, 0)} integers, got {vals!r}")
            continue
        taus[n] = tuple(vals)
    all_taus = [v for vals in taus.values() for v in vals]
    tau_min = _num(errors, "controls.tau_min", ctl.get("tau_min", 1), integer=True, lo=1, default=1)
    tau_max = _num(errors, "controls.tau_max", ctl.get("tau_max", max(all_taus, default=1)), integer=True, lo=1,
                   default=1)
    if any(not tau_min <= v <= tau_max for v in all_taus):
        errors.append(f"controls.tau: values must lie in [{tau_min}, {tau_max}]")

    horizon = _num(errors, "horizon", raw.get("horizon", bps[-1] if bps else 1), integer=True, lo=1, default=1)
    if bps and horizon is not None and not (bps[0] <= 0 and horizon <= bps[-1]):
        errors.append(f"horizon: controls cover days {bps[0] + 1}..{bps[-1]}, cannot simulate 1..{horizon}")

    beds = None
    if raw.get("beds") is not None:
        b = raw["beds"]
        base = _per_region(errors, "beds.base", b.get("base"), names)
        for n, v in base.items():
            _num(errors, f"beds.base.{n}", v, lo=0)
        tranches = b.get("tranches") or []
        if not isinstance(tranches, list) or not tranches:
            errors.append("beds.tranches: expected a non-empty list of {day, size}")
            tranches = []
        clean = []
        for j, t in enumerate(tranches):
            if not isinstance(t, dict):
                errors.append(f"beds.tranches[{j}]: expected a mapping")
                continue
            clean.append({
                "day": _num(errors, f"beds.tranches[{j}].day", t.get("day"), integer=True, default=0),
                "size": _num(errors, f"beds.tranches[{j}].size", t.get("size"), lo=0, default=0.0),
            })
        if any(a["day"] > b2["day"] for a, b2 in zip(clean, clean[1:])):
            errors.append("beds.tranches: days must be non-decreasing")
        shares = b.get("shares")
        if shares is not None:
            shares = _per_region(errors, "beds.shares", shares, names)
            try:
                arr = np.array([shares[n] for n in names], dtype=float)
                if arr.shape != (m, len(clean)) or np.any(arr < 0) or np.any(np.abs(arr.sum(axis=0) - 1) > 1e-9):
                    errors.append("beds.shares: one non-negative share per tranche per region, summing to 1")
            except (KeyError, TypeError, ValueError):
                errors.append("beds.shares: expected numeric lists")
        beds = {"base": {n: float(base.get(n, 0.0) or 0.0) for n in names}, "tranches": clean}
        if shares is not None:
            beds["shares"] = {n: [float(v) for v in shares.get(n, [])] for n in names}

    objective = None
    if raw.get("objective") is not None:
        o = raw["objective"]
        window = o.get("window")
        if not (isinstance(window, list) and len(window) == 2 and all(isinstance(v, int) for v in window)
                and 1 <= window[0] <= window[1]):
            errors.append(f"objective.window: expected [first, last] days with 1 <= first <= last, got {window!r}")
            window = [1, 1]
        elif bps and window[1] > bps[-1]:
            errors.append(f"objective.window: ends after the controls ({bps[-1]})")
        objective = {"K": _num(errors, "objective.K", o.get("K"), lo=0, default=0.0), "window": list(window)}

    costs = None
    if raw.get("costs") is not None:
        c = raw["costs"]
        budget = c.get("budget", 0.0)
        if isinstance(budget, list):
            for j, v in enumerate(budget):
                _num(errors, f"costs.budget[{j}]", v, lo=0)
        else:
            budget = _num(errors, "costs.budget", budget, lo=0, default=0.0)
        costs = {key: _num(errors, f"costs.{key}", c.get(key, 0.0), lo=0, default=0.0)
                 for key in ("kappa_B", "kappa_S", "kappa_I")}
        costs["budget"] = budget

    fit = None
    if raw.get("fit") is not None:
        f = raw["fit"]
        fbps = f.get("breakpoints")
        if not isinstance(fbps, list) or len(fbps) < 2:
            errors.append("fit.breakpoints: expected a list of at least two days")
            fbps = [0, 1]
        fit = {
            "country": str(f.get("country", raw.get("name", "series"))),
            "breakpoints": list(fbps),
            "tau_min": _num(errors, "fit.tau_min", f.get("tau_min", 3), integer=True, lo=1, default=3),
            "tau_max": _num(errors, "fit.tau_max", f.get("tau_max", 5), integer=True, lo=1, default=5),
            "alpha_bounds": list(f.get("alpha_bounds", [0.0, 1.0])),
            "beta_bounds": list(f.get("beta_bounds", [0.05, 0.6])),
            "x0": _num(errors, "fit.x0", f.get("x0"), lo=0, default=1.0),
            "latent_d": _num(errors, "fit.latent_d", f.get("latent_d", 7), integer=True, lo=0, default=7),
            "n_starts": _num(errors, "fit.n_starts", f.get("n_starts", 16), integer=True, lo=1, default=16),
        }

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        raw=raw, sha256=sha256, name=str(raw.get("name", Path(source).stem or "scenario")), convention=convention,
        kernel_spec=kernel, regions=regions, coupling=coupling, breakpoints=bps, taus=taus, tau_min=tau_min,
        tau_max=tau_max, horizon=horizon, beds=beds, objective=objective, costs=costs, fit=fit, source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such scenario file: {path}")
    data = path.read_bytes()
    try:
        raw = yaml.safe_load(data)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"YAML parse error: {exc}"]) from None
    return parse_scenario(raw, hashlib.sha256(data).hexdigest(), str(path))
