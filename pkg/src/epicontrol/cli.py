"""Command-line entry point: ``epicontrol {simulate,fit,allocate,sweep}``."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .allocate import InfeasibleProblemError, grid_oracle, solve
from .fit import fit
from .io import format_number, read_observed_csv, write_series
from .scenario import ScenarioError, load_scenario
from .simulate import observables, reproduction_number, simulate_multi

log = logging.getLogger("epicontrol")

SERIES = ("x", "C", "D", "I_a", "h", "beds", "occupancy")


def _header(scenario, command: str, **extra) -> list[str]:
    lines = [
        f"epicontrol {__version__} {command}",
        f"scenario_sha256={scenario.sha256}",
        "params=" + json.dumps(scenario.resolved(), sort_keys=True, separators=(",", ":")),
    ]
    lines += [f"{k}={v}" for k, v in sorted(extra.items())]
    return lines


def _write_summary(path: Path, header, items):
    with path.open("w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for k, v in items:
            fh.write(f"{k}={v if isinstance(v, str) else format_number(v)}\n")


def run_simulate(scenario, out: Path):
    params = scenario.region_params()
    controls = scenario.controls()
    T = scenario.horizon
    trajs = simulate_multi(params, scenario.coupling_matrix(), controls, scenario.x0(), T,
                           scenario.convention, scenario.names)
    plans = scenario.bed_plans() or [None] * scenario.m
    header = _header(scenario, "simulate")
    summary = []
    beta_eff = np.diag(scenario.coupling)  # within-region rate
    for r, (traj, p, ctl, plan) in enumerate(zip(trajs, params, controls, plans)):
        name = scenario.names[r]
        obs = observables(traj, p, beta_eff[r], ctl, T, beds=plan)
        for q in SERIES:
            if q in obs:
                write_series(out / f"{name}_{q}.csv", {"day": obs["day"], q: obs[q]}, header)
        for j, (first, last, tau) in enumerate(ctl.intervals()):
            R = reproduction_number(p.alpha, beta_eff[r], tau, p.kernel)
            summary.append((f"{name}.R[{j + 1}](days {first}-{last}, tau={tau})", R))
        summary.append((f"{name}.C({T})", obs["C"][-1]))
        summary.append((f"{name}.D({T})", obs["D"][-1]))
    _write_summary(out / "summary.txt", header, summary)
    return trajs


def run_fit(scenario, data: Path, out: Path):
    obs, labels = read_observed_csv(data)
    spec = scenario.fit_spec()
    result = fit(obs, spec)
    header = _header(scenario, "fit", data=Path(data).name)
    country = scenario.fit["country"]
    row = {"country": [country], "alpha": [result.alpha], "beta": [result.beta]}
    for k, (tau, R) in enumerate(zip(result.taus, result.reproduction_numbers), start=1):
        row[f"tau_{k}"] = [tau]
        row[f"R_{k}"] = [R]
    row["loss"] = [result.loss]
    write_series(out / "fit_report.csv", row, header)
    write_series(out / "fit_curves.csv", {
        "date": labels, "day": obs.days,
        "cases_observed": obs.cases, "cases_fit": result.cases_fit,
        "deaths_observed": obs.deaths, "deaths_fit": result.deaths_fit,
    }, header)
    return result


def _allocation_rows(problem, sol):
    rows = {"tranche": [], "day": [], "size": []}
    for r in problem.regions:
        rows[r] = []
    for i, (day, size) in enumerate(zip(problem.tranche_days, problem.tranche_sizes), start=1):
        rows["tranche"].append(i)
        rows["day"].append(day)
        rows["size"].append(size)
        for r, name in enumerate(problem.regions):
            rows[name].append(sol.split_beds[r, i - 1])
    return rows


def _solution_summary(problem, sol, oracle=None):
    items = [("objective", sol.objective), ("certificate_gap", sol.certificate_gap),
             ("feasibility", "feasible" if sol.feasible else "infeasible")]
    for r, name in enumerate(problem.regions):
        items += [
            (f"{name}.lambda", " ".join(format_number(v) for v in sol.shares[r])),
            (f"{name}.occupancy_mean", sol.occupancy_mean[r]),
            (f"{name}.occupancy_max", sol.occupancy_max[r]),
            (f"{name}.x(T)", sol.final_new_cases[r]),
            (f"{name}.C(T)", sol.final_cumulative[r]),
        ]
    if problem.K == 0:
        items.append(("note", "K=0: every split ties; equal shares reported"))
    if oracle is not None:
        items.append(("grid_oracle_objective", oracle[1]))
    v = sol.feasibility
    items.append(("occupancy_violation_days", len(v.occupancy_violations)))
    if problem.costs is not None:
        items.append(("cost_violation_days", len(v.cost_violations)))
    return items


def run_allocate(scenario, problem_kind: int, out: Path, oracle: bool = False):
    problem = scenario.allocation_problem(problem_kind)
    sol = solve(problem)
    header = _header(scenario, "allocate", problem=problem_kind)
    write_series(out / "allocation.csv", _allocation_rows(problem, sol), header)
    orc = grid_oracle(problem) if oracle else None
    _write_summary(out / "allocation_summary.txt", header, _solution_summary(problem, sol, orc))
    return sol


def parse_tau_grid(text: str) -> list[int]:
    try:
        vals = sorted({int(v) for v in text.replace(" ", "").split(",") if v})
    except ValueError:
        raise argparse.ArgumentTypeError(f"--tau-grid expects comma-separated integers, got {text!r}") from None
    if not vals or vals[0] < 1:
        raise argparse.ArgumentTypeError("--tau-grid needs positive integers")
    return vals


def _sweep_cell(scenario, problem_kind, taus):
    sc = scenario.with_final_taus(taus)
    problem = sc.allocation_problem(problem_kind)
    try:
        return taus, problem, solve(problem), None
    except InfeasibleProblemError as exc:
        return taus, problem, None, str(exc)


def run_sweep(scenario, tau_grid, problem_kind: int, out: Path, jobs: int = 1):
    combos = list(itertools.product(tau_grid, repeat=scenario.m))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            cells = list(pool.map(lambda t: _sweep_cell(scenario, problem_kind, t), combos))
    else:
        cells = [_sweep_cell(scenario, problem_kind, t) for t in combos]
    q = len(scenario.beds["tranches"])
    cols: dict = {f"tau_{n}": [] for n in scenario.names}
    for n in scenario.names:
        for i in range(1, q + 1):
            cols[f"{n}_tranche{i}"] = []
    for key in ["objective"] + [f"{n}_{s}" for n in scenario.names for s in ("occ_mean", "occ_max")] + ["feasibility"]:
        cols[key] = []
    for taus, problem, sol, err in cells:
        for n, t in zip(scenario.names, taus):
            cols[f"tau_{n}"].append(t)
        for r, n in enumerate(scenario.names):
            for i in range(q):
                cols[f"{n}_tranche{i + 1}"].append(sol.split_beds[r, i] if sol else float("nan"))
            cols[f"{n}_occ_mean"].append(sol.occupancy_mean[r] if sol else float("nan"))
            cols[f"{n}_occ_max"].append(sol.occupancy_max[r] if sol else float("nan"))
        cols["objective"].append(sol.objective if sol else float("nan"))
        cols["feasibility"].append(("feasible" if sol.feasible else "infeasible") if sol else "no-budget")
    header = _header(scenario, "sweep", problem=problem_kind, tau_grid=",".join(map(str, tau_grid)))
    write_series(out / "sweep.csv", cols, header)
    return cells


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epicontrol", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, type=Path, help="scenario YAML file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed-convention", choices=["constant", "pulse"], default=None,
                       help="prehistory seeding (overrides the scenario)")

    p = sub.add_parser("simulate", help="write daily series per region")
    common(p)

    p = sub.add_parser("fit", help="fit alpha, beta and isolation times to a date,cases,deaths CSV")
    common(p)
    p.add_argument("--data", required=True, type=Path)

    p = sub.add_parser("allocate", help="split bed tranches across regions")
    common(p)
    p.add_argument("--problem", type=int, choices=[1, 2], default=1)
    p.add_argument("--oracle", action="store_true", help="also report the 0.05 grid optimum")

    p = sub.add_parser("sweep", help="allocate for every combination of final isolation times")
    common(p)
    p.add_argument("--problem", type=int, choices=[1, 2], default=1)
    p.add_argument("--tau-grid", type=parse_tau_grid, default=[3, 4, 5])
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = load_scenario(args.scenario).with_convention(args.seed_convention)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            run_simulate(scenario, args.out)
        elif args.command == "fit":
            run_fit(scenario, args.data, args.out)
        elif args.command == "allocate":
            sol = run_allocate(scenario, args.problem, args.out, args.oracle)
            print(f"objective={format_number(sol.objective)} feasibility={'feasible' if sol.feasible else 'infeasible'}")
        elif args.command == "sweep":
            run_sweep(scenario, args.tau_grid, args.problem, args.out, args.jobs)
    except (ScenarioError, FileNotFoundError, InfeasibleProblemError, ValueError) as exc:
        print(f"epicontrol: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
