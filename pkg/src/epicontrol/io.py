"""CSV input and output."""
from __future__ import annotations

import csv
import datetime as dt
import warnings
from pathlib import Path

import numpy as np

from .fit import ObservedSeries

__all__ = ["read_observed_csv", "write_observed_csv", "write_series", "read_series", "format_number"]

OBSERVED_HEADER = ["date", "cases", "deaths"]


class MonotonicityWarning(UserWarning):
    pass


def format_number(v) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if f.is_integer() and abs(f) < 2**53:
        return str(int(f))
    return repr(f)


def _parse_date(text: str):
    text = text.strip()
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        pass
    return int(text)  # plain day indices are accepted as well


def read_observed_csv(path) -> tuple[ObservedSeries, list]:
    """Read ``date,cases,deaths`` (cumulative counts).

    Dates become day offsets from the first row. Returns the series and the
    raw date labels.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    labels, dates, cases, deaths = [], [], [], []
    with path.open(newline="") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1) if row and not row[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty file")
    n, header = rows[0]
    if [h.strip().lower() for h in header] != OBSERVED_HEADER:
        raise ValueError(f"{path}:{n}: expected header 'date,cases,deaths', got {','.join(header)!r}")
    for n, row in rows[1:]:
        if len(row) != 3:
            raise ValueError(f"{path}:{n}: expected 3 fields, got {len(row)}")
        try:
            date = _parse_date(row[0])
            c, d = float(row[1]), float(row[2])
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: malformed row {row!r} ({exc})") from None
        if not (np.isfinite(c) and np.isfinite(d)) or c < 0 or d < 0:
            raise ValueError(f"{path}:{n}: counts must be finite and non-negative")
        labels.append(row[0].strip())
        dates.append((n, date))
        cases.append(c)
        deaths.append(d)
    if not dates:
        raise ValueError(f"{path}: no data rows")
    kinds = {type(d) for _, d in dates}
    if len(kinds) > 1:
        raise ValueError(f"{path}: mixes calendar dates and day indices")
    first = dates[0][1]
    days = []
    for n, d in dates:
        off = (d - first).days if isinstance(d, dt.date) else d - first
        if days and off <= days[-1]:
            raise ValueError(f"{path}:{n}: dates must be strictly increasing")
        days.append(off)
    obs = ObservedSeries(np.array(days), np.array(cases), np.array(deaths))
    bad = obs.monotonicity_violations()
    if bad:
        lines = ", ".join(f"line {dates[i][0]} ({col})" for i, col in bad)
        warnings.warn(f"{path}: cumulative counts decrease at {lines}", MonotonicityWarning, stacklevel=2)
    return obs, labels


def write_observed_csv(path, obs: ObservedSeries, labels=None):
    """Inverse of ``read_observed_csv``; labels default to day indices."""
    labels = labels if labels is not None else [str(int(d)) for d in obs.days]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBSERVED_HEADER)
        for lab, c, d in zip(labels, obs.cases, obs.deaths):
            w.writerow([lab, format_number(c), format_number(d)])


def write_series(path, columns: dict, header_lines=()):
    """Write equal-length columns as CSV, with optional ``#`` comment lines first."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    if len({len(a) for a in arrays}) > 1:
        raise ValueError("columns differ in length")
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*arrays):
            w.writerow([v if isinstance(v, str) else format_number(v) for v in row])


def read_series(path) -> dict:
    """Read a file written by ``write_series`` into float arrays."""
    with Path(path).open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    names, body = rows[0], rows[1:]
    return {k: np.array([float(r[j]) for r in body]) for j, k in enumerate(names)}
