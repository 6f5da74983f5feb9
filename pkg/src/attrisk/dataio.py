"""Readers and writers for the plain-text interchange formats.

The reader side is permissive about column order (header-driven) and about
whitespace (tabs or runs of spaces); the writer side is normative and
emits the documented column order exactly. Numbers are written in the
shortest decimal form that round-trips to the same double. Decimal commas
are rejected, so parsing does not depend on locale.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import N_MONTHS, CountPanel, CovariateSeries

MONTHS = ("january", "february", "march", "april", "may", "june",
          "july", "august", "september", "october", "november", "december")
EVENT_TYPES = ("hot", "cold", "wet")
SCENARIO_TOKENS = ("ALL", "NAT")  # maps to internal scenarios (A, N)
REGION_COLUMNS = MONTHS + ("event_type", "scenario", "year", "n_sims")
COVARIATE_COLUMNS = ("gmtA_raw", "gmtA", "gmtN_raw", "gmtN")
BOUNDS_COLUMNS = ("region", "hot_limits", "cold_limits", "wet_limits")

RESULTS_TABLE_NAME = "results_by_year.tsv"
SUMMARY_NAME = "summary.json"
DRAWS_NAME = "draws.tsv"


class DataFileError(ValueError):
    """Malformed or inconsistent input file; the message names the spot."""


def _fmt(x) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def _parse_float(token: str, where: str) -> float:
    if "," in token:
        raise DataFileError(f"{where}: decimal commas are not accepted ({token!r})")
    try:
        return float(token)
    except ValueError:
        raise DataFileError(f"{where}: not a number ({token!r})") from None


def _parse_int(token: str, where: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", token):
        raise DataFileError(f"{where}: not an integer ({token!r})")
    return int(token)


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DataFileError(f"{path}: file not found") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFileError(f"{path}: file is empty")
    header = lines[0].split()
    rows = [ln.split() for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataFileError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
    return header, rows


# ---------------------------------------------------------------------------
# Region count files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionMeta:
    path: str
    event_type: str
    rows_used: int


def load_region(path, event_type: str) -> tuple[CountPanel, RegionMeta]:
    """Parse a region count file, filtered to one event type.

    Both scenarios must be present for every year, years must be contiguous,
    and counts must respect the per-year ensemble size. Parsing the same
    bytes twice yields identical structures.
    """
    if event_type not in EVENT_TYPES:
        raise DataFileError(f"unknown event_type {event_type!r}; expected one of {EVENT_TYPES}")
    path = Path(path)
    header, rows = _read_table(path)
    missing = [c for c in REGION_COLUMNS if c not in header]
    if missing:
        raise DataFileError(f"{path}: missing columns {missing}")
    col = {name: header.index(name) for name in header}

    records = {}  # (scenario, year) -> (counts 12-tuple, n_sims)
    rows_used = 0
    for i, row in enumerate(rows, start=2):
        where = f"{path}: line {i}"
        etype = row[col["event_type"]]
        if etype not in EVENT_TYPES:
            raise DataFileError(f"{where}: unknown event_type token {etype!r}")
        if etype != event_type:
            continue
        scenario = row[col["scenario"]]
        if scenario not in SCENARIO_TOKENS:
            raise DataFileError(f"{where}: unknown scenario token {scenario!r}")
        year = _parse_int(row[col["year"]], f"{where}, column year")
        n_sims = _parse_int(row[col["n_sims"]], f"{where}, column n_sims")
        if n_sims < 1:
            raise DataFileError(f"{where}: n_sims must be >= 1")
        counts = []
        for m in MONTHS:
            z = _parse_int(row[col[m]], f"{where}, column {m}")
            if not 0 <= z <= n_sims:
                raise DataFileError(f"{where}, column {m}: count {z} outside [0, n_sims={n_sims}]")
            counts.append(z)
        key = (scenario, year)
        if key in records:
            raise DataFileError(f"{where}: duplicate row for scenario {scenario}, year {year}")
        records[key] = (counts, n_sims)
        rows_used += 1

    if not records:
        raise DataFileError(f"{path}: no rows for event_type {event_type!r}")
    years = sorted({year for (_, year) in records})
    if years[-1] - years[0] != len(years) - 1:
        raise DataFileError(f"{path}: years must be contiguous; got gaps in {years[0]}..{years[-1]}")

    T = len(years)
    counts = np.zeros((2, T, N_MONTHS), dtype=np.int64)
    sizes = np.zeros(T, dtype=np.int64)
    for t, year in enumerate(years):
        per_year_n = []
        for s_idx, scenario in enumerate(SCENARIO_TOKENS):
            key = (scenario, year)
            if key not in records:
                raise DataFileError(f"{path}: scenario {scenario} missing for year {year}")
            month_counts, n_sims = records[key]
            counts[s_idx, t] = month_counts
            per_year_n.append(n_sims)
        if per_year_n[0] != per_year_n[1]:
            raise DataFileError(f"{path}: year {year} has mismatched n_sims across scenarios")
        sizes[t] = per_year_n[0]

    panel = CountPanel(np.asarray(years), counts, sizes)
    return panel, RegionMeta(str(path), event_type, rows_used)


def write_region(path, panel: CountPanel, event_type: str) -> None:
    """Write a region count file in the normative column order."""
    if event_type not in EVENT_TYPES:
        raise ValueError(f"unknown event_type {event_type!r}")
    lines = ["\t".join(REGION_COLUMNS)]
    for s_idx, scenario in enumerate(SCENARIO_TOKENS):
        for t, year in enumerate(panel.years):
            fields = [str(int(z)) for z in panel.counts[s_idx, t]]
            fields += [event_type, scenario, str(int(year)), str(int(panel.ensemble_sizes[t]))]
            lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Covariate and bounds files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariateFile:
    gmtA_raw: np.ndarray
    gmtA: np.ndarray
    gmtN_raw: np.ndarray
    gmtN: np.ndarray

    def series(self) -> CovariateSeries:
        """The standardized series used by the model."""
        return CovariateSeries(self.gmtA, self.gmtN, standardized=True)

    def raw_series(self) -> CovariateSeries:
        return CovariateSeries(self.gmtA_raw, self.gmtN_raw, standardized=False)


def load_covariates(path) -> CovariateFile:
    path = Path(path)
    header, rows = _read_table(path)
    missing = [c for c in COVARIATE_COLUMNS if c not in header]
    if missing:
        raise DataFileError(f"{path}: missing columns {missing}")
    col = {name: header.index(name) for name in header}
    data = {name: [] for name in COVARIATE_COLUMNS}
    for i, row in enumerate(rows, start=2):
        for name in COVARIATE_COLUMNS:
            data[name].append(_parse_float(row[col[name]], f"{path}: line {i}, column {name}"))
    arrays = {name: np.asarray(vals) for name, vals in data.items()}
    if arrays["gmtA"].size < 2:
        raise DataFileError(f"{path}: need at least two years of covariates")
    for name in ("gmtA", "gmtN"):
        x = arrays[name]
        if abs(x.mean()) >= 1e-9 or abs(x.var(ddof=1) - 1.0) >= 1e-6:
            raise DataFileError(f"{path}: column {name} is not standardized (mean 0, variance 1)")
    return CovariateFile(arrays["gmtA_raw"], arrays["gmtA"], arrays["gmtN_raw"], arrays["gmtN"])


def write_covariates(path, gmtA_raw, gmtN_raw) -> None:
    """Standardize the raw series and write all four covariate columns."""
    scaled = CovariateSeries.from_raw(gmtA_raw, gmtN_raw)
    lines = ["\t".join(COVARIATE_COLUMNS)]
    for a_raw, a, n_raw, n in zip(gmtA_raw, scaled.x_A, gmtN_raw, scaled.x_N):
        lines.append("\t".join([_fmt(a_raw), _fmt(a), _fmt(n_raw), _fmt(n)]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_bounds(path) -> dict:
    """Per-region lower logit bounds (-L) by event type; all strictly negative."""
    path = Path(path)
    header, rows = _read_table(path)
    missing = [c for c in BOUNDS_COLUMNS if c not in header]
    if missing:
        raise DataFileError(f"{path}: missing columns {missing}")
    col = {name: header.index(name) for name in header}
    out = {}
    for i, row in enumerate(rows, start=2):
        region = row[col["region"]]
        if region in out:
            raise DataFileError(f"{path}: line {i}: duplicate region {region!r}")
        limits = {}
        for event, column in (("hot", "hot_limits"), ("cold", "cold_limits"), ("wet", "wet_limits")):
            val = _parse_float(row[col[column]], f"{path}: line {i}, column {column}")
            if val >= 0:
                raise DataFileError(f"{path}: line {i}, column {column}: bound must be negative")
            limits[event] = val
        out[region] = limits
    return out


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

_RESULT_FIELDS = ("median", "lower", "upper")
_RESULT_QUANTITIES = ("p_A", "p_N", "rr", "adj_rr")


def results_table_header() -> list[str]:
    cols = ["year"]
    for q in _RESULT_QUANTITIES:
        cols += [f"{q}_{f}" for f in _RESULT_FIELDS]
    return cols


def write_results(outdir, series_by_quantity: dict, summary: dict,
                  draws=None) -> list[str]:
    """Write the per-year table, the summary record, and optionally a raw
    draw dump. Returns the paths written. ``series_by_quantity`` maps the
    table quantity prefixes (p_A, p_N, rr, adj_rr) to RiskSeries.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    first = series_by_quantity[_RESULT_QUANTITIES[0]]
    years = first.years
    lines = ["\t".join(results_table_header())]
    for i, year in enumerate(years):
        fields = [str(int(year))]
        for q in _RESULT_QUANTITIES:
            s = series_by_quantity[q]
            fields += [_fmt(s.median[i]), _fmt(s.lower[i]), _fmt(s.upper[i])]
        lines.append("\t".join(fields))
    table_path = outdir / RESULTS_TABLE_NAME
    table_path.write_text("\n".join(lines) + "\n")
    written.append(str(table_path))

    summary_path = outdir / SUMMARY_NAME
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(str(summary_path))

    if draws is not None:
        written.append(write_draws(outdir / DRAWS_NAME, draws))
    return written


def draws_header(T: int) -> list[str]:
    cols = [f"alpha_{t}" for t in range(T)]
    cols += [f"delta_{t}" for t in range(T)]
    cols += [f"gamma_{j}" for j in range(N_MONTHS)]
    cols += ["beta_A0", "beta_A1", "beta_N0", "beta_N1", "tau2", "sigma2", "omega2"]
    return cols


def write_draws(path, draws) -> str:
    """One retained state per line, in the documented column order."""
    T = draws.alpha.shape[1]
    lines = ["\t".join(draws_header(T))]
    for i in range(len(draws)):
        vals = np.concatenate([
            draws.alpha[i], draws.delta[i], draws.gamma[i],
            draws.beta_A[i], draws.beta_N[i],
            [draws.tau2[i], draws.sigma2[i], draws.omega2[i]],
        ])
        lines.append("\t".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")
    return str(path)


def read_results_table(path) -> dict:
    """Re-read a per-year results table into arrays keyed by column name."""
    header, rows = _read_table(path)
    expected = results_table_header()
    if header != expected:
        raise DataFileError(f"{path}: unexpected columns {header}")
    out = {name: [] for name in header}
    for i, row in enumerate(rows, start=2):
        for name, token in zip(header, row):
            if name == "year":
                out[name].append(_parse_int(token, f"{path}: line {i}"))
            else:
                out[name].append(_parse_float(token, f"{path}: line {i}"))
    return {name: np.asarray(vals) for name, vals in out.items()}
