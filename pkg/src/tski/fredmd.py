"""Monthly macro panel ingestion and the rolling-window inference design.

Input layout (FRED-MD style): a header row naming the date column and
the series, a second row carrying one transform code per series, then
one row per month. Transform codes: 1 level, 2 first difference,
3 second difference, 4 log, 5 log first difference, 6 log second
difference, 7 first difference of the percentage change. Empty cells
are missing values.

The design treats a designated price-index series as the response: it
is converted to a month-over-month percentage inflation series, which
also re-enters the covariate block (its own lags give the
autoregressive structure). Each rolling window spans 60 consecutive
usable months (months where inflation is defined; the first raw month
is consumed by the inflation transform). A design row anchored at
month t stacks all transformed covariates at t and t-1 against the
response at t+1, so a window contributes up to 58 rows, all drawn from
inside the window. Rows with any missing value are dropped; a window
that loses more than max_drop_frac of its rows is discarded and logged.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientHistory,
    MalformedCsv,
    NonPositiveCpi,
    NonPositiveForLog,
    UnknownTcode,
)
from .filters import tski_run
from .knockoffs import fit_knockoff_model
from .numerics import RngStream, standardize_columns

WINDOW_MONTHS = 60
DEFAULT_RESPONSE = "CPIAUCSL"
MAX_DROP_FRAC = 0.1


@dataclass(frozen=True)
class MacroPanel:
    dates: tuple  # (year, month) pairs, strictly increasing by one month
    names: tuple
    tcodes: tuple
    values: np.ndarray  # months x series, NaN marks missing

    @property
    def n_months(self):
        return len(self.dates)


@dataclass(frozen=True)
class WindowDesign:
    start: tuple  # first usable month covered, (year, month)
    end: tuple
    y: np.ndarray
    x: np.ndarray
    dropped_rows: int


@dataclass(frozen=True)
class RollingDesign:
    windows: tuple
    colnames: tuple  # current-month names then their _lag1 twins
    response: str
    discarded: tuple  # (end month, reason) for windows over the drop limit
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FrequencyReport:
    window_freq: np.ndarray  # per retained window: any-selection average
    cov_freq: np.ndarray  # per covariate: selected-in-any-window average
    window_ends: tuple
    colnames: tuple
    repeats: int
    failures: tuple = ()


def _parse_date(token, row):
    token = token.strip()
    for fmt in ("slash", "dash"):
        try:
            if fmt == "slash" and "/" in token:
                month, _, year = token.split("/")
                return int(year), int(month)
            if fmt == "dash" and "-" in token:
                parts = token.split("-")
                return int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            break
    raise MalformedCsv(row, 1, f"cannot parse date {token!r}")


def _month_diff(a, b):
    return (b[0] - a[0]) * 12 + (b[1] - a[1])


def parse_panel(data):
    """Parse FRED-MD-layout CSV bytes or text into a MacroPanel."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if len(rows) < 3:
        raise MalformedCsv(1, 1, "need a header row, a transform row, and data rows")
    header = rows[0]
    if len(header) < 2:
        raise MalformedCsv(1, 1, "no series columns found")
    names = tuple(name.strip() for name in header[1:])
    n_series = len(names)

    tr_row = rows[1]
    if len(tr_row) != n_series + 1:
        raise MalformedCsv(2, len(tr_row), f"transform row must have {n_series + 1} cells")
    tcodes = []
    for c, cell in enumerate(tr_row[1:], start=2):
        text = cell.strip()
        try:
            code = int(float(text))
        except ValueError:
            raise UnknownTcode(f"transform code {text!r} for series {names[c - 2]}")
        if not 1 <= code <= 7 or float(text) != code:
            raise UnknownTcode(f"transform code {text!r} for series {names[c - 2]}")
        tcodes.append(code)

    dates = []
    values = np.full((len(rows) - 2, n_series), np.nan)
    for r, row in enumerate(rows[2:], start=3):
        if len(row) != n_series + 1:
            raise MalformedCsv(r, len(row), f"expected {n_series + 1} cells")
        dates.append(_parse_date(row[0], r))
        for c, cell in enumerate(row[1:], start=2):
            text = cell.strip()
            if not text:
                continue
            try:
                values[r - 3, c - 2] = float(text)
            except ValueError:
                raise MalformedCsv(r, c, f"not a number: {text!r}")
    for i in range(1, len(dates)):
        if _month_diff(dates[i - 1], dates[i]) != 1:
            raise MalformedCsv(i + 3, 1, f"dates must advance by one month, got {dates[i - 1]} -> {dates[i]}")
    return MacroPanel(dates=tuple(dates), names=names, tcodes=tuple(tcodes), values=values)


def apply_tcode(series, code):
    """Apply one FRED-MD transform; leading undefined entries become NaN."""
    x = np.asarray(series, dtype=float)
    if code == 1:
        return x.copy()
    if code == 2:
        return np.concatenate([[np.nan], np.diff(x)])
    if code == 3:
        return np.concatenate([[np.nan, np.nan], np.diff(x, 2)])
    if code in (4, 5, 6):
        if np.any(x[~np.isnan(x)] <= 0):
            raise NonPositiveForLog(f"transform {code} needs positive values")
        lx = np.log(x)
        if code == 4:
            return lx
        if code == 5:
            return np.concatenate([[np.nan], np.diff(lx)])
        return np.concatenate([[np.nan, np.nan], np.diff(lx, 2)])
    if code == 7:
        ratio = x[1:] / x[:-1] - 1.0
        return np.concatenate([[np.nan, np.nan], np.diff(ratio)])
    raise UnknownTcode(f"transform code {code}")


def invert_tcode(transformed, code, initial):
    """Undo transforms 1, 2, 4, 5 given the original leading value."""
    t = np.asarray(transformed, dtype=float)
    if code == 1:
        return t.copy()
    if code == 2:
        return initial + np.concatenate([[0.0], np.cumsum(t[1:])])
    if code == 4:
        return np.exp(t)
    if code == 5:
        return np.exp(np.log(initial) + np.concatenate([[0.0], np.cumsum(t[1:])]))
    raise UnknownTcode(f"transform code {code} is not invertible here")


def compute_inflation(cpi):
    """Month-over-month percentage change of a positive price index."""
    cpi = np.asarray(cpi, dtype=float)
    if np.any(cpi[~np.isnan(cpi)] <= 0):
        raise NonPositiveCpi("price index must be strictly positive")
    out = np.full(cpi.shape, np.nan)
    out[1:] = (cpi[1:] - cpi[:-1]) / cpi[:-1] * 100.0
    return out


def build_rolling(panel, window_months=WINDOW_MONTHS, response=DEFAULT_RESPONSE,
                  max_drop_frac=MAX_DROP_FRAC):
    """Slice the transformed panel into one-month-stepped rolling windows."""
    if response not in panel.names:
        raise MalformedCsv(1, 1, f"response series {response!r} not in the panel")
    resp_idx = panel.names.index(response)

    n_months, n_series = panel.values.shape
    transformed = np.empty_like(panel.values)
    for s in range(n_series):
        if s == resp_idx:
            transformed[:, s] = compute_inflation(panel.values[:, s])
        else:
            transformed[:, s] = apply_tcode(panel.values[:, s], panel.tcodes[s])
    inflation = transformed[:, resp_idx]

    usable = np.arange(1, n_months)  # inflation consumes the first month
    if usable.size < window_months:
        raise InsufficientHistory(
            f"{usable.size} usable months < window of {window_months}"
        )
    colnames = tuple(panel.names) + tuple(f"{name}_lag1" for name in panel.names)

    windows = []
    discarded = []
    total_dropped = 0
    for w in range(usable.size - window_months + 1):
        months = usable[w : w + window_months]
        anchors = months[1:-1]  # need t-1 and t+1 inside the window
        rows_x = np.hstack([transformed[anchors], transformed[anchors - 1]])
        rows_y = inflation[anchors + 1]
        keep = ~(np.isnan(rows_x).any(axis=1) | np.isnan(rows_y))
        dropped = int(np.count_nonzero(~keep))
        end_date = panel.dates[months[-1]]
        if dropped > max_drop_frac * anchors.size:
            discarded.append((end_date, f"{dropped}/{anchors.size} rows missing"))
            continue
        total_dropped += dropped
        windows.append(
            WindowDesign(
                start=panel.dates[months[0]],
                end=end_date,
                y=rows_y[keep],
                x=rows_x[keep],
                dropped_rows=dropped,
            )
        )
    if not windows:
        raise InsufficientHistory("every candidate window was discarded")
    meta = {
        "response": response,
        "window_months": window_months,
        "max_drop_frac": max_drop_frac,
        "dropped_rows_total": total_dropped,
        "discarded_windows": len(discarded),
    }
    return RollingDesign(
        windows=tuple(windows),
        colnames=colnames,
        response=response,
        discarded=tuple(discarded),
        meta=meta,
    )


def rolling_inference(design, params, repeats, rng: RngStream):
    """Repeat TSKI over every window; aggregate selection indicators.

    Window w, repetition r uses the substream rng.child(w, r). Columns
    that are constant inside a window are excluded from that window's
    fit (they carry no selectable signal). Windows that cannot run at
    all are listed in failures and contribute zero selection frequency.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n_windows = len(design.windows)
    n_cols = len(design.colnames)
    any_sel = np.zeros((repeats, n_windows))
    cov_sel = np.zeros((repeats, n_cols))
    failures = []
    for w, window in enumerate(design.windows):
        sds = window.x.std(axis=0)
        live = np.nonzero(sds > 1e-12)[0]
        if live.size == 0 or window.y.std() <= 1e-12:
            failures.append((window.end, "window has no varying data"))
            continue
        std_x, _ = standardize_columns(window.x[:, live])
        try:
            model = fit_knockoff_model(std_x, params.shrinkage)
        except Exception as exc:
            failures.append((window.end, f"{type(exc).__name__}: {exc}"))
            continue
        for r in range(repeats):
            try:
                result = tski_run(window.y, std_x, model, params, rng.child(w, r))
            except Exception as exc:
                failures.append((window.end, f"rep {r}: {type(exc).__name__}: {exc}"))
                continue
            if result.selected:
                any_sel[r, w] = 1.0
                for j in result.selected:
                    cov_sel[r, int(live[j - 1])] = 1.0
    return FrequencyReport(
        window_freq=any_sel.mean(axis=0),
        cov_freq=cov_sel.mean(axis=0),
        window_ends=tuple(win.end for win in design.windows),
        colnames=design.colnames,
        repeats=repeats,
        failures=tuple(failures),
    )


def write_frequency_csvs(report, design, prefix, extra_meta=None):
    """Two CSVs (per-window, per-covariate) plus a JSON metadata block."""
    win_path = f"{prefix}_windows.csv"
    cov_path = f"{prefix}_covariates.csv"
    meta_path = f"{prefix}_meta.json"
    with open(win_path, "w") as fh:
        fh.write("window_end,any_selection_freq\n")
        for (year, month), freq in zip(report.window_ends, report.window_freq):
            fh.write(f"{year:04d}-{month:02d},{freq:.17g}\n")
    with open(cov_path, "w") as fh:
        fh.write("covariate,selection_freq\n")
        for name, freq in zip(report.colnames, report.cov_freq):
            fh.write(f"{name},{freq:.17g}\n")
    meta = dict(design.meta)
    meta["repeats"] = report.repeats
    meta["failures"] = [f"{end}: {msg}" for end, msg in report.failures]
    meta["discarded"] = [f"{end}: {msg}" for end, msg in design.discarded]
    if extra_meta:
        meta.update(extra_meta)
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return win_path, cov_path, meta_path
