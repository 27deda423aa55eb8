"""Monthly panel and announcement-surprise ingestion.

Panel CSV layout: header row, first column ``date`` as ``YYYY-MM``, one
column per series, decimal point, UTF-8.  Surprise CSV layout: header
``date,ir,eq`` with ISO calendar days.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TRANSFORMS = ("level", "log_times_100", "percent")
ROLES = ("domestic", "foreign", "policy_rate", "exchange_rate", "other")

COVID_FIRST = (2020, 3)
COVID_LAST = (2021, 6)


class DataError(ValueError):
    """Base class for ingestion failures."""


class MissingColumnError(DataError):
    pass


class NonMonotoneDatesError(DataError):
    pass


class MonthGapError(DataError):
    pass


class NonPositiveLogError(DataError):
    pass


class MissingValueError(DataError):
    pass


class EventRangeError(DataError):
    pass


class FetchError(RuntimeError):
    """Remote series retrieval failed; message carries the endpoint."""

    def __init__(self, message: str, endpoint: str):
        super().__init__(f"{message} [endpoint: {endpoint}]")
        self.endpoint = endpoint


class SeriesNotFoundError(FetchError):
    pass


class MalformedPayloadError(FetchError):
    pass


class EmptySeriesError(FetchError):
    pass


@dataclass(frozen=True, order=True)
class Month:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "Month":
        """Parse ``YYYY-MM`` (a trailing ``-DD`` is tolerated and ignored)."""
        parts = text.strip().split("-")
        if len(parts) not in (2, 3):
            raise ValueError(f"not a year-month: {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    @classmethod
    def of(cls, day: dt.date) -> "Month":
        return cls(day.year, day.month)

    @classmethod
    def from_ordinal(cls, k: int) -> "Month":
        return cls(k // 12, k % 12 + 1)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def __add__(self, k: int) -> "Month":
        return Month.from_ordinal(self.ordinal + int(k))

    def __sub__(self, other: "Month") -> int:
        return self.ordinal - other.ordinal

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(start: Month, T: int) -> list[Month]:
    return [start + t for t in range(T)]


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    transform: str = "level"
    role: str = "domestic"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r} for {self.name}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for {self.name}")

    @classmethod
    def parse(cls, text: str) -> "ColumnSpec":
        """``name[:transform[:role]]``"""
        parts = [p.strip() for p in text.split(":")]
        if not parts[0] or len(parts) > 3:
            raise ValueError(f"bad column spec {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class MonthlyPanel:
    start: Month
    columns: tuple[ColumnSpec, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"panel values must be T x n with T, n >= 1, got {values.shape}")
        if values.shape[1] != len(self.columns):
            raise DataError("column metadata does not match value matrix width")
        if not np.all(np.isfinite(values)):
            raise MissingValueError("panel contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def end(self) -> Month:
        return self.start + (self.T - 1)

    def months(self) -> list[Month]:
        return month_range(self.start, self.T)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise MissingColumnError(f"no column {name!r} in panel") from None
        return self.values[:, j]

    def names_with_role(self, *roles: str) -> list[str]:
        return [c.name for c in self.columns if c.role in roles]

    def window(self, start: Month | None = None, end: Month | None = None) -> "MonthlyPanel":
        """Restrict to the closed month span ``[start, end]``."""
        lo = 0 if start is None else start - self.start
        hi = self.T - 1 if end is None else end - self.start
        if lo < 0 or hi > self.T - 1 or lo > hi:
            raise DataError(
                f"window {start}..{end} not inside panel span {self.start}..{self.end}"
            )
        return MonthlyPanel(self.start + lo, self.columns, self.values[lo : hi + 1])

    def select(self, names: Sequence[str]) -> "MonthlyPanel":
        idx = [self.names.index(n) for n in names]
        return MonthlyPanel(self.start, [self.columns[i] for i in idx], self.values[:, idx])


@dataclass(frozen=True)
class Deterministics:
    trend: np.ndarray
    covid: np.ndarray

    def matrix(self, constant: bool = True, covid: bool = True) -> np.ndarray:
        cols = [np.ones_like(self.trend)] if constant else []
        cols.append(self.trend)
        if covid:
            cols.append(self.covid)
        return np.column_stack(cols)


def build_deterministics(start: Month, T: int) -> Deterministics:
    """Linear trend ``1..T`` and the March 2020 - June 2021 indicator."""
    if T < 1:
        raise ValueError("T must be >= 1")
    lo, hi = Month(*COVID_FIRST), Month(*COVID_LAST)
    covid = np.array([1.0 if lo <= m <= hi else 0.0 for m in month_range(start, T)])
    return Deterministics(trend=np.arange(1.0, T + 1.0), covid=covid)


def _transform(name: str, raw: np.ndarray, how: str) -> np.ndarray:
    if how == "log_times_100":
        if np.any(raw <= 0):
            bad = int(np.argmax(raw <= 0))
            raise NonPositiveLogError(
                f"column {name!r} row {bad}: value {raw[bad]!r} not positive under log transform"
            )
        return 100.0 * np.log(raw)
    return raw.copy()


def _parse_float(text: str, where: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise MissingValueError(f"{where}: missing or non-numeric value {text!r}") from None
    if not math.isfinite(x):
        raise MissingValueError(f"{where}: non-finite value {text!r}")
    return x


def load_panel(
    path: str | os.PathLike,
    schema: Sequence[ColumnSpec] | Mapping[str, tuple[str, str]] | None = None,
) -> MonthlyPanel:
    """Load a canonical panel CSV.

    ``schema`` lists the columns to keep, in order, with their transform and
    role.  ``None`` keeps every column untransformed with role ``other``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]

    if schema is None:
        specs = [ColumnSpec(h, "level", "other") for h in header[1:]]
    elif isinstance(schema, Mapping):
        specs = [ColumnSpec(k, *v) for k, v in schema.items()]
    else:
        specs = list(schema)
    missing = [s.name for s in specs if s.name not in header[1:]]
    if missing:
        raise MissingColumnError(f"{path}: columns not found: {missing}")

    months = []
    for i, r in enumerate(body, start=2):
        try:
            months.append(Month.parse(r[0]))
        except ValueError as exc:
            raise DataError(f"{path} line {i}: bad date {r[0]!r}") from exc
    for i in range(1, len(months)):
        step = months[i] - months[i - 1]
        if step <= 0:
            raise NonMonotoneDatesError(f"{path}: {months[i]} follows {months[i - 1]}")
        if step > 1:
            raise MonthGapError(f"{path}: gap between {months[i - 1]} and {months[i]}")

    out = np.empty((len(body), len(specs)))
    for j, spec in enumerate(specs):
        col = header.index(spec.name)
        raw = np.array(
            [
                _parse_float(r[col] if col < len(r) else "", f"{path} line {i} column {spec.name}")
                for i, r in enumerate(body, start=2)
            ]
        )
        out[:, j] = _transform(spec.name, raw, spec.transform)
    return MonthlyPanel(months[0], specs, out)


def format_float(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_panel(panel: MonthlyPanel, path: str | os.PathLike) -> None:
    """Write post-transformation values in the canonical CSV layout."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", *panel.names])
    for m, row in zip(panel.months(), panel.values):
        w.writerow([str(m), *(format_float(x) for x in row)])
    atomic_write_text(path, buf.getvalue())


@dataclass(frozen=True)
class EventSurprises:
    """Announcement-dated surprises: ``ir`` in basis points, ``eq`` in percent."""

    dates: tuple[dt.date, ...]
    ir: np.ndarray = field(repr=False)
    eq: np.ndarray = field(repr=False)

    def __post_init__(self):
        ir = np.asarray(self.ir, dtype=float).reshape(-1)
        eq = np.asarray(self.eq, dtype=float).reshape(-1)
        dates = tuple(self.dates)
        if not (len(dates) == ir.size == eq.size):
            raise DataError("dates, ir and eq lengths differ")
        if not (np.all(np.isfinite(ir)) and np.all(np.isfinite(eq))):
            raise MissingValueError("surprises must be finite")
        for a, b in zip(dates, dates[1:]):
            if b <= a:
                raise NonMonotoneDatesError(f"event {b} does not follow {a}")
        ir.setflags(write=False)
        eq.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "ir", ir)
        object.__setattr__(self, "eq", eq)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def matrix(self) -> np.ndarray:
        """``T_e x 2`` array of (ir, eq)."""
        return np.column_stack([self.ir, self.eq])

    def between(self, start: Month | None, end: Month | None) -> "EventSurprises":
        keep = [
            i
            for i, d in enumerate(self.dates)
            if (start is None or Month.of(d) >= start) and (end is None or Month.of(d) <= end)
        ]
        return EventSurprises([self.dates[i] for i in keep], self.ir[keep], self.eq[keep])

    def scaled(self, ir_factor: float = 1.0, eq_factor: float = 1.0) -> "EventSurprises":
        return EventSurprises(self.dates, self.ir * ir_factor, self.eq * eq_factor)


def load_surprises(path: str | os.PathLike) -> EventSurprises:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in reader.fieldnames or []]
        for need in ("date", "ir", "eq"):
            if need not in fields:
                raise MissingColumnError(f"{path}: surprises file lacks column {need!r}")
        dates, ir, eq = [], [], []
        for i, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items()}
            try:
                dates.append(dt.date.fromisoformat(row["date"].strip()))
            except ValueError as exc:
                raise DataError(f"{path} line {i}: bad date {row['date']!r}") from exc
            ir.append(_parse_float(row["ir"], f"{path} line {i} ir"))
            eq.append(_parse_float(row["eq"], f"{path} line {i} eq"))
    return EventSurprises(dates, np.array(ir), np.array(eq))


def write_surprises(events: EventSurprises, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "ir", "eq"])
    for d, a, b in zip(events.dates, events.ir, events.eq):
        w.writerow([d.isoformat(), format_float(a), format_float(b)])
    atomic_write_text(path, buf.getvalue())


def aggregate_events_to_monthly(
    dates: Sequence[dt.date],
    values: np.ndarray,
    start: Month,
    end: Month,
) -> np.ndarray:
    """Sum event-level values within each calendar month of ``[start, end]``.

    ``values`` is ``(T_e,)`` or ``(T_e, k)``; months without events are zero.
    """
    values = np.asarray(values, dtype=float)
    T = end - start + 1
    if T < 1:
        raise ValueError(f"empty month span {start}..{end}")
    out = np.zeros((T,) + values.shape[1:])
    for d, v in zip(dates, values):
        t = Month.of(d) - start
        if not 0 <= t < T:
            raise EventRangeError(f"event {d} outside {start}..{end}")
        out[t] += v
    return out


# --- remote series -----------------------------------------------------------

FRED_GRAPH_CSV = "https://fred.stlouisfed.org/graph/fredgraph.csv?id={series_id}&api_key={api_key}"


@dataclass
class FetchResult:
    series_id: str
    rows: list[tuple[dt.date, float]]
    skipped: int = 0


def _session(retries: int):
    import requests
    from requests.adapters import HTTPAdapter
    from urllib3.util.retry import Retry

    s = requests.Session()
    retry = Retry(
        total=retries,
        backoff_factor=0.5,
        status_forcelist=(429, 500, 502, 503, 504),
        allowed_methods=("GET",),
        raise_on_status=False,
    )
    s.mount("http://", HTTPAdapter(max_retries=retry))
    s.mount("https://", HTTPAdapter(max_retries=retry))
    return s


def parse_series_csv(
    text: str, endpoint: str, missing_marker: str = "."
) -> tuple[list[tuple[dt.date, float]], int]:
    """Parse ``date,value`` rows; the header row is optional."""
    rows: list[tuple[dt.date, float]] = []
    skipped = 0
    reader = csv.reader(io.StringIO(text))
    for i, rec in enumerate(reader):
        if not rec or not any(c.strip() for c in rec):
            continue
        if len(rec) < 2:
            raise MalformedPayloadError(f"line {i + 1}: expected date,value got {rec!r}", endpoint)
        d_text, v_text = rec[0].strip(), rec[1].strip()
        try:
            day = dt.date.fromisoformat(d_text)
        except ValueError:
            if i == 0:
                continue  # header
            raise MalformedPayloadError(f"line {i + 1}: bad date {d_text!r}", endpoint) from None
        if v_text == missing_marker:
            skipped += 1
            continue
        try:
            rows.append((day, float(v_text)))
        except ValueError:
            raise MalformedPayloadError(f"line {i + 1}: bad value {v_text!r}", endpoint) from None
    return rows, skipped


def fetch_remote_series(
    endpoint: str,
    series_id: str,
    api_key: str,
    *,
    missing_marker: str = ".",
    cache_path: str | os.PathLike | None = None,
    timeout: float = 30.0,
    retries: int = 3,
    session=None,
) -> FetchResult:
    """GET a FRED-compatible CSV series.

    ``endpoint`` is a template with ``{series_id}`` and ``{api_key}``
    placeholders.  Rows carrying ``missing_marker`` are skipped and counted.
    If ``cache_path`` is given the raw payload is written there atomically,
    only after it parsed cleanly.
    """
    if not api_key:
        raise ValueError("api_key must be non-empty")
    url = endpoint.format(series_id=series_id, api_key=api_key)
    shown = endpoint.format(series_id=series_id, api_key="***")
    sess = session if session is not None else _session(retries)
    try:
        resp = sess.get(url, timeout=timeout)
    except Exception as exc:  # requests.RequestException and transport errors
        raise FetchError(f"request for {series_id} failed: {exc}", shown) from exc
    if resp.status_code == 404:
        raise SeriesNotFoundError(f"series {series_id} not found (HTTP 404)", shown)
    if resp.status_code >= 400:
        raise FetchError(f"HTTP {resp.status_code} for {series_id}", shown)
    rows, skipped = parse_series_csv(resp.text, shown, missing_marker)
    if skipped:
        warnings.warn(f"{series_id}: skipped {skipped} rows marked {missing_marker!r}", stacklevel=2)
    if not rows:
        raise EmptySeriesError(f"series {series_id} returned no observations", shown)
    if cache_path is not None:
        atomic_write_text(cache_path, resp.text)
    return FetchResult(series_id, rows, skipped)


def series_to_panel_rows(rows: Iterable[tuple[dt.date, float]]) -> list[tuple[Month, float]]:
    """Map daily-stamped monthly observations onto months (FRED stamps the 1st)."""
    out = [(Month.of(d), v) for d, v in rows]
    for (a, _), (b, _) in zip(out, out[1:]):
        if b <= a:
            raise NonMonotoneDatesError(f"series has repeated or decreasing month {b}")
    return out
