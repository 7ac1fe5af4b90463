"""Ingestion and alignment of event-contract quotes, crypto prices, and market controls.

Flat files are CSV with a header row, ISO-8601 dates, empty field = missing,
UTF-8. Optional HTTP adapters normalize API responses to the same row schema
before validation, so everything downstream of ingestion is source-agnostic.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataIOError, SchemaError, ValidationError

QUOTE_COLUMNS = ("series_id", "contract_id", "date", "close_prob", "dollar_volume", "open_interest")
PRICE_COLUMNS = ("asset_id", "date", "close")
CONTROL_COLUMNS = ("date", "vix_level", "dxy_return", "spx_return",
                   "ff_implied_change", "ust10y_return", "dvol_level")
CONTROL_OPTIONAL = ("ff_implied_change", "ust10y_return", "dvol_level")

_PANEL_MAGIC = "# pmvol-panel v1"
_PANEL_FLOAT_TAG = "f8"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractQuote:
    """One contract's daily close record: price is a probability in [0, 1]."""

    series_id: str
    contract_id: str
    date: dt.date
    close_prob: float
    dollar_volume: float
    open_interest: float

    def __post_init__(self):
        if not (0.0 <= self.close_prob <= 1.0):
            raise ValidationError(f"close_prob {self.close_prob} outside [0, 1]")
        if self.dollar_volume < 0:
            raise ValidationError(f"dollar_volume {self.dollar_volume} < 0")
        if self.open_interest < 0:
            raise ValidationError(f"open_interest {self.open_interest} < 0")


@dataclass(frozen=True)
class PriceBar:
    asset_id: str
    date: dt.date
    close: float

    def __post_init__(self):
        if not (self.close > 0):
            raise ValidationError(f"close {self.close} must be > 0")


@dataclass(frozen=True)
class ControlRecord:
    date: dt.date
    vix_level: float | None
    dxy_return: float | None
    spx_return: float | None
    ff_implied_change: float | None = None
    ust10y_return: float | None = None
    dvol_level: float | None = None

    def __post_init__(self):
        if self.vix_level is not None and not (self.vix_level > 0):
            raise ValidationError(f"vix_level {self.vix_level} must be > 0 when present")


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered weekday dates with configured holidays removed."""

    included_dates: tuple[dt.date, ...]

    def __post_init__(self):
        prev = None
        for d in self.included_dates:
            if d.weekday() >= 5:
                raise ValidationError(f"calendar contains weekend date {d}")
            if prev is not None and d <= prev:
                raise ValidationError("calendar dates must be strictly increasing")
            prev = d

    def __len__(self):
        return len(self.included_dates)

    def __contains__(self, d: dt.date) -> bool:
        return d in self._date_set

    def __iter__(self) -> Iterator[dt.date]:
        return iter(self.included_dates)

    @property
    def _date_set(self) -> frozenset:
        return frozenset(self.included_dates)

    def index(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex([pd.Timestamp(d) for d in self.included_dates], name="date")


@dataclass(frozen=True)
class AlignedPanel:
    """Date-indexed table of signals, returns, targets, and controls.

    ``frame`` has a strictly increasing DatetimeIndex named "date" and float
    columns; NaN encodes missing. Immutable by convention: operations return
    new panels rather than mutating ``frame``.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        idx = self.frame.index
        if not isinstance(idx, pd.DatetimeIndex):
            raise ValidationError("panel index must be a DatetimeIndex")
        if len(idx) > 1 and not idx.is_monotonic_increasing:
            raise ValidationError("panel dates must be increasing")
        if idx.has_duplicates:
            raise ValidationError("panel dates must be unique")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def with_columns(self, new: pd.DataFrame | Mapping[str, pd.Series]) -> "AlignedPanel":
        extra = pd.DataFrame(new).reindex(self.frame.index)
        merged = self.frame.copy()
        for c in extra.columns:
            merged[c] = extra[c].astype(float)
        return AlignedPanel(merged)


def as_frame(panel) -> pd.DataFrame:
    """Accept an AlignedPanel or a bare DataFrame."""
    return panel.frame if isinstance(panel, AlignedPanel) else panel


def panel_equal(a: AlignedPanel, b: AlignedPanel) -> bool:
    """Cell-for-cell equality including missingness."""
    fa, fb = a.frame, b.frame
    if list(fa.columns) != list(fb.columns) or not fa.index.equals(fb.index):
        return False
    for c in fa.columns:
        x, y = fa[c].to_numpy(), fb[c].to_numpy()
        same = (x == y) | (np.isnan(x) & np.isnan(y))
        if not same.all():
            return False
    return True


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RejectedRow:
    row_id: str
    reason: str


@dataclass
class IngestResult:
    records: list
    rejected: list[RejectedRow] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


@dataclass(frozen=True)
class ApiEndpoint:
    """Descriptor for an HTTP source; URL and token come from the environment.

    The endpoint must return a JSON array of objects whose keys match the CSV
    column names, or an object with a ``records`` array in that shape.
    """

    url_env: str
    token_env: str = "PMVOL_API_TOKEN"
    params: Mapping[str, str] | None = None

    def fetch_rows(self) -> list[dict]:
        import requests

        url = os.environ.get(self.url_env)
        if not url:
            raise DataIOError(f"environment variable {self.url_env} is not set")
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = requests.get(url, params=dict(self.params or {}), headers=headers, timeout=30)
        if resp.status_code != 200:
            raise DataIOError(f"API request to {url} failed with status {resp.status_code}")
        return rows_from_payload(resp.json())


def rows_from_payload(payload) -> list[dict]:
    """Normalize a JSON API payload to a list of flat row dicts."""
    if isinstance(payload, Mapping) and "records" in payload:
        payload = payload["records"]
    if not isinstance(payload, list):
        raise SchemaError("API payload must be a JSON array of records")
    rows = []
    for rec in payload:
        if not isinstance(rec, Mapping):
            raise SchemaError("API record is not an object")
        rows.append({str(k): ("" if v is None else str(v)) for k, v in rec.items()})
    return rows


def _iter_source_rows(source, expected_columns: Sequence[str]) -> Iterator[tuple[str, dict]]:
    if isinstance(source, ApiEndpoint):
        for i, row in enumerate(source.fetch_rows()):
            yield f"record {i + 1}", row
        return
    path = Path(source)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected header {','.join(expected_columns)}")
        missing = [c for c in expected_columns if c not in reader.fieldnames]
        required = [c for c in missing if c not in CONTROL_OPTIONAL]
        if required:
            raise SchemaError(f"{path}: missing required columns {required}")
        for i, row in enumerate(reader):
            yield f"{path.name}:{i + 2}", row  # header is line 1


def _parse_date(raw: str) -> dt.date:
    return dt.date.fromisoformat(raw.strip())


def _parse_float(raw: str, *, optional: bool = False) -> float | None:
    raw = (raw or "").strip()
    if raw == "":
        if optional:
            return None
        raise ValueError("empty value for required field")
    value = float(raw)
    if math.isnan(value):
        raise ValueError("NaN is not a valid field value")
    return value


def ingest_contract_quotes(source) -> IngestResult:
    """Parse and validate contract quotes from a CSV path or ApiEndpoint.

    Rows that fail to parse or violate invariants (probability outside
    [0, 1], negative volume, duplicate key) are rejected and reported with
    their row identifier; valid rows are returned as ContractQuote records.
    """
    records: list[ContractQuote] = []
    rejected: list[RejectedRow] = []
    seen: set[tuple] = set()
    for row_id, row in _iter_source_rows(source, QUOTE_COLUMNS):
        try:
            quote = ContractQuote(
                series_id=row["series_id"].strip(),
                contract_id=row["contract_id"].strip(),
                date=_parse_date(row["date"]),
                close_prob=_parse_float(row["close_prob"]),
                dollar_volume=_parse_float(row["dollar_volume"]),
                open_interest=_parse_float(row["open_interest"]),
            )
            if not quote.series_id or not quote.contract_id:
                raise ValidationError("empty series_id or contract_id")
            key = (quote.series_id, quote.contract_id, quote.date)
            if key in seen:
                raise ValidationError(f"duplicate quote for {key}")
            seen.add(key)
        except (KeyError, ValueError, ValidationError) as exc:
            rejected.append(RejectedRow(row_id, str(exc)))
            continue
        records.append(quote)
    return IngestResult(records, rejected)


def ingest_price_bars(source) -> IngestResult:
    records: list[PriceBar] = []
    rejected: list[RejectedRow] = []
    seen: set[tuple] = set()
    for row_id, row in _iter_source_rows(source, PRICE_COLUMNS):
        try:
            bar = PriceBar(
                asset_id=row["asset_id"].strip(),
                date=_parse_date(row["date"]),
                close=_parse_float(row["close"]),
            )
            key = (bar.asset_id, bar.date)
            if key in seen:
                raise ValidationError(f"duplicate price bar for {key}")
            seen.add(key)
        except (KeyError, ValueError, ValidationError) as exc:
            rejected.append(RejectedRow(row_id, str(exc)))
            continue
        records.append(bar)
    return IngestResult(records, rejected)


def ingest_controls(source) -> IngestResult:
    records: list[ControlRecord] = []
    rejected: list[RejectedRow] = []
    seen: set[dt.date] = set()
    for row_id, row in _iter_source_rows(source, CONTROL_COLUMNS):
        try:
            rec = ControlRecord(
                date=_parse_date(row["date"]),
                vix_level=_parse_float(row.get("vix_level", ""), optional=True),
                dxy_return=_parse_float(row.get("dxy_return", ""), optional=True),
                spx_return=_parse_float(row.get("spx_return", ""), optional=True),
                ff_implied_change=_parse_float(row.get("ff_implied_change", ""), optional=True),
                ust10y_return=_parse_float(row.get("ust10y_return", ""), optional=True),
                dvol_level=_parse_float(row.get("dvol_level", ""), optional=True),
            )
            if rec.date in seen:
                raise ValidationError(f"duplicate control record for {rec.date}")
            seen.add(rec.date)
        except (KeyError, ValueError, ValidationError) as exc:
            rejected.append(RejectedRow(row_id, str(exc)))
            continue
        records.append(rec)
    return IngestResult(records, rejected)


# ---------------------------------------------------------------------------
# Calendar
# ---------------------------------------------------------------------------

def build_calendar(start: dt.date, end: dt.date, holidays: Iterable[dt.date] = ()) -> TradingCalendar:
    """All weekdays in [start, end] that are not configured holidays, in order."""
    if start > end:
        raise ValidationError(f"calendar start {start} after end {end}")
    holiday_set = set(holidays)
    days = []
    d = start
    one = dt.timedelta(days=1)
    while d <= end:
        if d.weekday() < 5 and d not in holiday_set:
            days.append(d)
        d += one
    return TradingCalendar(tuple(days))


def load_holidays(path) -> list[dt.date]:
    """Read a holiday file: one ISO date per line, '#' comments allowed."""
    out = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read holiday file {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(dt.date.fromisoformat(line))
    return out


def default_holidays() -> list[dt.date]:
    """US holidays shipped with the package (observed dates, 2023-2026)."""
    return load_holidays(Path(__file__).parent / "data" / "us_holidays.txt")


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

def align_panel(
    prices: Sequence[PriceBar],
    controls: Sequence[ControlRecord],
    calendar: TradingCalendar,
    signals: pd.DataFrame | None = None,
) -> AlignedPanel:
    """Merge prices, controls, and optional pre-built signal columns on the calendar.

    One row per calendar date. Log returns are computed between consecutive
    panel dates (a Friday->Monday gap is one return). Controls and signal
    columns join on the same calendar date. Missing stays missing; nothing is
    zero-filled or forward-filled.
    """
    if len(calendar) == 0:
        raise ValidationError("empty calendar")
    idx = calendar.index()
    frame = pd.DataFrame(index=idx)

    by_asset: dict[str, dict] = {}
    for bar in prices:
        if bar.date in calendar:
            by_asset.setdefault(bar.asset_id, {})[pd.Timestamp(bar.date)] = bar.close
    for asset in sorted(by_asset):
        close = pd.Series(by_asset[asset], dtype=float).reindex(idx)
        frame[f"{asset}.close"] = close
        frame[f"{asset}.ret"] = np.log(close / close.shift(1))

    ctrl_rows = {}
    for rec in controls:
        if rec.date in calendar:
            ctrl_rows[pd.Timestamp(rec.date)] = {
                "vix_level": rec.vix_level,
                "dxy_return": rec.dxy_return,
                "spx_return": rec.spx_return,
                "ff_implied_change": rec.ff_implied_change,
                "ust10y_return": rec.ust10y_return,
                "dvol_level": rec.dvol_level,
            }
    if ctrl_rows:
        ctrl = pd.DataFrame.from_dict(ctrl_rows, orient="index").reindex(idx).astype(float)
        for c in CONTROL_COLUMNS[1:]:
            frame[c] = ctrl[c]

    if signals is not None:
        for c in signals.columns:
            frame[c] = signals[c].reindex(idx).astype(float)

    if frame.shape[1] == 0 or frame.notna().to_numpy().sum() == 0:
        raise ValidationError("no input dates overlap the calendar")
    return AlignedPanel(frame.astype(float))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _format_cell(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def persist_panel(panel: AlignedPanel, path) -> None:
    """Write a panel so that load_panel(persist_panel(p)) == p cell-for-cell."""
    frame = panel.frame
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            handle.write(_PANEL_MAGIC + "\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["date"] + [f"{c}:{_PANEL_FLOAT_TAG}" for c in frame.columns])
            for date, row in zip(frame.index, frame.to_numpy()):
                writer.writerow([date.date().isoformat()] + [_format_cell(v) for v in row])
    except OSError as exc:
        raise DataIOError(f"cannot write panel to {path}: {exc}") from exc


def load_panel(path) -> AlignedPanel:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            magic = handle.readline().rstrip("\n")
            if magic != _PANEL_MAGIC:
                raise SchemaError(f"{path}: not a panel file (bad magic line {magic!r})")
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: missing header row") from None
            if not header or header[0] != "date":
                raise SchemaError(f"{path}: first column must be 'date'")
            columns = []
            for cell in header[1:]:
                name, sep, tag = cell.rpartition(":")
                if not sep or tag != _PANEL_FLOAT_TAG:
                    raise SchemaError(f"{path}: unknown column type tag in {cell!r}")
                columns.append(name)
            dates, rows = [], []
            for line_no, row in enumerate(reader, start=3):
                if len(row) != len(columns) + 1:
                    raise SchemaError(f"{path}:{line_no}: expected {len(columns) + 1} fields")
                dates.append(pd.Timestamp(row[0]))
                rows.append([float(v) if v != "" else np.nan for v in row[1:]])
    except OSError as exc:
        raise DataIOError(f"cannot read panel from {path}: {exc}") from exc
    frame = pd.DataFrame(rows, index=pd.DatetimeIndex(dates, name="date"), columns=columns, dtype=float)
    return AlignedPanel(frame)
