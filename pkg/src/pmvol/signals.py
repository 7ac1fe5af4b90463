"""Daily repricing signals built from event-contract quotes.

The core signal for a series is the dollar-volume-weighted mean of daily
closing-probability changes over the contracts active that day. Variants:
absolute value, sign-adjusted directional, five-day EMA of the absolute
signal, and a cross-sectional composite over all series.

Panel column naming: ``{series_id}.{variant}`` with variant in
{vw, abs, dir, ema5}; the cross-sectional composite is ``ALL.composite``.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .market_data import AlignedPanel, ContractQuote, TradingCalendar, as_frame

ORIENTATIONS = ("raw", "dovish")
COMPOSITE_COLUMN = "ALL.composite"

DEFAULT_MIN_COVERAGE = 50


@dataclass(frozen=True)
class SignalSeries:
    """Per-series daily signal values on calendar dates; NaN = no qualifying contracts."""

    series_id: str
    dates: pd.DatetimeIndex
    vw_delta: np.ndarray
    abs_delta: np.ndarray
    directional: np.ndarray
    orientation: str = "raw"

    def __post_init__(self):
        n = len(self.dates)
        if not (len(self.vw_delta) == len(self.abs_delta) == len(self.directional) == n):
            raise ValidationError("signal arrays must match the date index length")

    def vw(self) -> pd.Series:
        return pd.Series(self.vw_delta, index=self.dates, name=f"{self.series_id}.vw")

    def abs(self) -> pd.Series:
        return pd.Series(self.abs_delta, index=self.dates, name=f"{self.series_id}.abs")

    def dir(self) -> pd.Series:
        return pd.Series(self.directional, index=self.dates, name=f"{self.series_id}.dir")


def _prev_panel_date(calendar: TradingCalendar, date: dt.date) -> dt.date | None:
    dates = calendar.included_dates
    try:
        i = dates.index(date)
    except ValueError:
        return None
    return dates[i - 1] if i > 0 else None


def active_set(quotes: Iterable[ContractQuote], date: dt.date, calendar: TradingCalendar) -> set[str]:
    """Contracts of one series with closes on both adjacent panel dates.

    A contract missing either close has no defined probability change and is
    excluded; an empty set is a valid result (the signal is missing that day).
    """
    prev = _prev_panel_date(calendar, date)
    if prev is None:
        return set()
    have_prev, have_now = set(), set()
    for q in quotes:
        if q.date == prev:
            have_prev.add(q.contract_id)
        elif q.date == date:
            have_now.add(q.contract_id)
    return have_prev & have_now


def volume_weighted_delta(quotes: Iterable[ContractQuote], date: dt.date,
                          calendar: TradingCalendar) -> float:
    """Volume-weighted mean probability change over the active set.

    Returns NaN when no contract is active or total dollar volume is zero:
    a day on which nothing traded carries no repricing information, which is
    not the same as a zero signal.
    """
    quotes = list(quotes)
    prev = _prev_panel_date(calendar, date)
    active = active_set(quotes, date, calendar)
    if prev is None or not active:
        return float("nan")
    prev_close = {q.contract_id: q.close_prob for q in quotes if q.date == prev}
    num = 0.0
    den = 0.0
    for q in quotes:
        if q.date == date and q.contract_id in active:
            num += q.dollar_volume * (q.close_prob - prev_close[q.contract_id])
            den += q.dollar_volume
    if den == 0.0:
        return float("nan")
    return num / den


def directional_signal(vw_delta: float, orientation: str) -> float:
    """Sign-adjust a raw delta: 'dovish' flips so that downward repricing is positive."""
    if orientation == "raw":
        return vw_delta
    if orientation == "dovish":
        return -vw_delta
    raise ValidationError(f"unknown orientation {orientation!r}; expected one of {ORIENTATIONS}")


def ema_signal(series: pd.Series, span: int = 5) -> pd.Series:
    """Recursive EMA with smoothing 2/(span+1), seeded at the first observation.

    Missing values are skipped (the recursion updates only on observed days)
    and the output stays missing on those days.
    """
    if span < 1:
        raise ValidationError(f"span must be >= 1, got {span}")
    if len(series) == 0:
        return series.astype(float)
    out = series.ewm(span=span, adjust=False, ignore_na=True).mean()
    return out.where(series.notna())


def composite_signal(abs_values: Sequence[float]) -> float:
    """Unweighted mean of the absolute signals present on one date; NaN if none."""
    present = [v for v in abs_values if not (isinstance(v, float) and math.isnan(v))]
    if not present:
        return float("nan")
    return float(np.mean(present))


# ---------------------------------------------------------------------------
# Bulk construction
# ---------------------------------------------------------------------------

def build_signal_series(
    quotes: Iterable[ContractQuote],
    calendar: TradingCalendar,
    orientations: Mapping[str, str] | None = None,
) -> dict[str, SignalSeries]:
    """Construct every series' daily signals over the calendar.

    Vectorized equivalent of calling volume_weighted_delta date by date:
    quotes outside the calendar are dropped, probability changes are taken
    between consecutive panel dates, and weighting uses same-day dollar
    volume. Zero-total-volume or empty active sets yield NaN.
    """
    orientations = dict(orientations or {})
    idx = calendar.index()
    rows = [(q.series_id, q.contract_id, pd.Timestamp(q.date), q.close_prob, q.dollar_volume)
            for q in quotes if q.date in calendar]
    out: dict[str, SignalSeries] = {}
    if not rows:
        return out
    df = pd.DataFrame(rows, columns=["series", "contract", "date", "prob", "vol"])
    for series_id, grp in df.groupby("series", sort=True):
        probs = grp.pivot(index="date", columns="contract", values="prob").reindex(idx)
        vols = grp.pivot(index="date", columns="contract", values="vol").reindex(idx)
        dp = probs.diff()
        active = dp.notna() & vols.notna()
        w = vols.where(active)
        num = (w * dp).sum(axis=1, min_count=1)
        den = w.sum(axis=1, min_count=1)
        vw = (num / den.where(den > 0)).to_numpy()
        orientation = orientations.get(series_id, "raw")
        directional = np.array([directional_signal(v, orientation) for v in vw])
        out[series_id] = SignalSeries(
            series_id=series_id,
            dates=idx,
            vw_delta=vw,
            abs_delta=np.abs(vw),
            directional=directional,
            orientation=orientation,
        )
    return out


def signal_frame(series_map: Mapping[str, SignalSeries], ema_span: int = 5) -> pd.DataFrame:
    """Emit all signal variants as panel columns, plus the cross-sectional composite."""
    cols: dict[str, pd.Series] = {}
    abs_cols = []
    for series_id in sorted(series_map):
        s = series_map[series_id]
        cols[f"{series_id}.vw"] = s.vw()
        cols[f"{series_id}.abs"] = s.abs()
        cols[f"{series_id}.dir"] = s.dir()
        cols[f"{series_id}.ema{ema_span}"] = ema_signal(s.abs(), span=ema_span)
        abs_cols.append(s.abs())
    frame = pd.DataFrame(cols)
    if abs_cols:
        frame[COMPOSITE_COLUMN] = pd.concat(abs_cols, axis=1).mean(axis=1)
    return frame


def coverage_report(
    series_map: Mapping[str, SignalSeries],
    returns: pd.Series,
    min_coverage: int = DEFAULT_MIN_COVERAGE,
) -> pd.DataFrame:
    """Usable observation counts per series: lagged signal present and matched return.

    A series below ``min_coverage`` usable observations is flagged excluded;
    a series with no signal at all is reported as never active.
    """
    rows = []
    for series_id in sorted(series_map):
        s = series_map[series_id]
        sig = s.vw()
        usable = int((sig.shift(1).notna() & returns.reindex(sig.index).notna()).sum())
        present = sig.dropna()
        if len(present) == 0:
            first_active = "never active"
        else:
            d = present.index[0]
            first_active = f"{d.year}-Q{(d.month - 1) // 3 + 1}"
        rows.append({
            "series_id": series_id,
            "usable_obs": usable,
            "first_active": first_active,
            "excluded": usable < min_coverage,
        })
    return pd.DataFrame(rows, columns=["series_id", "usable_obs", "first_active", "excluded"])


def attach_signals(panel: AlignedPanel, series_map: Mapping[str, SignalSeries],
                   ema_span: int = 5) -> AlignedPanel:
    frame = as_frame(panel)
    return AlignedPanel(frame).with_columns(signal_frame(series_map, ema_span=ema_span))
