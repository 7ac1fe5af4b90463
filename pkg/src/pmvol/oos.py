"""Expanding-window out-of-sample comparison of nested forecasting models.

For each origin past the initial window, both models are refit on rows whose
target windows are fully realized by the origin date (an h-day target dated s
uses returns through s+h, so training keeps rows with s+h <= t). This is what
makes the no-look-ahead property hold exactly: nothing dated after the origin
can reach a forecast. The expanding historical mean benchmark uses the same
training rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ComputationError, ValidationError
from .market_data import as_frame
from .regression import ModelSpec, hac_covariance

DEFAULT_INITIAL_WINDOW = 120
CW_MIN_RECORDS = 30


@dataclass(frozen=True)
class ForecastRecord:
    date: pd.Timestamp
    y_true: float
    yhat_baseline: float
    yhat_augmented: float
    mean_benchmark: float

    @property
    def e_b(self) -> float:
        return self.y_true - self.yhat_baseline

    @property
    def e_a(self) -> float:
        return self.y_true - self.yhat_augmented


@dataclass
class OOSRun:
    records: list[ForecastRecord]
    msfe_ratio: float
    oos_r2: float
    cw_stat: float
    cw_pvalue: float
    cssed: np.ndarray

    @property
    def n_oos(self) -> int:
        return len(self.records)


def _design_arrays(spec: ModelSpec, frame: pd.DataFrame) -> pd.DataFrame:
    out = {}
    for term in spec.terms:
        out[term.name] = term.values(frame)
    return pd.DataFrame(out, index=frame.index)


def expanding_forecasts(
    baseline: ModelSpec,
    augmented: ModelSpec,
    panel,
    initial: int = DEFAULT_INITIAL_WINDOW,
    horizon: int = 5,
) -> list[ForecastRecord]:
    """Daily-refit expanding-window forecasts from both models at every origin.

    Rows enter once they are complete for the augmented model's columns, so
    both models see identical samples. Forecasting starts at the usable row
    with index ``initial`` (0-based); training at each origin consists of the
    earlier usable rows whose h-day target windows have closed.
    """
    if baseline.target != augmented.target:
        raise ValidationError("baseline and augmented specs must share the target")
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    frame = as_frame(panel)
    Xb_df = _design_arrays(baseline, frame)
    Xa_df = _design_arrays(augmented, frame)
    everything = pd.concat([frame[augmented.target].rename("__y__"), Xb_df, Xa_df], axis=1)
    usable = everything.dropna().index
    if len(usable) <= initial:
        raise ComputationError(
            f"need more than {initial} usable rows, have {len(usable)}")

    pos = frame.index.get_indexer(usable)
    y = everything.loc[usable, "__y__"].to_numpy()
    ones = np.ones((len(usable), 1))
    Xb = np.hstack([ones, Xb_df.loc[usable].to_numpy()])
    Xa = np.hstack([ones, Xa_df.loc[usable].to_numpy()])
    kb, ka = Xb.shape[1], Xa.shape[1]

    records: list[ForecastRecord] = []
    for i in range(initial, len(usable)):
        m = int(np.searchsorted(pos, pos[i] - horizon, side="right"))
        if m <= ka + 1:
            continue
        beta_b, _, rank_b, _ = np.linalg.lstsq(Xb[:m], y[:m], rcond=None)
        beta_a, _, rank_a, _ = np.linalg.lstsq(Xa[:m], y[:m], rcond=None)
        if rank_b < kb or rank_a < ka:
            raise ComputationError(f"rank-deficient training sample at origin {usable[i].date()}")
        records.append(ForecastRecord(
            date=usable[i],
            y_true=float(y[i]),
            yhat_baseline=float(Xb[i] @ beta_b),
            yhat_augmented=float(Xa[i] @ beta_a),
            mean_benchmark=float(y[:m].mean()),
        ))
    return records


def _error_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    e_b = np.array([r.e_b for r in records])
    e_a = np.array([r.e_a for r in records])
    return e_b, e_a


def msfe_ratio(records) -> float:
    """Augmented over baseline sum of squared forecast errors; < 1 is improvement."""
    if len(records) == 0:
        raise ValidationError("no forecast records")
    e_b, e_a = _error_arrays(records)
    den = float(e_b @ e_b)
    if den == 0.0:
        raise ComputationError("baseline squared-error sum is zero")
    return float(e_a @ e_a) / den


def oos_r2(records) -> float:
    """1 - SSE(augmented) / SSE(expanding historical mean)."""
    if len(records) == 0:
        raise ValidationError("no forecast records")
    _, e_a = _error_arrays(records)
    bench = np.array([r.y_true - r.mean_benchmark for r in records])
    den = float(bench @ bench)
    if den == 0.0:
        raise ComputationError("benchmark squared-error sum is zero")
    return 1.0 - float(e_a @ e_a) / den


def cssed(records) -> np.ndarray:
    """Cumulative sum of squared-error differences, baseline minus augmented."""
    e_b, e_a = _error_arrays(records)
    return np.cumsum(e_b ** 2 - e_a ** 2)


def clark_west(records, horizon: int) -> tuple[float, float]:
    """One-sided test that the augmented model improves on the nested baseline.

    The adjusted loss differential f_t = e_b^2 - [e_a^2 - (yhat_b - yhat_a)^2]
    is regressed on a constant with Bartlett lags = horizon - 1; the upper-tail
    standard normal p-value is returned. All-zero differentials (augmented
    identical to baseline) give (0, 0.5).
    """
    n = len(records)
    if n < CW_MIN_RECORDS:
        raise ValidationError(f"Clark-West needs >= {CW_MIN_RECORDS} records, got {n}")
    e_b, e_a = _error_arrays(records)
    spread = np.array([r.yhat_baseline - r.yhat_augmented for r in records])
    f = e_b ** 2 - (e_a ** 2 - spread ** 2)
    if np.all(f == 0.0):
        return 0.0, 0.5
    fbar = float(f.mean())
    cov = hac_covariance(np.ones((n, 1)), f - fbar, lags=horizon - 1)
    se = math.sqrt(max(cov[0, 0], 0.0))
    if se == 0.0:
        stat = math.inf if fbar > 0 else -math.inf
    else:
        stat = fbar / se
    p = 0.5 * math.erfc(stat / math.sqrt(2.0)) if math.isfinite(stat) else (0.0 if stat > 0 else 1.0)
    return float(stat), float(p)


def evaluate_oos(
    baseline: ModelSpec,
    augmented: ModelSpec,
    panel,
    initial: int = DEFAULT_INITIAL_WINDOW,
    horizon: int = 5,
) -> OOSRun:
    records = expanding_forecasts(baseline, augmented, panel, initial=initial, horizon=horizon)
    if len(records) >= CW_MIN_RECORDS:
        stat, p = clark_west(records, horizon)
    else:
        stat, p = float("nan"), float("nan")
    return OOSRun(
        records=records,
        msfe_ratio=msfe_ratio(records),
        oos_r2=oos_r2(records),
        cw_stat=stat,
        cw_pvalue=p,
        cssed=cssed(records),
    )
