"""Position sizing from volatility forecasts and forecast-gap arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ValidationError

DEFAULT_WEIGHT_CAP = 2.0


@dataclass(frozen=True)
class WeightSeries:
    dates: pd.DatetimeIndex
    weight: pd.Series
    sigma_bar: float
    sigma_hat: pd.Series
    cap: float


def vol_managed_weights(forecasts: pd.Series, sigma_bar: float | None = None,
                        cap: float = DEFAULT_WEIGHT_CAP) -> WeightSeries:
    """Inverse-volatility weights w = min(sigma_bar / forecast, cap).

    ``sigma_bar`` defaults to the mean of the available forecasts, which
    stands in for the asset's typical volatility level when no explicit
    target is supplied. Missing forecasts give missing weights; the cap keeps
    weights bounded when a forecast approaches zero.
    """
    forecasts = forecasts.astype(float)
    present = forecasts.dropna()
    if (present < 0).any():
        raise ValidationError("volatility forecasts must be >= 0")
    if sigma_bar is None:
        if len(present) == 0:
            raise ValidationError("cannot infer sigma_bar from an all-missing forecast series")
        sigma_bar = float(present.mean())
    if not (sigma_bar > 0):
        raise ValidationError(f"sigma_bar must be > 0, got {sigma_bar}")
    if not (cap > 0):
        raise ValidationError(f"cap must be > 0, got {cap}")
    with np.errstate(divide="ignore"):
        raw = sigma_bar / forecasts
    weight = raw.clip(upper=cap).where(forecasts.notna())
    return WeightSeries(dates=forecasts.index, weight=weight,
                        sigma_bar=sigma_bar, sigma_hat=forecasts, cap=cap)


def predicted_rv_gap(model_forecast: float, benchmark_forecast: float) -> tuple[float, float]:
    """(benchmark - model, relative gap); positive when the model predicts less volatility."""
    if math.isnan(model_forecast) or math.isnan(benchmark_forecast):
        raise ValidationError("both forecasts must be present")
    if not (benchmark_forecast > 0):
        raise ValidationError(f"benchmark forecast must be > 0, got {benchmark_forecast}")
    gap = benchmark_forecast - model_forecast
    return gap, gap / benchmark_forecast
