import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmvol import portfolio as pf
from pmvol.errors import ValidationError


def forecasts(values):
    return pd.Series(values, index=pd.date_range("2024-01-01", periods=len(values), freq="B"),
                     dtype=float)


def test_weight_one_at_target():
    ws = pf.vol_managed_weights(forecasts([0.5, 0.5]), sigma_bar=0.5)
    assert np.allclose(ws.weight, 1.0)


def test_weight_ratio_high_signal_episode():
    # benchmark forecast 0.324 versus signal-augmented 0.348: position shrinks ~7%
    ws = pf.vol_managed_weights(forecasts([0.324, 0.348]), sigma_bar=0.324)
    ratio = ws.weight.iloc[1] / ws.weight.iloc[0]
    assert ratio == pytest.approx(0.324 / 0.348, abs=1e-12)
    assert round(ratio, 3) == 0.931
    assert 1.0 - ratio == pytest.approx(0.07, abs=0.01)


def test_weight_cap_binds_near_zero_forecast():
    ws = pf.vol_managed_weights(forecasts([1e-9]), sigma_bar=0.5, cap=3.0)
    assert ws.weight.iloc[0] == 3.0


def test_weight_missing_forecast_stays_missing():
    ws = pf.vol_managed_weights(forecasts([0.5, np.nan, 0.25]), sigma_bar=0.5)
    assert math.isnan(ws.weight.iloc[1])
    assert ws.weight.iloc[2] == pytest.approx(2.0)


def test_weight_sigma_bar_defaults_to_mean_forecast():
    ws = pf.vol_managed_weights(forecasts([0.4, 0.6]))
    assert ws.sigma_bar == pytest.approx(0.5)


def test_weight_invalid_sigma_bar():
    with pytest.raises(ValidationError):
        pf.vol_managed_weights(forecasts([0.5]), sigma_bar=0.0)
    with pytest.raises(ValidationError):
        pf.vol_managed_weights(forecasts([0.5]), sigma_bar=0.5, cap=-1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=5.0), min_size=1, max_size=20),
       st.floats(min_value=0.1, max_value=10.0))
def test_weight_homogeneity(values, c):
    base = pf.vol_managed_weights(forecasts(values), sigma_bar=1.0)
    scaled = pf.vol_managed_weights(forecasts([c * v for v in values]), sigma_bar=c)
    assert np.allclose(base.weight, scaled.weight, rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.01, max_value=5.0), st.floats(min_value=0.01, max_value=5.0))
def test_weight_antitone_in_forecast(a, b):
    lo, hi = sorted([a, b])
    ws = pf.vol_managed_weights(forecasts([lo, hi]), sigma_bar=1.0)
    assert ws.weight.iloc[0] >= ws.weight.iloc[1]


def test_gap_reference_scenario():
    gap, rel = pf.predicted_rv_gap(0.52 - 0.0846, 0.52)
    assert gap == pytest.approx(0.0846, abs=1e-12)
    assert rel == pytest.approx(0.0846 / 0.52, abs=1e-12)
    assert round(rel, 2) == 0.16


def test_gap_equal_forecasts():
    assert pf.predicted_rv_gap(0.4, 0.4) == (0.0, 0.0)


def test_gap_negative_when_model_higher():
    gap, rel = pf.predicted_rv_gap(0.5, 0.4)
    assert gap < 0 and rel < 0


def test_gap_invalid_benchmark():
    with pytest.raises(ValidationError):
        pf.predicted_rv_gap(0.3, 0.0)
    with pytest.raises(ValidationError):
        pf.predicted_rv_gap(float("nan"), 0.4)
