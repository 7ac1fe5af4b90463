import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmvol import synthetic as syn
from pmvol import volatility as vol
from pmvol.errors import ValidationError

IDX10 = pd.date_range("2024-01-01", periods=10, freq="B")


def series(values, idx=None):
    values = list(values)
    return pd.Series(values, index=(idx if idx is not None else
                                    pd.date_range("2024-01-01", periods=len(values), freq="B")))


# ---------------------------------------------------------------------------
# realized vol
# ---------------------------------------------------------------------------

def test_rvol_zero_dispersion():
    r = series([0.0] + [0.01] * 5)
    assert vol.realized_vol(r, r.index[0], 5).value == 0.0


def test_rvol_hand_value():
    r = series([0.0, 0.01, -0.01, 0.02, 0.00, -0.02])
    target = vol.realized_vol(r, r.index[0], 5)
    # sample std of the five returns is sqrt(0.001/4); times sqrt(252)
    assert target.value == pytest.approx(0.25099800796022265, abs=1e-10)


def test_rvol_annualization_switch():
    r = series([0.0, 0.01, -0.01, 0.02, 0.00, -0.02])
    v252 = vol.realized_vol(r, r.index[0], 5).value
    v365 = vol.realized_vol(r, r.index[0], 5, annualization=math.sqrt(365)).value
    assert v365 / v252 == pytest.approx(math.sqrt(365 / 252), abs=1e-12)


def test_rvol_h_below_two_rejected():
    r = series([0.0, 0.01, 0.02])
    with pytest.raises(ValidationError):
        vol.realized_vol(r, r.index[0], 1)


def test_rvol_missing_when_window_incomplete():
    r = series([0.0, 0.01, np.nan, 0.02, 0.01, 0.03])
    assert math.isnan(vol.realized_vol(r, r.index[0], 5).value)
    assert math.isnan(vol.realized_vol(r, r.index[-1], 5).value)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1), min_size=5, max_size=5),
       st.floats(min_value=0.1, max_value=10.0),
       st.permutations(range(5)))
def test_rvol_homogeneity_and_permutation_invariance(window, c, perm):
    r = series([0.0] + window)
    base = vol.realized_vol(r, r.index[0], 5).value
    scaled = vol.realized_vol(series([0.0] + [c * w for w in window]), r.index[0], 5).value
    assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-12)
    permuted = vol.realized_vol(series([0.0] + [window[i] for i in perm]), r.index[0], 5).value
    assert permuted == pytest.approx(base, rel=1e-12, abs=1e-15)


def test_rvol_series_matches_point_op():
    rng = np.random.default_rng(3)
    r = series(rng.normal(0, 0.02, 40))
    bulk = vol.rvol_series(r, 5)
    for t in r.index[:-5]:
        assert bulk.loc[t] == pytest.approx(vol.realized_vol(r, t, 5).value, abs=1e-14)
    assert bulk.iloc[-5:].isna().all()


def test_rvol5_overlap_recomputes_from_raw_returns():
    # consecutive 5-day targets share four returns; verify by direct recomputation
    rng = np.random.default_rng(9)
    r = series(rng.normal(0, 0.02, 30))
    bulk = vol.rvol_series(r, 5)
    arr = r.to_numpy()
    for i in range(20):
        expected = math.sqrt(252) * np.std(arr[i + 1: i + 6], ddof=1)
        assert bulk.iloc[i] == pytest.approx(expected, abs=1e-14)


# ---------------------------------------------------------------------------
# abs return / log rvol / har
# ---------------------------------------------------------------------------

def test_abs_return_target():
    r = series([0.01, -0.03, 0.0])
    assert vol.abs_return_target(r, r.index[0]) == pytest.approx(0.03)
    assert vol.abs_return_target(r, r.index[1]) == 0.0
    assert math.isnan(vol.abs_return_target(r, r.index[2]))


def test_log_rvol_values():
    assert vol.log_rvol(0.0) == pytest.approx(math.log(0.001), abs=1e-12)
    assert vol.log_rvol(0.634) == pytest.approx(-0.4541302800894454, abs=1e-10)
    assert math.isnan(vol.log_rvol(float("nan")))
    with pytest.raises(ValidationError):
        vol.log_rvol(-0.01)


def test_har_constant_history():
    r = series([0.02, -0.02] * 15)
    h = vol.har_regressors(r, r.index[25])
    assert (h.lag1, h.mean5, h.mean20) == pytest.approx((0.02, 0.02, 0.02), abs=1e-15)


def test_har_lag1_is_last_abs_return():
    values = list(np.full(24, 0.01)) + [-0.03]
    r = series(values + [0.0])
    h = vol.har_regressors(r, r.index[-1])
    assert h.lag1 == pytest.approx(0.03)


def test_har_mean20_matches_bruteforce():
    rng = np.random.default_rng(11)
    values = rng.normal(0, 0.02, 25)
    r = series(values)
    h = vol.har_regressors(r, r.index[23])
    expected = sum(abs(v) for v in values[3:23]) / 20.0
    assert h.mean20 == pytest.approx(expected, abs=1e-15)


def test_har_insufficient_history_missing():
    r = series(np.full(10, 0.01))
    h = vol.har_regressors(r, r.index[5])
    assert not math.isnan(h.lag1) and not math.isnan(h.mean5) and math.isnan(h.mean20)


def test_har_frame_homogeneity():
    rng = np.random.default_rng(2)
    r = series(rng.normal(0, 0.02, 40))
    base = vol.har_frame(r, "A")
    scaled = vol.har_frame(3.0 * r, "A")
    for col in base.columns:
        ratio = (scaled[col] / base[col]).dropna()
        assert np.allclose(ratio, 3.0)


# ---------------------------------------------------------------------------
# GARCH
# ---------------------------------------------------------------------------

def test_garch_empty_series_rejected():
    with pytest.raises(ValidationError):
        vol.garch11_fit(pd.Series([], dtype=float))


def test_garch_fit_recovers_simulated_parameters():
    cfg = syn.SyntheticConfig(seed=77, n_days=5000, garch_params=(1e-6, 0.08, 0.90))
    fit = vol.garch11_fit(syn.simulate_garch_returns(cfg))
    assert abs(fit.alpha - 0.08) < 0.04
    assert abs(fit.beta - 0.90) < 0.04
    assert fit.omega > 0 and fit.alpha + fit.beta < 1


def test_garch_iid_returns():
    cfg = syn.SyntheticConfig(seed=78, n_days=3000, garch_params=(1e-4, 0.0, 0.0))
    r = syn.simulate_garch_returns(cfg)
    fit = vol.garch11_fit(r)
    assert fit.alpha < 0.02
    assert fit.alpha + fit.beta < 1.0
    uncond = fit.omega / (1.0 - fit.alpha - fit.beta)
    assert uncond == pytest.approx(float(np.var(r)), rel=0.10)


def test_garch_loglik_self_consistency():
    cfg = syn.SyntheticConfig(seed=79, n_days=1000)
    r = syn.simulate_garch_returns(cfg)
    fit = vol.garch11_fit(r)
    sigma2 = vol.garch11_variance(fit, r)
    eps2 = (r.to_numpy() - fit.mean) ** 2
    assert vol._gaussian_loglik(eps2, sigma2.to_numpy()) == pytest.approx(fit.loglik, abs=1e-8)


def test_garch_recursion_matches_loop():
    rng = np.random.default_rng(4)
    eps2 = rng.normal(0, 0.01, 200) ** 2
    omega, alpha, beta = 2e-6, 0.1, 0.85
    out = vol._garch_recursion(eps2, omega, alpha, beta, 1e-4)
    manual = np.empty(200)
    manual[0] = 1e-4
    for t in range(1, 200):
        manual[t] = omega + alpha * eps2[t - 1] + beta * manual[t - 1]
    assert np.max(np.abs(out - manual)) < 1e-18


def test_garch_constraint_violations_rejected():
    with pytest.raises(ValidationError):
        vol.GarchFit(omega=-1e-6, alpha=0.1, beta=0.8, conditional_variance=pd.Series([1.0]),
                     loglik=0.0, mean=0.0, n_obs=10, converged=True, grad_norm=0.0)
    with pytest.raises(ValidationError):
        vol.GarchFit(omega=1e-6, alpha=0.5, beta=0.6, conditional_variance=pd.Series([1.0]),
                     loglik=0.0, mean=0.0, n_obs=10, converged=True, grad_norm=0.0)


def test_garch_variance_column_is_one_step_ahead():
    cfg = syn.SyntheticConfig(seed=80, n_days=400)
    r = syn.simulate_garch_returns(cfg)
    col = vol.garch_variance_column(r)
    fit = vol.garch11_fit(r)
    # value at t equals the fitted conditional variance of the next return
    assert col.iloc[0] == pytest.approx(fit.conditional_variance.iloc[1], rel=1e-12)
    eps_last = float(r.iloc[-1] - fit.mean)
    expected_last = fit.omega + fit.alpha * eps_last ** 2 \
        + fit.beta * float(fit.conditional_variance.iloc[-1])
    assert col.iloc[-1] == pytest.approx(expected_last, rel=1e-12)


# ---------------------------------------------------------------------------
# bulk target builder
# ---------------------------------------------------------------------------

def test_build_target_columns_names_and_alignment():
    rng = np.random.default_rng(6)
    idx = pd.date_range("2023-01-02", periods=60, freq="B")
    frame = pd.DataFrame({"BTC.ret": rng.normal(0, 0.02, 60)}, index=idx)
    out = vol.build_target_columns(frame, ["BTC"], horizons=(1, 3, 5, 10, 21))
    expected = {"BTC.har1", "BTC.har5", "BTC.har20", "BTC.absret1", "BTC.rvol3",
                "BTC.rvol5", "BTC.rvol10", "BTC.rvol21", "BTC.logrvol5"}
    assert set(out.columns) == expected
    assert out["BTC.absret1"].iloc[0] == pytest.approx(abs(frame["BTC.ret"].iloc[1]))
    logged = np.log(out["BTC.rvol5"] + 1e-3)
    pd.testing.assert_series_equal(out["BTC.logrvol5"], logged, check_names=False)


def test_build_target_columns_missing_return_column():
    frame = pd.DataFrame({"ETH.ret": [0.0, 0.1]},
                         index=pd.date_range("2023-01-02", periods=2, freq="B"))
    with pytest.raises(ValidationError):
        vol.build_target_columns(frame, ["BTC"])
