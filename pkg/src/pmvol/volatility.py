"""Forecast targets and HAR regressors from daily log returns.

The primary target is h-day forward realized volatility: sqrt(252) times the
sample standard deviation (ddof=1) of the next h returns, stored at the
signal date t so the window begins strictly after the predictors. Auxiliary
targets: next-day absolute return, log realized volatility, and GARCH(1,1)
one-step-ahead conditional variance.

Panel columns: ``{asset}.rvol{h}``, ``{asset}.absret1``, ``{asset}.logrvol5``,
``{asset}.garchvar``, and HAR regressors ``{asset}.har1/.har5/.har20``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import ComputationError, ConvergenceError, ValidationError

ANNUALIZATION_TRADING = math.sqrt(252.0)
ANNUALIZATION_CALENDAR = math.sqrt(365.0)
LOG_RVOL_EPSILON = 1e-3

GARCH_MIN_OBS = 200
_GARCH_PERSISTENCE_CAP = 1.0 - 1e-7


@dataclass(frozen=True)
class RVolTarget:
    asset_id: str
    date: pd.Timestamp
    horizon_days: int
    value: float


@dataclass(frozen=True)
class HarRegressors:
    asset_id: str
    date: pd.Timestamp
    lag1: float
    mean5: float
    mean20: float


def realized_vol(returns: pd.Series, t, h: int,
                 annualization: float = ANNUALIZATION_TRADING,
                 asset_id: str = "") -> RVolTarget:
    """Annualized sample std of the h returns after t; NaN if any is missing."""
    if h < 2:
        raise ValidationError("realized_vol needs h >= 2; use abs_return_target for h = 1")
    pos = returns.index.get_loc(t)
    window = returns.to_numpy()[pos + 1: pos + 1 + h]
    if len(window) < h or np.isnan(window).any():
        value = float("nan")
    else:
        value = float(annualization * np.std(window, ddof=1))
    return RVolTarget(asset_id, pd.Timestamp(t), h, value)


def abs_return_target(returns: pd.Series, t) -> float:
    """Absolute next-day return; NaN past the end of the panel."""
    pos = returns.index.get_loc(t)
    if pos + 1 >= len(returns):
        return float("nan")
    return float(abs(returns.iloc[pos + 1]))


def log_rvol(value: float, epsilon: float = LOG_RVOL_EPSILON) -> float:
    if isinstance(value, float) and math.isnan(value):
        return float("nan")
    if value < 0:
        raise ValidationError(f"realized volatility must be >= 0, got {value}")
    return math.log(value + epsilon)


def har_regressors(returns: pd.Series, t, asset_id: str = "") -> HarRegressors:
    """Lagged |return| and its 5- and 20-day rolling means, windows ending at t-1."""
    pos = returns.index.get_loc(t)
    a = np.abs(returns.to_numpy())

    def window_mean(k: int) -> float:
        w = a[pos - k: pos]
        if pos - k < 0 or np.isnan(w).any():
            return float("nan")
        return float(np.mean(w))

    return HarRegressors(asset_id, pd.Timestamp(t),
                         lag1=window_mean(1), mean5=window_mean(5), mean20=window_mean(20))


# ---------------------------------------------------------------------------
# Bulk builders
# ---------------------------------------------------------------------------

def rvol_series(returns: pd.Series, h: int,
                annualization: float = ANNUALIZATION_TRADING) -> pd.Series:
    if h < 2:
        raise ValidationError("rvol_series needs h >= 2")
    fwd = returns.rolling(h, min_periods=h).std(ddof=1).shift(-h)
    return annualization * fwd


def har_frame(returns: pd.Series, asset_id: str) -> pd.DataFrame:
    a = returns.abs()
    return pd.DataFrame({
        f"{asset_id}.har1": a.shift(1),
        f"{asset_id}.har5": a.rolling(5, min_periods=5).mean().shift(1),
        f"{asset_id}.har20": a.rolling(20, min_periods=20).mean().shift(1),
    })


def build_target_columns(
    frame: pd.DataFrame,
    assets,
    horizons=(1, 3, 5, 10),
    annualization: float = ANNUALIZATION_TRADING,
    epsilon: float = LOG_RVOL_EPSILON,
    include_garch: bool = False,
) -> pd.DataFrame:
    """Target and HAR columns for every asset; returns only the new columns."""
    out = {}
    for asset in assets:
        col = f"{asset}.ret"
        if col not in frame.columns:
            raise ValidationError(f"missing return column {col}")
        r = frame[col]
        out.update(har_frame(r, asset))
        out[f"{asset}.absret1"] = r.abs().shift(-1)
        for h in sorted(set(horizons)):
            if h >= 2:
                out[f"{asset}.rvol{h}"] = rvol_series(r, h, annualization)
        if f"{asset}.rvol5" in out:
            out[f"{asset}.logrvol5"] = np.log(out[f"{asset}.rvol5"] + epsilon)
        if include_garch:
            out[f"{asset}.garchvar"] = garch_variance_column(r)
    return pd.DataFrame(out, index=frame.index)


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GarchFit:
    omega: float
    alpha: float
    beta: float
    conditional_variance: pd.Series
    loglik: float
    mean: float
    n_obs: int
    converged: bool
    grad_norm: float

    def __post_init__(self):
        if not (self.omega > 0 and self.alpha >= 0 and self.beta >= 0
                and self.alpha + self.beta < 1):
            raise ValidationError(
                f"GARCH parameters violate constraints: omega={self.omega}, "
                f"alpha={self.alpha}, beta={self.beta}")


def _garch_recursion(eps2: np.ndarray, omega: float, alpha: float, beta: float,
                     seed_var: float) -> np.ndarray:
    """sigma2[t] = omega + alpha*eps2[t-1] + beta*sigma2[t-1], sigma2[0] = seed_var."""
    n = len(eps2)
    if n == 0:
        return np.empty(0)
    drive = omega + alpha * eps2[:-1]
    tail, _ = lfilter([1.0], [1.0, -beta], drive, zi=np.array([beta * seed_var]))
    return np.concatenate(([seed_var], tail))


def _gaussian_loglik(eps2: np.ndarray, sigma2: np.ndarray) -> float:
    sigma2 = np.maximum(sigma2, 1e-300)
    return float(-0.5 * np.sum(np.log(2.0 * np.pi) + np.log(sigma2) + eps2 / sigma2))


def _unpack(theta: np.ndarray) -> tuple[float, float, float]:
    hbar = math.exp(theta[0])
    p = _GARCH_PERSISTENCE_CAP / (1.0 + math.exp(-theta[1]))
    s = 1.0 / (1.0 + math.exp(-theta[2]))
    alpha = s * p
    beta = (1.0 - s) * p
    omega = hbar * (1.0 - p)
    return omega, alpha, beta


def garch11_fit(returns, min_obs: int = GARCH_MIN_OBS) -> GarchFit:
    """Gaussian QMLE of GARCH(1,1) on demeaned returns.

    The optimizer works on transformed parameters that enforce omega > 0,
    alpha, beta >= 0 and alpha + beta < 1 by construction, so the constraints
    cannot bind at the reported optimum.
    """
    series = pd.Series(returns).dropna().astype(float)
    if len(series) < min_obs:
        raise ValidationError(f"GARCH fit needs >= {min_obs} returns, got {len(series)}")
    mean = float(series.mean())
    eps = series.to_numpy() - mean
    eps2 = eps ** 2
    seed_var = float(np.var(eps))

    def nll(theta: np.ndarray) -> float:
        omega, alpha, beta = _unpack(theta)
        sigma2 = _garch_recursion(eps2, omega, alpha, beta, seed_var)
        return -_gaussian_loglik(eps2, sigma2)

    x0 = np.array([math.log(seed_var), math.log(0.95 / 0.05), math.log(0.1 / 0.9)])
    res = minimize(nll, x0, method="L-BFGS-B",
                   options={"ftol": 1e-8, "gtol": 1e-7, "maxiter": 500})
    grad_norm = float(np.max(np.abs(res.jac))) if res.jac is not None else float("nan")
    if not res.success and grad_norm > 1e-3:
        raise ConvergenceError(
            f"GARCH QMLE did not converge: {res.message} (final gradient norm {grad_norm:.3e})")
    omega, alpha, beta = _unpack(res.x)
    sigma2 = _garch_recursion(eps2, omega, alpha, beta, seed_var)
    return GarchFit(
        omega=omega, alpha=alpha, beta=beta,
        conditional_variance=pd.Series(sigma2, index=series.index),
        loglik=_gaussian_loglik(eps2, sigma2),
        mean=mean, n_obs=len(series), converged=bool(res.success), grad_norm=grad_norm,
    )


def garch11_variance(fit: GarchFit, returns) -> pd.Series:
    """Re-run the fitted variance recursion on a return series."""
    series = pd.Series(returns).dropna().astype(float)
    if len(series) == 0:
        raise ValidationError("empty return series")
    eps2 = (series.to_numpy() - fit.mean) ** 2
    sigma2 = _garch_recursion(eps2, fit.omega, fit.alpha, fit.beta, float(np.var(series - fit.mean)))
    return pd.Series(sigma2, index=series.index)


def garch_variance_column(returns: pd.Series, min_obs: int = GARCH_MIN_OBS) -> pd.Series:
    """One-step-ahead conditional variance as a panel column.

    The value stored at date t is the variance the fitted model assigns to the
    next observed return, which is a function of information through t only.
    """
    obs = returns.dropna()
    if len(obs) < min_obs:
        raise ComputationError(
            f"garch target needs >= {min_obs} observed returns, got {len(obs)}")
    fit = garch11_fit(obs)
    var = fit.conditional_variance
    eps_last = float(obs.iloc[-1] - fit.mean)
    next_var = fit.omega + fit.alpha * eps_last ** 2 + fit.beta * float(var.iloc[-1])
    ahead = var.shift(-1)
    ahead.iloc[-1] = next_var
    return ahead.reindex(returns.index)
