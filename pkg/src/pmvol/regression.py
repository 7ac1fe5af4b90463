"""OLS estimation of the nested volatility model ladder with robust covariance.

Conventions pinned here so fixtures agree everywhere:

* Newey-West HAC uses Bartlett weights w_l = 1 - l/(L+1) and a small-sample
  n/(n-k) scaling. With lags = 0 it reduces to the White (HC0) sandwich under
  the same scaling.
* HC3 inflates squared residuals by (1 - h_i)^-2 and carries no extra
  scaling; the leverage inflation is its finite-sample correction.
* p-values are two-sided standard normal (HAC inference is asymptotic).

A regression is described by a ModelSpec: a target column plus ordered Terms,
where a Term references a panel column at an offset in panel days (offset -1
is the one-day lag used for signal columns, +1 the lead placebo). The panel
stores signals at their observation date; the estimator applies the shift.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .errors import ComputationError, RankError, ValidationError
from .market_data import as_frame

STAR_LEVELS = (0.10, 0.05, 0.01)


def normal_p_two_sided(t: float) -> float:
    if math.isnan(t):
        return float("nan")
    return math.erfc(abs(t) / math.sqrt(2.0))


def significance_stars(p: float) -> str:
    if math.isnan(p):
        return ""
    return "*" * sum(p < level for level in STAR_LEVELS)


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HAC:
    lags: int = 5

    def __post_init__(self):
        if self.lags < 0:
            raise ValidationError(f"HAC lags must be >= 0, got {self.lags}")


@dataclass(frozen=True)
class HC3:
    pass


@dataclass(frozen=True)
class Term:
    """A panel column shifted by ``offset`` panel days (-1 = one-day lag)."""

    column: str
    offset: int = 0
    label: str | None = None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return self.column if self.offset == 0 else f"{self.column}[t{self.offset:+d}]"

    def values(self, frame: pd.DataFrame) -> pd.Series:
        if self.column not in frame.columns:
            raise ValidationError(f"panel has no column {self.column!r}")
        return frame[self.column].shift(-self.offset)


def lagged(column: str, label: str | None = None) -> Term:
    return Term(column, offset=-1, label=label)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Target, ordered regressors (constant implied), covariance, optional sample filter."""

    target: str
    terms: tuple
    cov: HAC | HC3 = field(default_factory=HAC)
    name: str = ""
    sample: object = None  # pd.Series[bool] on dates, or callable date -> bool

    def __post_init__(self):
        coerced = tuple(Term(t) if isinstance(t, str) else t for t in self.terms)
        object.__setattr__(self, "terms", coerced)
        names = [t.name for t in coerced]
        if len(set(names)) != len(names):
            raise ValidationError(f"regressor names must be distinct, got {names}")

    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]


# ---------------------------------------------------------------------------
# Core estimators
# ---------------------------------------------------------------------------

def ols_fit(X: np.ndarray, y: np.ndarray):
    """Least squares on a design that already includes its constant.

    Returns (beta, residuals, r2, adj_r2). Raises RankError on rank-deficient
    X and ComputationError when n <= k.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise ComputationError(f"need more rows than regressors: n={n}, k={k}")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < k:
        raise RankError(f"design matrix is rank deficient (rank {rank} < {k})")
    resid = y - X @ beta
    tss = float(np.sum((y - y.mean()) ** 2))
    rss = float(resid @ resid)
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    return beta, resid, r2, adj_r2


def hac_covariance(X: np.ndarray, residuals: np.ndarray, lags: int) -> np.ndarray:
    """Newey-West sandwich with Bartlett weights and n/(n-k) scaling."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(residuals, dtype=float)
    n, k = X.shape
    if lags < 0:
        raise ValidationError(f"lags must be >= 0, got {lags}")
    if lags >= n:
        raise ValidationError(f"lags must be < n ({n}), got {lags}")
    xu = X * u[:, None]
    meat = xu.T @ xu
    for ell in range(1, lags + 1):
        w = 1.0 - ell / (lags + 1.0)
        gamma = xu[ell:].T @ xu[:-ell]
        meat += w * (gamma + gamma.T)
    bread = np.linalg.inv(X.T @ X)
    cov = bread @ meat @ bread * (n / (n - k))
    return (cov + cov.T) / 2.0


def hc0_covariance(X: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """White sandwich; identical to hac_covariance with zero lags."""
    return hac_covariance(X, residuals, 0)


def hc3_covariance(X: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Leverage-adjusted sandwich: squared residuals inflated by (1-h_i)^-2."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(residuals, dtype=float)
    bread = np.linalg.inv(X.T @ X)
    h = np.einsum("ij,jk,ik->i", X, bread, X)
    if np.any(h >= 1.0 - 1e-12):
        raise ComputationError("leverage of 1 (exact-fit row); HC3 undefined")
    w = (u / (1.0 - h)) ** 2
    meat = (X * w[:, None]).T @ X
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2.0


# ---------------------------------------------------------------------------
# Panel-level estimation
# ---------------------------------------------------------------------------

@dataclass
class ModelFit:
    spec: ModelSpec
    coefficients: pd.Series
    covariance: pd.DataFrame
    t_stats: pd.Series
    p_values: pd.Series
    r2: float
    adj_r2: float
    n_obs: int
    residuals: pd.Series
    design: pd.DataFrame  # regressor values on the estimation sample (no constant)

    @property
    def std_errors(self) -> pd.Series:
        return pd.Series(np.sqrt(np.diag(self.covariance.to_numpy())),
                         index=self.coefficients.index)

    def term_label(self, name: str) -> str:
        """Resolve a term by label or by underlying column name."""
        if name in self.coefficients.index and name != "const":
            return name
        matches = [t.name for t in self.spec.terms if t.column == name]
        if len(matches) == 1:
            return matches[0]
        raise ValidationError(f"signal {name!r} absent from fit "
                              f"(have {list(self.coefficients.index)})")


def _estimation_frame(spec: ModelSpec, frame: pd.DataFrame) -> pd.DataFrame:
    if spec.target not in frame.columns:
        raise ValidationError(f"panel has no column {spec.target!r}")
    data = {"__target__": frame[spec.target]}
    for term in spec.terms:
        data[term.name] = term.values(frame)
    df = pd.DataFrame(data)
    if spec.sample is not None:
        if callable(spec.sample):
            keep = pd.Series([bool(spec.sample(d)) for d in df.index], index=df.index)
        else:
            keep = spec.sample.reindex(df.index).fillna(False).astype(bool)
        df = df[keep]
    return df.dropna()


def estimate(spec: ModelSpec, panel) -> ModelFit:
    """Fit a ModelSpec on the panel with listwise deletion and the spec's covariance."""
    frame = as_frame(panel)
    df = _estimation_frame(spec, frame)
    if len(df) == 0:
        raise ComputationError(f"empty estimation sample for target {spec.target!r}")
    y = df["__target__"].to_numpy()
    design = df.drop(columns="__target__")
    names = ["const"] + list(design.columns)
    X = np.column_stack([np.ones(len(df))] + [design[c].to_numpy() for c in design.columns])
    beta, resid, r2, adj_r2 = ols_fit(X, y)
    if isinstance(spec.cov, HAC):
        cov = hac_covariance(X, resid, spec.cov.lags)
    elif isinstance(spec.cov, HC3):
        cov = hc3_covariance(X, resid)
    else:
        raise ValidationError(f"unknown covariance spec {spec.cov!r}")
    se = np.sqrt(np.diag(cov))
    t = beta / se
    p = np.array([normal_p_two_sided(v) for v in t])
    return ModelFit(
        spec=spec,
        coefficients=pd.Series(beta, index=names),
        covariance=pd.DataFrame(cov, index=names, columns=names),
        t_stats=pd.Series(t, index=names),
        p_values=pd.Series(p, index=names),
        r2=r2, adj_r2=adj_r2, n_obs=len(df),
        residuals=pd.Series(resid, index=df.index),
        design=design,
    )


def fit_nested(specs: Sequence[ModelSpec], panel) -> list[ModelFit]:
    """Fit nested specs on the common complete sample (the largest spec's rows)."""
    frame = as_frame(panel)
    combined: dict[str, pd.Series] = {}
    for spec in specs:
        combined[f"__target_{spec.target}"] = frame[spec.target] if spec.target in frame.columns \
            else pd.Series(np.nan, index=frame.index)
        for term in spec.terms:
            combined[term.name] = term.values(frame)
    common = pd.DataFrame(combined).dropna().index
    mask = pd.Series(frame.index.isin(common), index=frame.index)
    fits = []
    for spec in specs:
        if spec.sample is not None:
            raise ValidationError("fit_nested manages the sample itself; leave spec.sample unset")
        fits.append(estimate(replace(spec, sample=mask), frame))
    return fits


def effect_size(fit: ModelFit, signal: str, quantiles: tuple[float, float] = (0.25, 0.75)) -> float:
    """Coefficient times the (q_hi - q_lo) spread of the in-sample signal values."""
    label = fit.term_label(signal)
    q_lo, q_hi = quantiles
    values = fit.design[label]
    return float(fit.coefficients[label] * (values.quantile(q_hi) - values.quantile(q_lo)))


_RVOL_TARGET = re.compile(r"^(?P<asset>.+)\.rvol(?P<h>\d+)$")


def default_horizon_target(base_target: str) -> Callable[[int], str]:
    m = _RVOL_TARGET.match(base_target)
    if not m:
        raise ValidationError(
            f"cannot derive horizon targets from {base_target!r}; pass target_for_horizon")
    asset = m.group("asset")
    return lambda h: f"{asset}.absret1" if h == 1 else f"{asset}.rvol{h}"


def horizon_sweep(spec: ModelSpec, panel, horizons: Sequence[int] = (1, 3, 5, 10),
                  signal: str | None = None,
                  target_for_horizon: Callable[[int], str] | None = None) -> pd.DataFrame:
    """Re-estimate the spec per horizon with HAC lags = min(h, 5).

    Reports the signal term's coefficient, HAC t, and p per horizon; the
    signal defaults to the spec's last term. Horizon 1 swaps the target to
    the next-day absolute return.
    """
    columns = ["horizon", "target", "n_obs", "coefficient", "std_error", "t_stat", "p_value"]
    rows = []
    if len(list(horizons)) == 0:
        return pd.DataFrame(columns=columns)
    target_fn = target_for_horizon or default_horizon_target(spec.target)
    label = signal or spec.terms[-1].name
    for h in sorted(set(horizons)):
        if h < 1:
            raise ValidationError(f"horizon must be >= 1, got {h}")
        h_spec = replace(spec, target=target_fn(h), cov=HAC(min(h, 5)))
        fit = estimate(h_spec, panel)
        term = fit.term_label(label)
        rows.append({
            "horizon": h,
            "target": h_spec.target,
            "n_obs": fit.n_obs,
            "coefficient": fit.coefficients[term],
            "std_error": fit.std_errors[term],
            "t_stat": fit.t_stats[term],
            "p_value": fit.p_values[term],
        })
    return pd.DataFrame(rows, columns=columns)


# ---------------------------------------------------------------------------
# Release-window machinery and table layout
# ---------------------------------------------------------------------------

def release_window_dummy(dates: pd.DatetimeIndex, event_dates, width: int = 1) -> pd.Series:
    """Indicator equal to 1 within +-width panel days of each event date."""
    flag = np.zeros(len(dates), dtype=float)
    for event in event_dates:
        ts = pd.Timestamp(event)
        pos = dates.searchsorted(ts)
        if pos < len(dates) and dates[pos] == ts:
            lo, hi = pos - width, pos + width
        else:
            lo, hi = pos - width, pos + width - 1
        flag[max(lo, 0): hi + 1] = 1.0
    return pd.Series(flag, index=dates)


def exclude_release_windows(dates: pd.DatetimeIndex, event_dates, width: int = 1) -> pd.Series:
    """Boolean keep-mask that drops the +-width window around each event date."""
    return release_window_dummy(dates, event_dates, width) == 0.0


def nested_table(fits: Sequence[ModelFit], model_names: Sequence[str] | None = None) -> pd.DataFrame:
    """Coefficient table: rows = regressors, columns = models, cells = 'est*** (se)'."""
    names = list(model_names or [f.spec.name or f"M{i + 1}" for i, f in enumerate(fits)])
    order: list[str] = []
    for fit in fits:
        for reg in fit.coefficients.index:
            if reg not in order:
                order.append(reg)
    table = pd.DataFrame("", index=order + ["adj_r2", "n_obs"], columns=names)
    for name, fit in zip(names, fits):
        for reg in fit.coefficients.index:
            stars = significance_stars(fit.p_values[reg])
            table.loc[reg, name] = f"{fit.coefficients[reg]:.3f}{stars} ({fit.std_errors[reg]:.3f})"
        table.loc["adj_r2", name] = f"{fit.adj_r2:.3f}"
        table.loc["n_obs", name] = str(fit.n_obs)
    table.index.name = "regressor"
    return table
