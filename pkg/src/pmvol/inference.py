"""Robustness battery: FDR control, block bootstrap, orthogonalization,
lead-lag placebo, and the signal-by-asset grid runner.

Bootstrap determinism: every resample draws from its own RNG stream derived
from (seed, resample index), so results are bit-identical regardless of
execution order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve

from .errors import ComputationError, ValidationError
from .market_data import as_frame
from .regression import (HAC, ModelSpec, Term, _estimation_frame, estimate,
                         lagged, ols_fit, significance_stars)

DEFAULT_BH_Q = 0.05
DEFAULT_BLOCK_LENGTH = 5
DEFAULT_RESAMPLES = 2000
DEFAULT_MIN_COVERAGE = 50
_MAX_REDRAWS = 100


# ---------------------------------------------------------------------------
# Benjamini-Hochberg
# ---------------------------------------------------------------------------

def benjamini_hochberg(p_values, q: float = DEFAULT_BH_Q) -> tuple[np.ndarray, np.ndarray]:
    """Step-up FDR control: returns (adjusted p per input, rejected flags).

    Rejects the hypotheses with sorted rank <= k* where k* is the largest k
    with p_(k) <= k*q/m; adjusted p_(k) = min over j >= k of m*p_(j)/j,
    clipped to 1.
    """
    p = np.asarray(list(p_values), dtype=float)
    if p.size == 0:
        raise ValidationError("empty p-value vector")
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise ValidationError("p-values must lie in [0, 1]")
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q must be in (0, 1), got {q}")
    m = p.size
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    ranks = np.arange(1, m + 1)
    scaled = m * sorted_p / ranks
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    passing = np.nonzero(sorted_p <= ranks * q / m)[0]
    k_star = int(passing[-1]) + 1 if passing.size else 0
    rejected_sorted = np.zeros(m, dtype=bool)
    rejected_sorted[:k_star] = True
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    rejected = np.zeros(m, dtype=bool)
    rejected[order] = rejected_sorted
    return adjusted, rejected


# ---------------------------------------------------------------------------
# Moving-block bootstrap
# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    point_estimate: float
    bootstrap_distribution: np.ndarray
    p_value: float
    seed: int
    block_length: int
    n_redrawn: int


def _resample_indices(rng: np.random.Generator, n: int, block_length: int) -> np.ndarray:
    n_blocks = math.ceil(n / block_length)
    starts = rng.integers(0, n - block_length + 1, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_length)[None, :]).ravel()
    return idx[:n]


def moving_block_bootstrap(
    spec: ModelSpec,
    panel,
    coefficient: str,
    block_length: int = DEFAULT_BLOCK_LENGTH,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> BootstrapResult:
    """Pairs bootstrap of a regression coefficient over contiguous row blocks.

    Resamples are concatenations of ceil(n/l) length-l blocks drawn uniformly
    with replacement from the n-l+1 overlapping blocks of the estimation
    sample, truncated to n rows; the model is refit on each. The p-value is
    the recentered two-sided percentile test of the zero null: the fraction
    of resamples with |coef* - coef_hat| >= |coef_hat|. Rank-deficient
    resamples are redrawn (within the same indexed stream) and counted.
    """
    point_fit = estimate(spec, panel)
    label = point_fit.term_label(coefficient)
    frame = _estimation_frame(spec, as_frame(panel))
    y = frame["__target__"].to_numpy()
    design = frame.drop(columns="__target__")
    X = np.column_stack([np.ones(len(frame))] + [design[c].to_numpy() for c in design.columns])
    coef_idx = 1 + list(design.columns).index(label)
    n = len(y)
    if block_length < 1 or block_length > n:
        raise ValidationError(f"block_length must be in [1, n={n}], got {block_length}")
    point = float(point_fit.coefficients[label])

    dist = np.empty(n_resamples)
    n_redrawn = 0
    for i in range(n_resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        for attempt in range(_MAX_REDRAWS):
            idx = _resample_indices(rng, n, block_length)
            Xi = X[idx]
            gram = Xi.T @ Xi
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                n_redrawn += 1
                continue
            beta = cho_solve((chol, True), Xi.T @ y[idx])
            dist[i] = beta[coef_idx]
            break
        else:
            raise ComputationError(
                f"resample {i} was rank deficient {_MAX_REDRAWS} times in a row")
    p_value = float(np.mean(np.abs(dist - point) >= abs(point)))
    return BootstrapResult(
        point_estimate=point,
        bootstrap_distribution=dist,
        p_value=p_value,
        seed=seed,
        block_length=block_length,
        n_redrawn=n_redrawn,
    )


# ---------------------------------------------------------------------------
# Orthogonalization and lead-lag placebo
# ---------------------------------------------------------------------------

def orthogonalize(signal_column: str, control_columns: Sequence[str], panel
                  ) -> tuple[pd.Series, float]:
    """Residualize a signal on controls; returns (residual column, first-stage r2).

    The residual is NaN outside the overlapping non-missing sample and has
    zero sample correlation with every control on it.
    """
    frame = as_frame(panel)
    for col in (signal_column, *control_columns):
        if col not in frame.columns:
            raise ValidationError(f"panel has no column {col!r}")
    df = frame[[signal_column, *control_columns]].dropna()
    if len(df) == 0:
        raise ComputationError("no overlapping non-missing sample")
    X = np.column_stack([np.ones(len(df))] + [df[c].to_numpy() for c in control_columns])
    _, resid, r2, _ = ols_fit(X, df[signal_column].to_numpy())
    out = pd.Series(resid, index=df.index).reindex(frame.index)
    out.name = f"{signal_column}.orth"
    return out, float(r2)


def lead_lag_test(spec: ModelSpec, panel, signal: str):
    """Estimate the spec with the signal lagged one day and led one day.

    Returns (lag_fit, lead_fit); a genuine predictor is significant in the
    first and centered at zero in the second.
    """
    matches = [i for i, t in enumerate(spec.terms)
               if t.column == signal or t.name == signal]
    if len(matches) != 1:
        raise ValidationError(f"spec must contain the signal column {signal!r} exactly once")
    i = matches[0]
    column = spec.terms[i].column

    def with_offset(offset: int) -> ModelSpec:
        terms = list(spec.terms)
        terms[i] = Term(column, offset=offset)
        return dc_replace(spec, terms=tuple(terms))

    return estimate(with_offset(-1), panel), estimate(with_offset(+1), panel)


# ---------------------------------------------------------------------------
# Grid runner
# ---------------------------------------------------------------------------

@dataclass
class GridResult:
    signal_id: str
    asset_id: str
    n: int
    coefficient: float
    t_stat: float
    p_value: float
    adj_r2: float
    bh_adjusted_p: float
    bh_rejected: bool
    active: bool


def grid_spec(signal: str, asset: str, controls: Sequence[str],
              hac_lags: int = 5, horizon: int = 5) -> ModelSpec:
    """Full model for one signal-by-asset cell: HAR + controls + lagged signal."""
    terms = [Term(f"{asset}.har1"), Term(f"{asset}.har5"), Term(f"{asset}.har20")]
    terms += [Term(c) for c in controls]
    terms.append(lagged(signal))
    return ModelSpec(target=f"{asset}.rvol{horizon}", terms=tuple(terms),
                     cov=HAC(hac_lags), name=f"{asset}~{signal}")


def run_grid(
    panel,
    signals: Sequence[str],
    assets: Sequence[str],
    controls: Sequence[str] = (),
    q: float = DEFAULT_BH_Q,
    hac_lags: int = 5,
    horizon: int = 5,
    min_coverage: int = DEFAULT_MIN_COVERAGE,
) -> list[GridResult]:
    """One full-model estimate per signal-by-asset pair with BH across the grid.

    Cells whose estimation sample falls below ``min_coverage`` are recorded as
    inactive (reported as dashes) rather than raised; BH runs over the
    testable cells only.
    """
    results: list[GridResult] = []
    for signal in signals:
        for asset in assets:
            spec = grid_spec(signal, asset, controls, hac_lags=hac_lags, horizon=horizon)
            label = spec.terms[-1].name
            try:
                fit = estimate(spec, panel)
                n = fit.n_obs
            except ComputationError:
                fit, n = None, 0
            if fit is None or n < min_coverage:
                results.append(GridResult(signal, asset, n, float("nan"), float("nan"),
                                          float("nan"), float("nan"), float("nan"),
                                          False, active=False))
                continue
            results.append(GridResult(
                signal_id=signal, asset_id=asset, n=n,
                coefficient=float(fit.coefficients[label]),
                t_stat=float(fit.t_stats[label]),
                p_value=float(fit.p_values[label]),
                adj_r2=float(fit.adj_r2),
                bh_adjusted_p=float("nan"), bh_rejected=False, active=True,
            ))
    testable = [r for r in results if r.active]
    if testable:
        adjusted, rejected = benjamini_hochberg([r.p_value for r in testable], q)
        for r, adj, rej in zip(testable, adjusted, rejected):
            r.bh_adjusted_p = float(adj)
            r.bh_rejected = bool(rej)
    return results


def grid_long_frame(results: Sequence[GridResult]) -> pd.DataFrame:
    rows = [{
        "signal_id": r.signal_id, "asset_id": r.asset_id, "n": r.n,
        "coefficient": r.coefficient, "t_stat": r.t_stat, "p_value": r.p_value,
        "adj_r2": r.adj_r2, "bh_adjusted_p": r.bh_adjusted_p,
        "bh_rejected": r.bh_rejected, "active": r.active,
    } for r in results]
    return pd.DataFrame(rows, columns=["signal_id", "asset_id", "n", "coefficient", "t_stat",
                                       "p_value", "adj_r2", "bh_adjusted_p", "bh_rejected",
                                       "active"])


def grid_matrix_frame(results: Sequence[GridResult]) -> pd.DataFrame:
    """Assets x signals matrix of starred t-statistics; dash = inactive cell."""
    assets = sorted({r.asset_id for r in results})
    signals = sorted({r.signal_id for r in results})
    table = pd.DataFrame("-", index=assets, columns=signals)
    for r in results:
        if r.active:
            table.loc[r.asset_id, r.signal_id] = (
                f"{r.t_stat:.2f}{significance_stars(r.p_value)}")
    table.index.name = "asset"
    return table
