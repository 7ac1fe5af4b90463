"""Ground-truth data generator for estimator verification.

Generation order enforces the causal structure being tested: contract quotes
(and hence signals) are drawn first from their own RNG streams, the linear
volatility target is built from lagged signals second, and daily returns are
back-filled last by scaling i.i.d. shocks to the prevailing target level. The
stored volatility target follows the configured linear model exactly, so
estimators run on the panel face a known coefficient vector; recomputing
realized volatility from the back-filled returns tracks it only approximately,
which is all the end-to-end pipeline needs.

Every stream derives from (seed, spawn_key), so identical configs give
identical panels regardless of execution order.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .market_data import AlignedPanel, ContractQuote, TradingCalendar, build_calendar
from .signals import build_signal_series, signal_frame

_BURN_IN = 21
_VOL_FLOOR = 0.05
_BASE_PRICE = 100.0

CONTROL_MEANS = {"vix_level": 16.0}


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_days: int = 500
    start: dt.date = dt.date(2023, 1, 2)
    assets: tuple = ("BTC",)
    series: tuple = ("KXFED",)
    # target equation: rvol5 = a + b.har + g.ctrl + delta * signal[t-1] + noise
    har_intercept: float = 0.347
    har_betas: tuple = (0.5, 6.0, 0.0)
    control_loadings: tuple = (0.005, 4.0, -2.5)  # vix_level, dxy_return, spx_return
    delta: float = 0.0
    signal_variant: str = "abs"  # vw | abs | dir
    signal_scale: float = 0.028  # prob-path innovation sd on ordinary days
    event_every: int = 0  # 0 disables announcement clustering
    event_multiplier: float = 5.0  # variance multiplier on event days
    noise_scale: float = 0.05
    base_vol: float = 0.634  # burn-in annualized vol level
    orientation: str = "raw"
    garch_params: tuple = (1e-6, 0.08, 0.90)
    zero_volume_rate: float = 0.0
    n_contracts: int = 1
    holidays: tuple = ()

    def __post_init__(self):
        omega, alpha, beta = self.garch_params
        if not (omega > 0 and alpha >= 0 and beta >= 0):
            raise ValidationError("garch parameters must satisfy omega > 0, alpha, beta >= 0")
        if alpha + beta >= 1:
            raise ValidationError(f"garch persistence {alpha + beta} must be < 1")
        if self.n_days < _BURN_IN + 10:
            raise ValidationError(f"n_days must be >= {_BURN_IN + 10}")
        if self.signal_variant not in ("vw", "abs", "dir"):
            raise ValidationError(f"unknown signal_variant {self.signal_variant!r}")
        if not (0.0 <= self.zero_volume_rate < 1.0):
            raise ValidationError("zero_volume_rate must be in [0, 1)")
        if self.n_contracts < 1:
            raise ValidationError("n_contracts must be >= 1")


@dataclass
class GroundTruth:
    config: SyntheticConfig
    coefficients: dict  # const, har1, har5, har20, vix_level, dxy_return, spx_return, signal_lag1
    signal_column: str
    target_columns: dict  # asset -> column name
    event_dates: list
    noise: dict = field(default_factory=dict)  # asset -> pd.Series

    def noiseless(self, panel, asset: str) -> pd.Series:
        """Recompute the noise-free target from panel regressors and true coefficients."""
        frame = panel.frame if isinstance(panel, AlignedPanel) else panel
        c = self.coefficients
        out = (c["const"]
               + c["har1"] * frame[f"{asset}.har1"]
               + c["har5"] * frame[f"{asset}.har5"]
               + c["har20"] * frame[f"{asset}.har20"]
               + c["vix_level"] * frame["vix_level"]
               + c["dxy_return"] * frame["dxy_return"]
               + c["spx_return"] * frame["spx_return"]
               + c["signal_lag1"] * frame[self.signal_column].shift(1))
        return out.where(self.noise[asset].notna())


@dataclass
class SimulationResult:
    panel: AlignedPanel
    truth: GroundTruth
    quotes: list


_TUPLE_FIELDS = {"assets", "series", "har_betas", "control_loadings", "garch_params",
                 "holidays"}
_INT_FIELDS = {"seed", "n_days", "event_every", "n_contracts"}
_STR_FIELDS = {"signal_variant", "orientation"}


def load_keyvalue_config(path) -> SyntheticConfig:
    """Parse a plain `key = value` text file into a SyntheticConfig.

    Lists use commas (`assets = BTC, ETH`), dates are ISO, '#' starts a
    comment. Unknown keys are rejected.
    """
    from .errors import DataIOError
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read synthetic config {path}: {exc}") from exc
    valid = {f.name for f in dataclasses.fields(SyntheticConfig)}
    kwargs = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{line_no}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in valid:
            raise ValidationError(f"{path}:{line_no}: unknown key {key!r}")
        if key == "start":
            kwargs[key] = dt.date.fromisoformat(raw)
        elif key in _TUPLE_FIELDS:
            parts = tuple(p.strip() for p in raw.split(",") if p.strip())
            if key == "holidays":
                kwargs[key] = tuple(dt.date.fromisoformat(p) for p in parts)
            elif key in ("assets", "series"):
                kwargs[key] = parts
            else:
                kwargs[key] = tuple(float(p) for p in parts)
        elif key in _INT_FIELDS:
            kwargs[key] = int(raw)
        elif key in _STR_FIELDS:
            kwargs[key] = raw
        else:
            kwargs[key] = float(raw)
    return SyntheticConfig(**kwargs)


def write_keyvalue_config(config: SyntheticConfig, path) -> None:
    lines = []
    for f in dataclasses.fields(SyntheticConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            rendered = ", ".join(str(v) for v in value)
        elif isinstance(value, dt.date):
            rendered = value.isoformat()
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _rng(config: SyntheticConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=tuple(key)))


def trading_dates(config: SyntheticConfig) -> TradingCalendar:
    """First n_days trading dates from the configured start."""
    # generous horizon, then truncate to exactly n_days
    end = config.start + dt.timedelta(days=int(config.n_days * 2) + 30)
    cal = build_calendar(config.start, end, config.holidays)
    if len(cal) < config.n_days:
        raise ValidationError("calendar horizon too short")
    return TradingCalendar(cal.included_dates[: config.n_days])


def event_positions(n_days: int, event_every: int) -> np.ndarray:
    if event_every <= 0:
        return np.empty(0, dtype=int)
    return np.arange(event_every, n_days, event_every)


def _prob_paths(config: SyntheticConfig, n_days: int, series_index: int) -> np.ndarray:
    """Mean-reverting closing-probability paths, one row per contract."""
    rng = _rng(config, 0, series_index)
    scale = np.full(n_days, config.signal_scale)
    scale[event_positions(n_days, config.event_every)] *= math.sqrt(config.event_multiplier)
    paths = np.empty((config.n_contracts, n_days))
    for j in range(config.n_contracts):
        p = 0.35 + 0.3 * rng.random()
        z = rng.standard_normal(n_days)
        for t in range(n_days):
            p = p + 0.05 * (0.5 - p) + scale[t] * z[t]
            p = min(max(p, 0.02), 0.98)
            paths[j, t] = p
    return paths


def simulate_quotes(config: SyntheticConfig, calendar: TradingCalendar) -> list:
    """Contract quotes whose volume-weighted deltas carry the configured signal process."""
    dates = list(calendar.included_dates)
    n = len(dates)
    quotes = []
    for s_idx, series_id in enumerate(config.series):
        paths = _prob_paths(config, n, s_idx)
        vol_rng = _rng(config, 1, s_idx)
        vols = np.exp(vol_rng.normal(math.log(9000.0), 0.8, size=(config.n_contracts, n)))
        vols[:, event_positions(n, config.event_every)] *= 5.0
        if config.zero_volume_rate > 0:
            dead = vol_rng.random(n) < config.zero_volume_rate
            vols[:, dead] = 0.0
        oi = np.round(vols * 10.0, 2)
        for j in range(config.n_contracts):
            contract_id = f"{series_id}-C{j + 1}"
            for t, d in enumerate(dates):
                quotes.append(ContractQuote(
                    series_id=series_id, contract_id=contract_id, date=d,
                    close_prob=round(float(paths[j, t]), 6),
                    dollar_volume=round(float(vols[j, t]), 2),
                    open_interest=float(oi[j, t]),
                ))
    return quotes


def simulate_announcement_signal(config: SyntheticConfig) -> tuple[pd.Series, list]:
    """Signal innovations with variance multiplied on scheduled event dates.

    Returns the signal column and the event-date list for release-window
    dummy tests.
    """
    calendar = trading_dates(config)
    idx = calendar.index()
    n = len(idx)
    pos = event_positions(n, config.event_every)
    scale = np.full(n, config.signal_scale)
    scale[pos] *= math.sqrt(config.event_multiplier)
    rng = _rng(config, 7)
    values = rng.standard_normal(n) * scale
    return pd.Series(values, index=idx), [idx[i] for i in pos]


def simulate_controls(config: SyntheticConfig, idx: pd.DatetimeIndex) -> pd.DataFrame:
    rng = _rng(config, 2)
    n = len(idx)
    vix = np.empty(n)
    level = CONTROL_MEANS["vix_level"]
    for t in range(n):
        level = CONTROL_MEANS["vix_level"] + 0.95 * (level - CONTROL_MEANS["vix_level"]) \
            + 0.8 * rng.standard_normal()
        vix[t] = max(level, 5.0)
    return pd.DataFrame({
        "vix_level": vix,
        "dxy_return": rng.normal(0.0, 0.004, n),
        "spx_return": rng.normal(0.0, 0.010, n),
        "ff_implied_change": rng.normal(0.0, 0.02, n),
        "ust10y_return": rng.normal(0.0, 0.005, n),
        "dvol_level": np.maximum(50.0 + np.cumsum(rng.normal(0.0, 0.5, n)), 10.0),
    }, index=idx)


def simulate_panel(config: SyntheticConfig) -> tuple[AlignedPanel, GroundTruth]:
    res = simulate(config)
    return res.panel, res.truth


def simulate(config: SyntheticConfig) -> SimulationResult:
    calendar = trading_dates(config)
    idx = calendar.index()
    n = config.n_days

    quotes = simulate_quotes(config, calendar)
    series_map = build_signal_series(
        quotes, calendar, orientations={s: config.orientation for s in config.series})
    signals = signal_frame(series_map)
    signal_column = f"{config.series[0]}.{config.signal_variant}"
    sig = signals[signal_column].to_numpy()

    controls = simulate_controls(config, idx)
    ctrl = controls[["vix_level", "dxy_return", "spx_return"]].to_numpy()

    b1, b2, b3 = config.har_betas
    g1, g2, g3 = config.control_loadings
    ann = math.sqrt(252.0)
    coefficients = {
        "const": config.har_intercept, "har1": b1, "har5": b2, "har20": b3,
        "vix_level": g1, "dxy_return": g2, "spx_return": g3, "signal_lag1": config.delta,
    }

    frame = pd.DataFrame(index=idx)
    for c in controls.columns:
        frame[c] = controls[c]
    for c in signals.columns:
        frame[c] = signals[c]

    truth = GroundTruth(
        config=config, coefficients=coefficients, signal_column=signal_column,
        target_columns={a: f"{a}.rvol5" for a in config.assets},
        event_dates=[idx[i] for i in event_positions(n, config.event_every)],
    )

    for a_idx, asset in enumerate(config.assets):
        rng = _rng(config, 3, a_idx)
        z = rng.standard_normal(n)
        eta = _rng(config, 4, a_idx).standard_normal(n) * config.noise_scale
        r = np.empty(n)
        r[:_BURN_IN] = (config.base_vol / ann) * z[:_BURN_IN]
        rv = np.full(n, np.nan)
        noise = np.full(n, np.nan)
        abs_r = np.abs(r)
        for t in range(_BURN_IN - 1, n):
            if t >= _BURN_IN:
                sigma = max(rv[t - 1] if not math.isnan(rv[t - 1]) else config.base_vol,
                            _VOL_FLOOR) / ann
                r[t] = sigma * z[t]
                abs_r[t] = abs(r[t])
            har1 = abs_r[t - 1]
            har5 = abs_r[t - 5: t].mean()
            har20 = abs_r[t - 20: t].mean()
            s_prev = sig[t - 1]
            sig_term = config.delta * s_prev if not math.isnan(s_prev) else 0.0
            clean = (config.har_intercept + b1 * har1 + b2 * har5 + b3 * har20
                     + g1 * ctrl[t, 0] + g2 * ctrl[t, 1] + g3 * ctrl[t, 2] + sig_term)
            rv[t] = max(clean + eta[t], 1e-4)
            noise[t] = rv[t] - clean

        ret = pd.Series(r, index=idx)
        frame[f"{asset}.close"] = _BASE_PRICE * np.exp(np.cumsum(r))
        frame[f"{asset}.ret"] = ret
        a = ret.abs()
        frame[f"{asset}.har1"] = a.shift(1)
        frame[f"{asset}.har5"] = a.rolling(5, min_periods=5).mean().shift(1)
        frame[f"{asset}.har20"] = a.rolling(20, min_periods=20).mean().shift(1)
        target = pd.Series(rv, index=idx)
        target[target.index[n - 5:]] = np.nan  # fewer than 5 future returns exist
        frame[f"{asset}.rvol5"] = target
        truth.noise[asset] = pd.Series(noise, index=idx).where(target.notna())

    panel = AlignedPanel(frame.astype(float))
    return SimulationResult(panel=panel, truth=truth, quotes=quotes)


def simulate_garch_returns(config: SyntheticConfig) -> pd.Series:
    """Gaussian-innovation GARCH(1,1) path seeded at the unconditional variance."""
    omega, alpha, beta = config.garch_params
    n = config.n_days
    rng = _rng(config, 5)
    z = rng.standard_normal(n)
    var0 = omega / (1.0 - alpha - beta)
    r = np.empty(n)
    s2 = var0
    for t in range(n):
        if t > 0:
            s2 = omega + alpha * r[t - 1] ** 2 + beta * s2
        r[t] = math.sqrt(s2) * z[t]
    return pd.Series(r, index=trading_dates(config).index())
