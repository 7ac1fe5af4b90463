"""End-to-end pipeline: config parsing, stages, deterministic artifacts.

Every artifact is written with a fixed column order and a fixed float
formatting, and all randomness derives from the single config seed via
indexed streams, so rerunning a config byte-for-byte reproduces the artifact
directory. The manifest (written last) lists every output file with its
SHA-256 digest.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import (inference, market_data, oos, portfolio, regression, signals, synthetic,
               volatility)
from .errors import ComputationError, DataIOError, PmvolError, ValidationError
from .market_data import AlignedPanel

MANIFEST_NAME = "manifest.json"
CONTROL_TERMS = ("vix_level", "dxy_return", "spx_return")


# ---------------------------------------------------------------------------
# Deterministic artifact writing
# ---------------------------------------------------------------------------

def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return format(float(v), ".12g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (pd.Timestamp, dt.date)):
        return pd.Timestamp(v).date().isoformat()
    return str(v)


def write_csv(path: Path, frame: pd.DataFrame, index_label: str | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(frame.columns)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = [str(c) for c in columns]
        if index_label is not None:
            header = [index_label] + header
        writer.writerow(header)
        for idx, row in zip(frame.index, frame.itertuples(index=False)):
            cells = [_fmt_cell(v) for v in row]
            if index_label is not None:
                cells = [_fmt_cell(idx)] + cells
            writer.writerow(cells)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(out: Path) -> dict:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            files[p.relative_to(out).as_posix()] = sha256_file(p)
    payload = {"files": files}
    (out / MANIFEST_NAME).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return payload


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalConfig:
    series: str
    variant: str = "abs"
    orientation: str = "raw"

    @property
    def column(self) -> str:
        if self.variant == "composite":
            return signals.COMPOSITE_COLUMN
        return f"{self.series}.{self.variant}"


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "artifacts"
    assets: tuple = ()
    signal_list: tuple = ()
    quotes_path: str | None = None
    prices_path: str | None = None
    controls_path: str | None = None
    calendar_start: dt.date | None = None
    calendar_end: dt.date | None = None
    holidays: str | None = None  # path, "default", or None for no holidays
    synthetic: synthetic.SyntheticConfig | None = None
    horizons: tuple = (1, 3, 5, 10)
    hac_lags: int = 5
    oos_initial: int = 120
    oos_horizon: int = 5
    min_coverage: int = 50
    bh_q: float = 0.05
    garch_target: bool = False
    bootstrap_enabled: bool = True
    bootstrap_block_length: int = 5
    bootstrap_resamples: int = 2000
    orthogonalize_enabled: bool = True
    orthogonalize_controls: tuple = ("ff_implied_change", "vix_level", "dxy_return", "spx_return")
    lead_lag_enabled: bool = True
    release_windows_enabled: bool = False
    release_window_width: int = 1
    release_event_dates: tuple = ()

    def validate(self) -> None:
        if not (0.0 < self.bh_q < 1.0):
            raise ValidationError(f"bh_q must be in (0, 1), got {self.bh_q}")
        if not self.assets:
            raise ValidationError("config must list at least one asset")
        if len(set(self.assets)) != len(self.assets):
            raise ValidationError("asset list contains duplicates")
        if not self.signal_list:
            raise ValidationError("config must list at least one signal")
        for sc in self.signal_list:
            if sc.variant not in ("vw", "abs", "dir", "ema5", "composite"):
                raise ValidationError(f"unknown signal variant {sc.variant!r}")
            if sc.orientation not in signals.ORIENTATIONS:
                raise ValidationError(f"unknown orientation {sc.orientation!r}")
        if any(h < 1 for h in self.horizons):
            raise ValidationError("horizons must be >= 1")
        if self.oos_initial < 10:
            raise ValidationError("oos initial window must be >= 10")
        if self.synthetic is None and not (self.quotes_path and self.prices_path
                                           and self.controls_path):
            raise ValidationError("config needs either data paths or a synthetic block")
        if self.synthetic is not None:
            missing_assets = set(self.assets) - set(self.synthetic.assets)
            if missing_assets:
                raise ValidationError(f"assets not in synthetic config: {sorted(missing_assets)}")
            known = {sc.series for sc in self.signal_list if sc.variant != "composite"}
            missing = known - set(self.synthetic.series)
            if missing:
                raise ValidationError(f"signal series not in synthetic config: {sorted(missing)}")

    @property
    def signal_columns(self) -> list[str]:
        seen = []
        for sc in self.signal_list:
            if sc.column not in seen:
                seen.append(sc.column)
        return seen

    @property
    def orientations(self) -> dict:
        return {sc.series: sc.orientation for sc in self.signal_list
                if sc.variant != "composite"}


def _parse_date(value) -> dt.date | None:
    return None if value is None else dt.date.fromisoformat(str(value))


def demo_config_path() -> Path:
    """Bundled synthetic config used by the demo script and the acceptance suite."""
    return Path(__file__).parent / "data" / "demo_config.json"


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    data = raw.get("data", {})
    cal = raw.get("calendar", {})
    syn = None
    if "synthetic" in raw:
        s = dict(raw["synthetic"])
        s.setdefault("seed", int(raw.get("seed", 0)))
        if "start" in s:
            s["start"] = dt.date.fromisoformat(s["start"])
        for key in ("assets", "series", "har_betas", "control_loadings", "garch_params",
                    "holidays"):
            if key in s:
                s[key] = tuple(s[key])
        syn = synthetic.SyntheticConfig(**s)
    rob = raw.get("robustness", {})
    boot = rob.get("bootstrap", {})
    orth = rob.get("orthogonalization", {})
    rel = rob.get("release_windows", {})
    cfg = RunConfig(
        seed=int(raw.get("seed", 0)),
        out_dir=str(raw.get("out_dir", "artifacts")),
        assets=tuple(raw.get("assets", [])),
        signal_list=tuple(SignalConfig(series=s.get("series", ""),
                                       variant=s.get("variant", "abs"),
                                       orientation=s.get("orientation", "raw"))
                          for s in raw.get("signals", [])),
        quotes_path=data.get("quotes"),
        prices_path=data.get("prices"),
        controls_path=data.get("controls"),
        calendar_start=_parse_date(cal.get("start")),
        calendar_end=_parse_date(cal.get("end")),
        holidays=cal.get("holidays"),
        synthetic=syn,
        horizons=tuple(raw.get("horizons", [1, 3, 5, 10])),
        hac_lags=int(raw.get("hac_lags", 5)),
        oos_initial=int(raw.get("oos", {}).get("initial", 120)),
        oos_horizon=int(raw.get("oos", {}).get("horizon", 5)),
        min_coverage=int(raw.get("min_coverage", 50)),
        bh_q=float(rob.get("bh_q", 0.05)),
        garch_target=bool(raw.get("garch_target", False)),
        bootstrap_enabled=bool(boot.get("enabled", True)),
        bootstrap_block_length=int(boot.get("block_length", 5)),
        bootstrap_resamples=int(boot.get("n_resamples", 2000)),
        orthogonalize_enabled=bool(orth.get("enabled", True)),
        orthogonalize_controls=tuple(orth.get("controls",
                                              ["ff_implied_change", "vix_level",
                                               "dxy_return", "spx_return"])),
        lead_lag_enabled=bool(rob.get("lead_lag", True)),
        release_windows_enabled=bool(rel.get("enabled", False)),
        release_window_width=int(rel.get("width", 1)),
        release_event_dates=tuple(_parse_date(d) for d in rel.get("event_dates", [])),
    )
    cfg.validate()
    return cfg


def derive_seed(seed: int, *key: int) -> int:
    """Stable integer sub-seed for a named stream."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Model specs per (asset, signal)
# ---------------------------------------------------------------------------

def nested_specs(asset: str, signal_column: str, hac_lags: int, horizon: int = 5):
    har = [regression.Term(f"{asset}.har1"), regression.Term(f"{asset}.har5"),
           regression.Term(f"{asset}.har20")]
    controls = [regression.Term(c) for c in CONTROL_TERMS]
    target = f"{asset}.rvol{horizon}"
    cov = regression.HAC(hac_lags)
    m1 = regression.ModelSpec(target, tuple(har), cov=cov, name="M1")
    m2 = regression.ModelSpec(target, tuple(har + controls), cov=cov, name="M2")
    m3 = regression.ModelSpec(target, tuple(har + controls + [regression.lagged(signal_column)]),
                              cov=cov, name="M3")
    return m1, m2, m3


def _pair_key(asset: str, signal_column: str) -> str:
    return f"{asset}__{signal_column}"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_simulate(cfg: RunConfig, out: Path) -> None:
    if cfg.synthetic is None:
        raise ValidationError("config has no synthetic block; nothing to simulate")
    res = synthetic.simulate(cfg.synthetic)
    inputs = out / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)

    quote_rows = pd.DataFrame([{
        "series_id": q.series_id, "contract_id": q.contract_id, "date": q.date,
        "close_prob": q.close_prob, "dollar_volume": q.dollar_volume,
        "open_interest": q.open_interest,
    } for q in res.quotes])
    write_csv(inputs / "quotes.csv", quote_rows)

    frame = res.panel.frame
    price_rows = []
    for asset in cfg.synthetic.assets:
        close = frame[f"{asset}.close"]
        for date, value in close.items():
            price_rows.append({"asset_id": asset, "date": date, "close": value})
    write_csv(inputs / "prices.csv", pd.DataFrame(price_rows))

    controls = frame[[c for c in market_data.CONTROL_COLUMNS[1:] if c in frame.columns]].copy()
    write_csv(inputs / "controls.csv", controls, index_label="date")

    write_csv(inputs / "events.csv",
              pd.DataFrame({"date": [pd.Timestamp(d) for d in res.truth.event_dates]}))
    synthetic.write_keyvalue_config(cfg.synthetic, inputs / "synthetic_config.txt")
    truth = {
        "coefficients": res.truth.coefficients,
        "signal_column": res.truth.signal_column,
        "target_columns": res.truth.target_columns,
        "event_dates": [pd.Timestamp(d).date().isoformat() for d in res.truth.event_dates],
    }
    (inputs / "ground_truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _input_path(cfg: RunConfig, out: Path, explicit: str | None, name: str) -> Path:
    if explicit:
        return Path(explicit)
    if cfg.synthetic is not None:
        return out / "inputs" / name
    raise ValidationError(f"no path configured for {name}")


def _holiday_dates(cfg: RunConfig) -> list:
    if cfg.holidays is None:
        return []
    if cfg.holidays == "default":
        return market_data.default_holidays()
    return market_data.load_holidays(cfg.holidays)


def stage_ingest(cfg: RunConfig, out: Path) -> None:
    quotes_res = market_data.ingest_contract_quotes(_input_path(cfg, out, cfg.quotes_path, "quotes.csv"))
    prices_res = market_data.ingest_price_bars(_input_path(cfg, out, cfg.prices_path, "prices.csv"))
    controls_res = market_data.ingest_controls(_input_path(cfg, out, cfg.controls_path, "controls.csv"))

    have_assets = {b.asset_id for b in prices_res.records}
    missing = set(cfg.assets) - have_assets
    if missing:
        raise ValidationError(f"configured assets missing from price data: {sorted(missing)}")
    have_series = {q.series_id for q in quotes_res.records}
    missing_series = {sc.series for sc in cfg.signal_list
                      if sc.variant != "composite"} - have_series
    if missing_series:
        raise ValidationError(f"configured series missing from quotes: {sorted(missing_series)}")

    all_dates = [b.date for b in prices_res.records]
    start = cfg.calendar_start or min(all_dates)
    end = cfg.calendar_end or max(all_dates)
    calendar = market_data.build_calendar(start, end, _holiday_dates(cfg))

    series_map = signals.build_signal_series(quotes_res.records, calendar,
                                             orientations=cfg.orientations)
    sig_frame = signals.signal_frame(series_map)
    panel = market_data.align_panel(prices_res.records, controls_res.records, calendar,
                                    signals=sig_frame)
    market_data.persist_panel(panel, out / "panel.csv")

    report_rows = []
    for name, res in (("quotes", quotes_res), ("prices", prices_res), ("controls", controls_res)):
        report_rows.append({"source": name, "accepted": len(res.records),
                            "rejected": res.n_rejected,
                            "detail": "; ".join(f"{r.row_id}: {r.reason}" for r in res.rejected)})
    write_csv(out / "ingest_report.csv", pd.DataFrame(report_rows))


def _load_panel(out: Path, name: str) -> AlignedPanel:
    path = out / name
    if not path.exists():
        raise DataIOError(f"missing artifact {path}; run the earlier stages first")
    return market_data.load_panel(path)


def stage_signals(cfg: RunConfig, out: Path) -> None:
    """Signal coverage report plus forecast targets and HAR regressors."""
    panel = _load_panel(out, "panel.csv")
    calendar = market_data.TradingCalendar(tuple(ts.date() for ts in panel.dates))
    quotes_res = market_data.ingest_contract_quotes(
        _input_path(cfg, out, cfg.quotes_path, "quotes.csv"))
    series_map = signals.build_signal_series(quotes_res.records, calendar,
                                             orientations=cfg.orientations)
    ret_col = f"{cfg.assets[0]}.ret"
    coverage = signals.coverage_report(series_map, panel.frame[ret_col],
                                       min_coverage=cfg.min_coverage)
    write_csv(out / "coverage.csv", coverage)

    targets = volatility.build_target_columns(
        panel.frame, cfg.assets, horizons=tuple(cfg.horizons) + (cfg.oos_horizon,),
        include_garch=cfg.garch_target)
    full = panel.with_columns(targets)
    market_data.persist_panel(full, out / "panel_full.csv")


def stage_estimate(cfg: RunConfig, out: Path) -> None:
    panel = _load_panel(out, "panel_full.csv")
    effects = []
    sweeps = []
    for asset in cfg.assets:
        for column in cfg.signal_columns:
            m1, m2, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
            try:
                fits = regression.fit_nested([m1, m2, m3], panel)
            except ComputationError:
                continue
            table = regression.nested_table(fits)
            write_csv(out / "tables" / f"{_pair_key(asset, column)}.csv", table,
                      index_label="regressor")
            fit3 = fits[2]
            label = fit3.term_label(column)
            effects.append({
                "asset_id": asset, "signal_id": column, "n": fit3.n_obs,
                "coefficient": fit3.coefficients[label],
                "t_stat": fit3.t_stats[label], "p_value": fit3.p_values[label],
                "iqr": float(fit3.design[label].quantile(0.75)
                             - fit3.design[label].quantile(0.25)),
                "iqr_effect": regression.effect_size(fit3, column),
            })
            try:
                sweep = regression.horizon_sweep(m3, panel, horizons=cfg.horizons, signal=label)
            except (ComputationError, ValidationError):
                continue
            sweep.insert(0, "signal_id", column)
            sweep.insert(0, "asset_id", asset)
            sweeps.append(sweep)
    write_csv(out / "effects.csv", pd.DataFrame(
        effects, columns=["asset_id", "signal_id", "n", "coefficient", "t_stat", "p_value",
                          "iqr", "iqr_effect"]))
    sweep_frame = pd.concat(sweeps, ignore_index=True) if sweeps else pd.DataFrame(
        columns=["asset_id", "signal_id", "horizon", "target", "n_obs", "coefficient",
                 "std_error", "t_stat", "p_value"])
    write_csv(out / "horizons.csv", sweep_frame)


def stage_grid(cfg: RunConfig, out: Path) -> None:
    panel = _load_panel(out, "panel_full.csv")
    results = inference.run_grid(
        panel, cfg.signal_columns, list(cfg.assets), controls=CONTROL_TERMS,
        q=cfg.bh_q, hac_lags=cfg.hac_lags, horizon=cfg.oos_horizon,
        min_coverage=cfg.min_coverage)
    write_csv(out / "grid.csv", inference.grid_long_frame(results))
    write_csv(out / "grid_matrix.csv", inference.grid_matrix_frame(results),
              index_label="asset")


def stage_oos(cfg: RunConfig, out: Path) -> None:
    panel = _load_panel(out, "panel_full.csv")
    rows = []
    for asset in cfg.assets:
        for column in cfg.signal_columns:
            _, m2, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
            try:
                run = oos.evaluate_oos(m2, m3, panel, initial=cfg.oos_initial,
                                       horizon=cfg.oos_horizon)
            except (ComputationError, ValidationError):
                rows.append({"asset_id": asset, "signal_id": column, "n_oos": 0,
                             "oos_r2": float("nan"), "msfe_ratio": float("nan"),
                             "cw_stat": float("nan"), "cw_pvalue": float("nan")})
                continue
            rows.append({"asset_id": asset, "signal_id": column, "n_oos": run.n_oos,
                         "oos_r2": run.oos_r2, "msfe_ratio": run.msfe_ratio,
                         "cw_stat": run.cw_stat, "cw_pvalue": run.cw_pvalue})
            cssed_frame = pd.DataFrame({
                "date": [r.date for r in run.records],
                "cssed": run.cssed,
            })
            write_csv(out / "cssed" / f"{_pair_key(asset, column)}.csv", cssed_frame)
            forecasts = pd.Series([r.yhat_augmented for r in run.records],
                                  index=pd.DatetimeIndex([r.date for r in run.records]))
            sigma_bar = float(panel.frame[m3.target].mean())  # in-sample mean realized vol
            weights = portfolio.vol_managed_weights(forecasts.clip(lower=1e-6), sigma_bar)
            write_csv(out / "weights" / f"{_pair_key(asset, column)}.csv",
                      pd.DataFrame({"date": forecasts.index,
                                    "sigma_hat": weights.sigma_hat.to_numpy(),
                                    "weight": weights.weight.to_numpy()}))
    write_csv(out / "oos_summary.csv", pd.DataFrame(
        rows, columns=["asset_id", "signal_id", "n_oos", "oos_r2", "msfe_ratio",
                       "cw_stat", "cw_pvalue"]))


def _release_event_dates(cfg: RunConfig, out: Path) -> list:
    if cfg.release_event_dates:
        return [pd.Timestamp(d) for d in cfg.release_event_dates]
    events_path = out / "inputs" / "events.csv"
    if events_path.exists():
        text = events_path.read_text(encoding="utf-8").strip().splitlines()[1:]
        return [pd.Timestamp(line) for line in text if line]
    return []


def stage_robustness(cfg: RunConfig, out: Path) -> None:
    panel = _load_panel(out, "panel_full.csv")
    rob = out / "robustness"

    if cfg.bootstrap_enabled:
        rows = []
        pair_index = 0
        for asset in cfg.assets:
            for column in cfg.signal_columns:
                _, _, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
                sub_seed = derive_seed(cfg.seed, 100, pair_index)
                pair_index += 1
                try:
                    res = inference.moving_block_bootstrap(
                        m3, panel, column, block_length=cfg.bootstrap_block_length,
                        n_resamples=cfg.bootstrap_resamples, seed=sub_seed)
                except (ComputationError, ValidationError):
                    continue
                rows.append({"asset_id": asset, "signal_id": column,
                             "point_estimate": res.point_estimate, "p_value": res.p_value,
                             "block_length": res.block_length,
                             "n_resamples": len(res.bootstrap_distribution),
                             "seed": res.seed, "n_redrawn": res.n_redrawn})
        write_csv(rob / "bootstrap.csv", pd.DataFrame(
            rows, columns=["asset_id", "signal_id", "point_estimate", "p_value",
                           "block_length", "n_resamples", "seed", "n_redrawn"]))

    if cfg.orthogonalize_enabled:
        rows = []
        controls = [c for c in cfg.orthogonalize_controls if c in panel.frame.columns]
        for column in cfg.signal_columns:
            try:
                resid, r2 = inference.orthogonalize(column, controls, panel)
            except (ComputationError, ValidationError):
                continue
            orth_col = str(resid.name)
            augmented = panel.with_columns({orth_col: resid})
            for asset in cfg.assets:
                _, _, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
                _, _, m3_orth = nested_specs(asset, orth_col, cfg.hac_lags, cfg.oos_horizon)
                try:
                    raw_fit = regression.estimate(m3, augmented)
                    orth_fit = regression.estimate(m3_orth, augmented)
                except (ComputationError, ValidationError):
                    continue
                rows.append({
                    "asset_id": asset, "signal_id": column, "first_stage_r2": r2,
                    "t_raw": raw_fit.t_stats[raw_fit.term_label(column)],
                    "t_orthogonal": orth_fit.t_stats[orth_fit.term_label(orth_col)],
                })
        write_csv(rob / "orthogonalization.csv", pd.DataFrame(
            rows, columns=["asset_id", "signal_id", "first_stage_r2", "t_raw", "t_orthogonal"]))

    if cfg.lead_lag_enabled:
        rows = []
        for asset in cfg.assets:
            for column in cfg.signal_columns:
                _, _, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
                try:
                    lag_fit, lead_fit = inference.lead_lag_test(m3, panel, column)
                except (ComputationError, ValidationError):
                    continue
                lag_label = lag_fit.term_label(column)
                lead_label = lead_fit.term_label(column)
                rows.append({
                    "asset_id": asset, "signal_id": column,
                    "t_lag": lag_fit.t_stats[lag_label], "p_lag": lag_fit.p_values[lag_label],
                    "t_lead": lead_fit.t_stats[lead_label],
                    "p_lead": lead_fit.p_values[lead_label],
                })
        write_csv(rob / "leadlag.csv", pd.DataFrame(
            rows, columns=["asset_id", "signal_id", "t_lag", "p_lag", "t_lead", "p_lead"]))

    if cfg.release_windows_enabled:
        events = _release_event_dates(cfg, out)
        rows = []
        dummy = regression.release_window_dummy(panel.frame.index, events,
                                                width=cfg.release_window_width)
        keep = regression.exclude_release_windows(panel.frame.index, events,
                                                  width=cfg.release_window_width)
        augmented = panel.with_columns({"release_window": dummy})
        for asset in cfg.assets:
            for column in cfg.signal_columns:
                _, _, m3 = nested_specs(asset, column, cfg.hac_lags, cfg.oos_horizon)
                with_dummy = regression.ModelSpec(
                    m3.target, m3.terms + (regression.Term("release_window"),),
                    cov=m3.cov, name="M3+dummy")
                subsample = regression.ModelSpec(
                    m3.target, m3.terms, cov=m3.cov, name="M3 ex-release", sample=keep)
                try:
                    dummy_fit = regression.estimate(with_dummy, augmented)
                    sub_fit = regression.estimate(subsample, augmented)
                except (ComputationError, ValidationError):
                    continue
                label = dummy_fit.term_label(column)
                rows.append({
                    "asset_id": asset, "signal_id": column,
                    "t_signal_with_dummy": dummy_fit.t_stats[label],
                    "t_dummy": dummy_fit.t_stats["release_window"],
                    "t_signal_ex_release": sub_fit.t_stats[sub_fit.term_label(column)],
                    "n_ex_release": sub_fit.n_obs,
                })
        write_csv(rob / "release_windows.csv", pd.DataFrame(
            rows, columns=["asset_id", "signal_id", "t_signal_with_dummy", "t_dummy",
                           "t_signal_ex_release", "n_ex_release"]))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _read_artifact(out: Path, name: str) -> pd.DataFrame:
    path = out / name
    if not path.exists():
        raise DataIOError(f"incomplete artifact set: missing {name}")
    return pd.read_csv(path)


def build_report(cfg: RunConfig, out: Path) -> str:
    grid = _read_artifact(out, "grid.csv")
    oos_summary = _read_artifact(out, "oos_summary.csv")
    coverage = _read_artifact(out, "coverage.csv")

    lines = ["# Volatility forecasting report", ""]
    lines.append("## Signal coverage")
    lines.append("")
    for _, row in coverage.iterrows():
        note = "excluded (insufficient coverage)" if row["excluded"] else "included"
        lines.append(f"- {row['series_id']}: {row['usable_obs']} usable observations, "
                     f"first active {row['first_active']}, {note}")
    lines.append("")

    lines.append("## Best signal per asset (full model)")
    lines.append("")
    active = grid[grid["active"] == True]  # noqa: E712 (CSV round-trips as bool)
    if len(active) == 0:
        lines.append("No testable cells: every signal-by-asset pair fell below the "
                     "coverage threshold.")
    else:
        for asset in cfg.assets:
            cells = active[active["asset_id"] == asset]
            if len(cells) == 0:
                lines.append(f"- {asset}: no testable signals")
                continue
            best = cells.loc[cells["t_stat"].abs().idxmax()]
            stars = regression.significance_stars(float(best["p_value"]))
            rejected = "survives" if bool(best["bh_rejected"]) else "does not survive"
            lines.append(
                f"- {asset}: {best['signal_id']} (coef {best['coefficient']:.3f}, "
                f"t = {best['t_stat']:.2f}{stars}, n = {int(best['n'])}); "
                f"{rejected} FDR correction at q = {cfg.bh_q}")
    lines.append("")

    lines.append("## Out-of-sample evaluation")
    lines.append("")
    lines.append("| asset | signal | n_oos | OOS R2 | MSFE ratio | CW p |")
    lines.append("|---|---|---|---|---|---|")
    for _, row in oos_summary.iterrows():
        if row["n_oos"] == 0 or not math.isfinite(row["msfe_ratio"]):
            lines.append(f"| {row['asset_id']} | {row['signal_id']} | 0 | - | - | - |")
            continue
        stars = regression.significance_stars(float(row["cw_pvalue"]))
        lines.append(
            f"| {row['asset_id']} | {row['signal_id']} | {int(row['n_oos'])} "
            f"| {row['oos_r2']:.3f} | {row['msfe_ratio']:.3f} "
            f"| {row['cw_pvalue']:.3f}{stars} |")
    lines.append("")

    rob_dir = out / "robustness"
    if rob_dir.exists():
        lines.append("## Robustness")
        lines.append("")
        for name in ("bootstrap", "orthogonalization", "leadlag", "release_windows"):
            path = rob_dir / f"{name}.csv"
            if path.exists():
                frame = pd.read_csv(path)
                lines.append(f"- {name}: {len(frame)} rows in robustness/{name}.csv")
        lines.append("")
    return "\n".join(lines) + "\n"


def stage_report(cfg: RunConfig, out: Path, require_manifest: bool = True) -> str:
    if require_manifest and not (out / MANIFEST_NAME).exists():
        raise DataIOError(f"incomplete artifact set: missing {MANIFEST_NAME} in {out}")
    text = build_report(cfg, out)
    (out / "report.md").write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

RUN_STAGES = ("simulate", "ingest", "signals", "estimate", "grid", "oos", "robustness",
              "report", "manifest")


def run(cfg: RunConfig, out: Path) -> dict:
    """Execute every stage and return the manifest payload.

    Any stage failure aborts the run with the stage name prefixed to the
    original error, preserving the exception class for exit-code mapping.
    """
    out.mkdir(parents=True, exist_ok=True)
    stages = []
    if cfg.synthetic is not None:
        stages.append(("simulate", lambda: stage_simulate(cfg, out)))
    stages += [
        ("ingest", lambda: stage_ingest(cfg, out)),
        ("signals", lambda: stage_signals(cfg, out)),
        ("estimate", lambda: stage_estimate(cfg, out)),
        ("grid", lambda: stage_grid(cfg, out)),
        ("oos", lambda: stage_oos(cfg, out)),
        ("robustness", lambda: stage_robustness(cfg, out)),
        ("report", lambda: stage_report(cfg, out, require_manifest=False)),
    ]
    for name, fn in stages:
        try:
            fn()
        except PmvolError as exc:
            raise type(exc)(f"[{name}] {exc}") from exc
    return write_manifest(out)
