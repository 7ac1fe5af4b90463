import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmvol import oos
from pmvol.errors import ComputationError, ValidationError
from pmvol.regression import ModelSpec, Term, lagged

from conftest import make_panel


def toy_panel(seed=0, n=140, beta=0.5, delta=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    y = 0.1 + beta * x + rng.standard_normal(n)
    if delta:
        y[1:] += delta * z[:-1]
    return make_panel({"y": y, "x": x, "z": z})


BASE = ModelSpec("y", (Term("x"),))
AUG = ModelSpec("y", (Term("x"), lagged("z")))


def fixed_records(e_b, e_a, y=None, bench=None):
    y = y if y is not None else [1.0] * len(e_b)
    bench = bench if bench is not None else [0.0] * len(e_b)
    idx = pd.date_range("2024-01-01", periods=len(e_b), freq="B")
    return [oos.ForecastRecord(date=d, y_true=float(yt),
                               yhat_baseline=float(yt - eb), yhat_augmented=float(yt - ea),
                               mean_benchmark=float(b))
            for d, yt, eb, ea, b in zip(idx, y, e_b, e_a, bench)]


# ---------------------------------------------------------------------------
# expanding window mechanics
# ---------------------------------------------------------------------------

def test_boundary_one_record():
    # row 0 is unusable (lagged z missing), so 122 panel rows = 121 usable rows
    panel = toy_panel(n=122)
    records = oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=1)
    assert len(records) == 1
    assert records[0].date == panel.frame.index[-1]


def test_insufficient_rows_raise():
    panel = toy_panel(n=120)
    with pytest.raises(ComputationError):
        oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=1)


def test_targets_must_match():
    other = ModelSpec("x", (Term("z"),))
    with pytest.raises(ValidationError):
        oos.expanding_forecasts(BASE, other, toy_panel(), initial=10)


def test_first_forecast_matches_hand_refit():
    # 10 usable rows of training, forecast at row 10 (0-based), horizon 1
    panel = toy_panel(seed=3, n=12)
    records = oos.expanding_forecasts(BASE, AUG, panel, initial=10, horizon=1)
    frame = panel.frame
    z_lag = frame["z"].shift(1)
    first = records[0]
    pos = frame.index.get_loc(first.date)
    train = slice(1, pos)  # row 0 unusable (lagged z missing), training excludes the origin
    Xa = np.column_stack([np.ones(pos - 1), frame["x"].iloc[train],
                          z_lag.iloc[train]])
    ya = frame["y"].iloc[train].to_numpy()
    beta = np.linalg.lstsq(Xa, ya, rcond=None)[0]
    expected = beta[0] + beta[1] * frame["x"].iloc[pos] + beta[2] * z_lag.iloc[pos]
    assert first.yhat_augmented == pytest.approx(expected, abs=1e-12)
    assert first.mean_benchmark == pytest.approx(ya.mean(), abs=1e-12)


def test_training_excludes_unrealized_target_windows():
    # with horizon h, training for the first origin stops h rows before it
    panel = toy_panel(seed=4, n=140)
    rec_h1 = oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=1)
    rec_h5 = oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=5)
    assert len(rec_h1) == len(rec_h5)  # same origins, smaller training sets for h=5
    assert any(a.yhat_baseline != b.yhat_baseline for a, b in zip(rec_h1, rec_h5))


def test_no_lookahead_under_mutation():
    panel = toy_panel(seed=5, n=160)
    records = oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=5)
    cutoff = records[10].date
    mutated = panel.frame.copy()
    after = mutated.index > cutoff
    mutated.loc[after, :] = 99.0  # arbitrary garbage in every later row
    records2 = oos.expanding_forecasts(BASE, AUG, mutated, initial=120, horizon=5)
    for before, after_rec in zip(records[:11], records2[:11]):
        assert before.date == after_rec.date
        assert before.yhat_baseline == after_rec.yhat_baseline
        assert before.yhat_augmented == after_rec.yhat_augmented
        assert before.y_true == after_rec.y_true
        assert before.mean_benchmark == after_rec.mean_benchmark


# ---------------------------------------------------------------------------
# summary statistics
# ---------------------------------------------------------------------------

def test_msfe_identical_models():
    records = fixed_records([1.0, -2.0, 0.5], [1.0, -2.0, 0.5])
    assert oos.msfe_ratio(records) == 1.0


def test_msfe_perfect_augmented():
    records = fixed_records([1.0, 1.0], [0.0, 0.0], y=[2.0, 3.0], bench=[0.0, 0.0])
    assert oos.msfe_ratio(records) == 0.0
    assert oos.oos_r2(records) == 1.0


def test_msfe_hand_fixture():
    records = fixed_records([1.0, 2.0, 2.0], [1.0, 1.0, 2.0])
    assert oos.msfe_ratio(records) == pytest.approx(6.0 / 9.0)


def test_msfe_zero_denominator():
    records = fixed_records([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ComputationError):
        oos.msfe_ratio(records)


def test_oos_r2_zero_benchmark_denominator():
    records = fixed_records([1.0], [1.0], y=[5.0], bench=[5.0])
    with pytest.raises(ComputationError):
        oos.oos_r2(records)


def test_cssed_identical_models_flat():
    records = fixed_records([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    assert np.allclose(oos.cssed(records), 0.0)


def test_cssed_hand_fixture():
    records = fixed_records([2.0, 1.0], [1.0, 2.0])
    assert oos.cssed(records).tolist() == [3.0, -0.0] or oos.cssed(records).tolist() == [3.0, 0.0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=30))
def test_cssed_telescoping_and_msfe_sign(pairs):
    e_b = [a for a, _ in pairs]
    e_a = [b for _, b in pairs]
    records = fixed_records(e_b, e_a)
    path = oos.cssed(records)
    diffs = np.diff(np.concatenate([[0.0], path]))
    rec_e_b = np.array([r.e_b for r in records])
    rec_e_a = np.array([r.e_a for r in records])
    expected = rec_e_b ** 2 - rec_e_a ** 2
    assert np.allclose(diffs, expected, atol=1e-12)
    if float(rec_e_b @ rec_e_b) > 0:
        ratio = oos.msfe_ratio(records)
        assert (path[-1] > 0) == (ratio < 1) or math.isclose(path[-1], 0, abs_tol=1e-15)


# ---------------------------------------------------------------------------
# Clark-West
# ---------------------------------------------------------------------------

def test_cw_identical_forecasts_gives_half():
    records = fixed_records([1.0] * 40, [1.0] * 40)
    stat, p = oos.clark_west(records, horizon=1)
    assert stat == 0.0 and p == 0.5


def test_cw_requires_thirty_records():
    with pytest.raises(ValidationError):
        oos.clark_west(fixed_records([1.0] * 29, [0.5] * 29), horizon=1)


def test_cw_improvement_is_positive():
    rng = np.random.default_rng(12)
    e_b = rng.normal(0, 1.0, 200)
    e_a = rng.normal(0, 0.4, 200)
    records = fixed_records(e_b, e_a)
    stat, p = oos.clark_west(records, horizon=5)
    assert stat > 0 and p < 0.05


def test_cw_swap_negates_unadjusted_differential():
    # swapping the models negates the CSSED path; the CW statistic itself is
    # not antisymmetric because its adjustment term is invariant to the swap
    rng = np.random.default_rng(13)
    records = fixed_records(rng.normal(0, 1, 60), rng.normal(0, 1, 60))
    swapped = [oos.ForecastRecord(r.date, r.y_true, r.yhat_augmented, r.yhat_baseline,
                                  r.mean_benchmark) for r in records]
    assert np.allclose(oos.cssed(swapped), -oos.cssed(records))


def test_oos_r2_invariant_to_redating():
    rng = np.random.default_rng(77)
    e_b = rng.normal(0, 1, 50)
    e_a = rng.normal(0, 1, 50)
    y = rng.normal(1, 0.5, 50)
    bench = rng.normal(1, 0.5, 50)
    records = fixed_records(e_b, e_a, y=y, bench=bench)
    shifted = [oos.ForecastRecord(r.date + pd.Timedelta(days=1000), r.y_true,
                                  r.yhat_baseline, r.yhat_augmented, r.mean_benchmark)
               for r in records]
    assert oos.oos_r2(shifted) == oos.oos_r2(records)
    assert oos.msfe_ratio(shifted) == oos.msfe_ratio(records)


def test_cw_power_with_injected_signal():
    # threshold is a fixture calibration: a real predictor at this strength
    # should be detected in at least 80% of runs
    hits = 0
    runs = 50
    for i in range(runs):
        panel = toy_panel(seed=900 + i, n=232, delta=0.4)
        records = oos.expanding_forecasts(BASE, AUG, panel, initial=120, horizon=1)
        _, p = oos.clark_west(records, horizon=1)
        hits += p < 0.05
    assert hits >= 0.8 * runs


def test_evaluate_oos_consistency():
    panel = toy_panel(seed=6, n=200, delta=0.4)
    run = oos.evaluate_oos(BASE, AUG, panel, initial=120, horizon=1)
    e_b = np.array([r.e_b for r in run.records])
    e_a = np.array([r.e_a for r in run.records])
    assert run.n_oos == len(run.records)
    assert run.msfe_ratio == pytest.approx(float(e_a @ e_a) / float(e_b @ e_b))
    assert (run.cssed[-1] > 0) == (run.msfe_ratio < 1)
    assert run.records == sorted(run.records, key=lambda r: r.date)
