import datetime as dt

import numpy as np
import pandas as pd
import pytest

from pmvol import market_data as md


@pytest.fixture
def jan_2024_calendar():
    return md.build_calendar(dt.date(2024, 1, 1), dt.date(2024, 3, 29), holidays=[])


def make_quote(series="KXFED", contract="K1", date=dt.date(2024, 1, 2),
               prob=0.5, volume=100.0, oi=1000.0):
    return md.ContractQuote(series_id=series, contract_id=contract, date=date,
                            close_prob=prob, dollar_volume=volume, open_interest=oi)


def make_panel(columns: dict, start="2024-01-01", freq="B") -> md.AlignedPanel:
    n = len(next(iter(columns.values())))
    idx = pd.date_range(start, periods=n, freq=freq, name="date")
    frame = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in columns.items()}, index=idx)
    return md.AlignedPanel(frame)
