"""Prediction-market repricing signals for cryptocurrency volatility forecasting.

Pipeline: ingest quotes/prices/controls -> daily volume-weighted repricing
signals -> realized-volatility targets and HAR regressors -> nested OLS with
HAC/HC3 inference -> expanding-window out-of-sample evaluation -> robustness
battery (FDR, block bootstrap, orthogonalization, lead-lag).
"""

__version__ = "0.1.0"
