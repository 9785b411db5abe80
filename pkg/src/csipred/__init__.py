"""Effective-SINR prediction for 5G link adaptation.

Modules
-------
channel      Jakes tapped-delay-line fading and per-RB SINR grids.
link         EESM compression, BLER curves, CQI selection, standardisation.
predictors   Window construction, ZOH, interpolation, FLOPs.
wiener       Autocorrelation estimation and Wiener filter banks.
neural       DNN / GRU / LSTM with backpropagation and Adam.
simulation   Datasets, predictor fitting, TDD and FDD link loops.
experiments  Sweeps behind each results figure.
"""

from .channel import ChannelConfig, SinrGrid, generate_sinr_grid, pdp_profile
from .errors import ConfigurationError, DomainError, ResourceError, SizingError, TrainingError
from .link import CqiTable, EffSinrTrace, build_trace, load_cqi_table, select_cqi
from .predictors import PredictionBatch, PredictorModel, PredictorSpec, build_windows, flops
from .simulation import IDEAL, RunReport, fit_predictor, generate_dataset, run_fdd, run_tdd
from .wiener import build_filter_bank, estimate_autocorrelation

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "SinrGrid", "generate_sinr_grid", "pdp_profile",
    "ConfigurationError", "DomainError", "ResourceError", "SizingError", "TrainingError",
    "CqiTable", "EffSinrTrace", "build_trace", "load_cqi_table", "select_cqi",
    "PredictionBatch", "PredictorModel", "PredictorSpec", "build_windows", "flops",
    "IDEAL", "RunReport", "fit_predictor", "generate_dataset", "run_fdd", "run_tdd",
    "build_filter_bank", "estimate_autocorrelation",
]
