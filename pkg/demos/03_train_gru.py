"""Training a GRU predictor with Adam and comparing it with Wiener.

Small enough to run in about a minute: 30k training slots, T_CSI = 4,
hidden size 16, early stopping on the validation loss.
"""

import numpy as np

from csipred.channel import ChannelConfig, generate_sinr_grid
from csipred.link import build_trace, load_cqi_table
from csipred.neural import TrainConfig
from csipred.predictors import PredictorSpec, build_windows
from csipred.simulation import dataset_from_traces, evaluate_mse, fit_predictor

table = load_cqi_table()
train = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=20.0, n_slots=30_000, seed=1)), table)
test = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=20.0, n_slots=10_000, seed=2)), table)

for kind in ("wiener", "gru"):
    spec = PredictorSpec(kind, input_len=4, hidden=16, t_csi=4)
    ds = dataset_from_traces([train], spec, stride=1 if kind == "gru" else None)
    model = fit_predictor(spec, ds, TrainConfig(epochs=60, patience=10), max_train_windows=20_000)
    batch = build_windows(test.best_cqi_sinr, spec).standardized(model.stats[0])
    mse = evaluate_mse(model, batch)
    print(f"{kind:6s} FLOPs {model.flops:5d}  MSE per tau (dB) {np.round(mse, 2)}")
    if kind == "gru":
        hist = np.asarray(model.info["history"][0])
        best = int(hist[:, 2].argmin())
        print(f"       {len(hist)} epochs, best validation loss {hist[best, 2]:.4f} at epoch {int(hist[best, 0])}")
