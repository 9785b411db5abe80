"""Wiener prediction against zero-order hold in a TDD link.

Designs a Wiener filter bank from a training trace, then runs the TDD link
loop on an independent trace and reports throughput and prediction MSE
per lag, next to the zero-order-hold baseline and ideal CSI.
"""

import numpy as np

from csipred.channel import ChannelConfig, generate_sinr_grid
from csipred.link import build_trace, load_cqi_table
from csipred.predictors import PredictorSpec
from csipred.simulation import IDEAL, dataset_from_traces, fit_predictor, run_tdd, throughput_gain

table = load_cqi_table()
T = 16
train = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=10.0, n_slots=40_000, seed=1)), table)
test = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=10.0, n_slots=10_000, seed=2)), table)

reports = {}
for kind in ("zoh", "wiener"):
    spec = PredictorSpec(kind, input_len=4, t_csi=T)
    model = fit_predictor(spec, dataset_from_traces([train], spec))
    reports[kind] = run_tdd(test, table, model)
reports["ideal"] = run_tdd(test, table, IDEAL, t_csi=T, history=4)

for name, r in reports.items():
    print(f"{name:7s} {r.unconditioned_tp:7.2f} Mbps  gain {throughput_gain(r, reports['zoh']):+.2%}  "
          f"FLOPs {r.flops}")
print("\ntau  MSE zoh  MSE wiener  (dB)")
for tau in (1, 4, 8, 15):
    print(f"{tau:3d}  {reports['zoh'].mse_per_tau[tau - 1]:7.2f}  {reports['wiener'].mse_per_tau[tau - 1]:10.2f}")
print("\nCQI error histogram (true - used), wiener:",
      {k: round(v, 3) for k, v in sorted(reports["wiener"].cqi_error_hist.items()) if abs(k) <= 2})
