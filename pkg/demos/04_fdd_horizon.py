"""FDD link adaptation: one CQI per reporting interval.

A single prediction at horizon tau_fdd sets the CQI for the whole
interval. Short horizons track the start of the interval well but age
badly; longer ones trade early accuracy for a steadier average.
"""

from csipred.channel import ChannelConfig, generate_sinr_grid
from csipred.link import build_trace, load_cqi_table
from csipred.predictors import PredictorSpec
from csipred.simulation import dataset_from_traces, fit_predictor, run_fdd

table = load_cqi_table()
T = 32
train = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=10.0, n_slots=60_000, seed=1)), table)
test = build_trace(generate_sinr_grid(ChannelConfig(doppler_hz=10.0, n_slots=20_000, seed=2)), table)

print("horizon  Mbps    std over tau  P(-1)  P(0)   P(+1)")
for h in (2, 8, 16, 24, 31):
    spec = PredictorSpec("wiener", input_len=4, t_csi=T, mode="fdd_scalar", horizon=h)
    r = run_fdd(test, table, fit_predictor(spec, dataset_from_traces([train], spec)), T, h)
    e = r.cqi_error_hist
    print(f"{h:7d}  {r.unconditioned_tp:6.2f}  {r.conditioned_std:12.2f}  "
          f"{e.get(-1, 0):.3f}  {e.get(0, 0):.3f}  {e.get(1, 0):.3f}")
