"""Experiment sweeps producing one plot-ready table per results figure.

Every sweep trains or designs its predictors on a trace drawn with the
config's training seed and scores them on an independent trace drawn with
the test seed, so no sweep point sees its evaluation data in training.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import csvio
from .channel import ChannelConfig, config_to_dict, generate_sinr_grid, mixed_doppler_configs, pdp_profile
from .config import ExperimentConfig
from .link import CqiTable, build_trace
from .predictors import NEURAL_KINDS, PredictionBatch, PredictorModel, PredictorSpec, build_windows, flops
from .simulation import (IDEAL, dataset_from_traces, evaluate_mse, fit_predictor, run_fdd, run_tdd,
                         spec_to_dict)

log = logging.getLogger(__name__)

FIGURES = ("complexity", "input_len", "fd_tcsi", "interpolation", "target_strategy", "tdd_throughput",
           "fdd_horizon", "doppler_generalization", "profile_generalization")

_trace_cache: dict = {}


def get_trace(config: ChannelConfig, table: CqiTable):
    """Simulated and compressed trace, memoised per process."""
    key = json.dumps([config_to_dict(config), table.to_dict()], sort_keys=True)
    if key not in _trace_cache:
        if len(_trace_cache) > 64:
            _trace_cache.clear()
        _trace_cache[key] = build_trace(generate_sinr_grid(config), table)
    return _trace_cache[key]


def train_trace(exp: ExperimentConfig, table, **changes):
    cfg = replace(exp.channel, n_slots=exp.scale.train_slots, seed=exp.train_seed, **changes)
    return get_trace(cfg, table)


def test_trace(exp: ExperimentConfig, table, **changes):
    cfg = replace(exp.channel, n_slots=exp.scale.test_slots, seed=exp.test_seed, **changes)
    return get_trace(cfg, table)


def _stride(exp: ExperimentConfig, spec: PredictorSpec):
    return exp.scale.neural_stride if spec.kind in NEURAL_KINDS else None


def fit_on(exp: ExperimentConfig, spec: PredictorSpec, traces, max_windows=None) -> PredictorModel:
    """Fit `spec` on the given training traces with the config's scale."""
    ds = dataset_from_traces(traces, spec, stride=_stride(exp, spec))
    return fit_predictor(spec, ds, exp.train, seed=exp.seed,
                         max_train_windows=max_windows or exp.scale.max_train_windows)


def trace_mse(model: PredictorModel, trace) -> np.ndarray:
    """Per-horizon MSE (dB) of `model` on every window of `trace`."""
    spec = model.spec
    batches = []
    for j in range(spec.n_tracks):
        cqi = j + 1 if spec.target == "by_cqi" else None
        b = build_windows(trace.track(spec.target, cqi), spec)
        batches.append(b.standardized(model.stats[j]))
    return evaluate_mse(model, batches)


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _spec(exp: ExperimentConfig, kind: str, **kw) -> PredictorSpec:
    base = next((p for p in exp.predictors if p.kind == kind), PredictorSpec(kind))
    return base.with_(kind=kind, mode=kw.pop("mode", "tdd_vector"), horizon=kw.pop("horizon", None), **kw)


# -- individual sweep points (module level so worker processes can run them) --

def _complexity_point(args):
    exp, kind, hidden, t_csi = args
    table = exp.table()
    spec = _spec(exp, kind, hidden=hidden, t_csi=t_csi)
    model = fit_on(exp, spec, [train_trace(exp, table)])
    return [kind, hidden if kind in NEURAL_KINDS else "", spec.input_len, flops(spec),
            float(trace_mse(model, test_trace(exp, table)).mean())]


def complexity(exp: ExperimentConfig, workers: int = 1):
    """MSE versus inference FLOPs for each architecture and width."""
    t_csi = exp.sweep.t_csi_list[0]
    points = [(exp, "wiener", 0, t_csi)]
    points += [(exp, k, d, t_csi) for k in NEURAL_KINDS for d in exp.sweep.hidden_sizes]
    rows = _pmap(_complexity_point, points, workers)
    return ["architecture", "hidden", "input_len", "flops", "mse_db"], rows


def _input_len_point(args):
    exp, kind, fd, p, t_csi = args
    table = exp.table()
    spec = _spec(exp, kind, input_len=p, t_csi=t_csi)
    model = fit_on(exp, spec, [train_trace(exp, table, doppler_hz=fd)])
    return [kind, fd, t_csi, p, float(trace_mse(model, test_trace(exp, table, doppler_hz=fd)).mean())]


def input_len(exp: ExperimentConfig, workers: int = 1, kinds=("wiener", "gru")):
    """MSE versus input sequence length P."""
    t_csi = exp.sweep.t_csi_list[0]
    points = [(exp, k, fd, p, t_csi) for k in kinds for fd in exp.sweep.dopplers for p in exp.sweep.input_lens]
    return ["predictor", "doppler_hz", "t_csi", "input_len", "mse_db"], _pmap(_input_len_point, points, workers)


def _fd_tcsi_point(args):
    exp, kind, fd, t_csi = args
    table = exp.table()
    spec = _spec(exp, kind, t_csi=t_csi)
    model = fit_on(exp, spec, [train_trace(exp, table, doppler_hz=fd)])
    mse = trace_mse(model, test_trace(exp, table, doppler_hz=fd))
    return [[kind, fd, t_csi, fd * t_csi, tau, fd * tau, float(m)] for tau, m in enumerate(mse, start=1)]


def fd_tcsi(exp: ExperimentConfig, workers: int = 1, kinds=("wiener", "gru"), points=None):
    """Per-horizon MSE of one model per (Doppler, T_CSI) point.

    The waterfall value of a point is its row at the last horizon
    ``tau = T_CSI - 1``; the full rows give the per-horizon curves.
    """
    pts = points or [(fd, t) for fd in exp.sweep.dopplers for t in exp.sweep.t_csi_list]
    items = [(exp, k, fd, t) for k in kinds for fd, t in pts]
    rows = [r for block in _pmap(_fd_tcsi_point, items, workers) for r in block]
    return ["predictor", "doppler_hz", "t_csi", "product", "tau", "horizon_product", "mse_db"], rows


def _tdd_rows(exp, table, t_csi, specs, doppler=None):
    kw = {} if doppler is None else {"doppler_hz": doppler}
    tr, te = train_trace(exp, table, **kw), test_trace(exp, table, **kw)
    rows = []
    history = max(s.input_len for s in specs) if specs else 1
    ideal = run_tdd(te, table, IDEAL, t_csi=t_csi, history=history)
    reports = [("ideal", ideal)]
    for name, spec in specs:
        reports.append((name, run_tdd(te, table, fit_on(exp, spec, [tr]))))
    for name, r in reports:
        for tau in range(1, t_csi):
            rows.append([name, r.flops, tau, float(r.conditioned_tp[tau - 1]), float(r.mse_per_tau[tau - 1]),
                         r.unconditioned_tp])
    return rows


def tdd_throughput(exp: ExperimentConfig, workers: int = 1):
    """Conditioned throughput and MSE per lag for the TDD loop."""
    t_csi = exp.sweep.t_csi_list[-1]
    specs = [(s.kind, s.with_(t_csi=t_csi, mode="tdd_vector", horizon=None)) for s in exp.predictors]
    rows = _tdd_rows(exp, exp.table(), t_csi, specs)
    return ["predictor", "flops", "tau", "throughput_mbps", "mse_db", "unconditioned_tp"], rows


def interpolation(exp: ExperimentConfig, workers: int = 1):
    """GRU fed decimated versus densified (linear / LMMSE) inputs."""
    t_csi = exp.sweep.t_csi_list[-1]
    base = _spec(exp, "gru", t_csi=t_csi)
    step = max(1, t_csi // 4)
    specs = [("zoh", base.with_(kind="zoh")), ("wiener", base.with_(kind="wiener")), ("gru", base)]
    specs += [(f"gru_{m}", base.with_(input_mode=m, interp_step=step)) for m in ("linear", "lmmse")]
    rows = _tdd_rows(exp, exp.table(), t_csi, specs)
    return ["predictor", "flops", "tau", "throughput_mbps", "mse_db", "unconditioned_tp"], rows


def _target_point(args):
    exp, kind, target, t_csi = args
    table = exp.table()
    spec = _spec(exp, kind, t_csi=t_csi, target=target)
    model = fit_on(exp, spec, [train_trace(exp, table)])
    return [kind, target, flops(spec), float(trace_mse(model, test_trace(exp, table)).mean())]


def target_strategy(exp: ExperimentConfig, workers: int = 1, kinds=("wiener", "gru")):
    """Best-CQI versus by-CQI prediction: MSE and FLOPs."""
    t_csi = exp.sweep.t_csi_list[0]
    items = [(exp, k, tgt, t_csi) for k in kinds for tgt in ("best_cqi", "by_cqi")]
    rows = _pmap(_target_point, items, workers)
    return ["predictor", "target", "flops", "mse_db"], rows


def _fdd_point(args):
    exp, kind, horizon, t_csi = args
    table = exp.table()
    te = test_trace(exp, table)
    if kind == IDEAL:
        r = run_fdd(te, table, IDEAL, t_csi, horizon, history=_spec(exp, "gru").input_len)
    else:
        spec = _spec(exp, kind, t_csi=t_csi, mode="fdd_scalar", horizon=horizon)
        r = run_fdd(te, table, fit_on(exp, spec, [train_trace(exp, table)]), t_csi, horizon)
    return r


def fdd_reports(exp: ExperimentConfig, kind: str = "gru", workers: int = 1, t_csi: int | None = None):
    t_csi = t_csi or exp.sweep.t_csi_list[-1]
    items = [(exp, kind, h, t_csi) for h in exp.sweep.horizons]
    return dict(zip(exp.sweep.horizons, _pmap(_fdd_point, items, workers)))


def fdd_horizon(exp: ExperimentConfig, workers: int = 1, kind: str = "gru"):
    """FDD throughput per lag for each prediction horizon, plus CQI errors."""
    reports = fdd_reports(exp, kind, workers)
    rows = []
    for h, r in reports.items():
        hist = r.cqi_error_hist
        for tau in range(1, r.t_csi):
            rows.append([kind, h, tau, float(r.conditioned_tp[tau - 1]), r.unconditioned_tp, r.conditioned_std,
                         hist.get(-1, 0.0), hist.get(0, 0.0), hist.get(1, 0.0)])
    return (["predictor", "horizon", "tau", "throughput_mbps", "unconditioned_tp", "conditioned_std",
             "p_err_m1", "p_err_0", "p_err_p1"], rows)


def mixed_traces(exp: ExperimentConfig, table, dopplers=None):
    base = replace(exp.channel, n_slots=exp.scale.mixed_slots, seed=exp.train_seed)
    return [get_trace(c, table) for c in mixed_doppler_configs(base, dopplers or exp.sweep.mixed_dopplers)]


def _generalization_point(args):
    exp, kind, fd, t_csi = args
    table = exp.table()
    spec = _spec(exp, kind, t_csi=t_csi)
    model = fit_on(exp, spec, [train_trace(exp, table, doppler_hz=fd)])
    return float(trace_mse(model, test_trace(exp, table, doppler_hz=fd)).mean())


def doppler_generalization(exp: ExperimentConfig, workers: int = 1, kinds=("wiener", "gru"), t_csi: int = 4):
    """Per-Doppler versus mixed-Doppler training, scored per test Doppler."""
    table = exp.table()
    rows = []
    mixed = mixed_traces(exp, table)
    for kind in kinds:
        spec = _spec(exp, kind, t_csi=t_csi)
        mm = fit_on(exp, spec, mixed, exp.scale.max_mixed_windows)
        own = _pmap(_generalization_point, [(exp, kind, fd, t_csi) for fd in exp.sweep.dopplers], workers)
        for fd, m_own in zip(exp.sweep.dopplers, own):
            m_mix = float(trace_mse(mm, test_trace(exp, table, doppler_hz=fd)).mean())
            rows.append([kind, fd, t_csi, m_own, m_mix, m_mix - m_own])
    return ["predictor", "doppler_hz", "t_csi", "mse_db_specific", "mse_db_mixed", "loss_db"], rows


def profile_generalization(exp: ExperimentConfig, workers: int = 1, kind: str = "gru", t_csi: int = 4):
    """Models trained per profile and on all profiles, tested on every profile."""
    table = exp.table()
    profiles = exp.sweep.profiles
    spread = exp.channel.profile.delay_spread
    trains = {p: train_trace(exp, table, profile=pdp_profile(p, spread)) for p in profiles}
    tests = {p: test_trace(exp, table, profile=pdp_profile(p, spread)) for p in profiles}
    spec = _spec(exp, kind, t_csi=t_csi)
    models = {p: fit_on(exp, spec, [trains[p]]) for p in profiles}
    models["mixed"] = fit_on(exp, spec, list(trains.values()), exp.scale.max_mixed_windows)
    rows = []
    for name, m in models.items():
        for p in profiles:
            rows.append([kind, name, p, float(trace_mse(m, tests[p]).mean())])
    return ["predictor", "train_profile", "test_profile", "mse_db"], rows


SWEEPS = {name: globals()[name] for name in FIGURES}


def run_sweep(exp: ExperimentConfig, figure: str, out_dir=None, workers: int = 1) -> Path:
    """Run one figure's sweep and write ``<out_dir>/<figure>.csv``."""
    if figure not in SWEEPS:
        raise KeyError(f"unknown figure {figure!r}; valid keys: {', '.join(FIGURES)}")
    header, rows = SWEEPS[figure](exp, workers=workers)
    path = Path(out_dir or exp.out_dir) / f"{figure}.csv"
    csvio.write_csv(path, header, rows, {"config_hash": csvio.config_hash(exp.to_dict()), "seed": exp.seed,
                                         "figure": figure})
    return path


__all__ = ["FIGURES", "SWEEPS", "run_sweep", "fit_on", "trace_mse", "get_trace", "train_trace", "test_trace",
           "mixed_traces", "fdd_reports", "spec_to_dict", "PredictionBatch"]
