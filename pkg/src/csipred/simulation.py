"""Datasets, predictor fitting and the TDD/FDD link-adaptation loops.

Timeline: the link learns the channel at report slots ``n = T_CSI k`` and
transmits in slots ``n + tau`` for ``tau = 1 .. T_CSI - 1`` using a CQI
chosen from the prediction for that slot (TDD) or from one prediction at
horizon ``tau_fdd`` reused for the whole interval (FDD).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import csvio
from .channel import ChannelConfig, SinrGrid, config_to_dict, generate_sinr_grid
from .errors import ConfigurationError, DomainError, SizingError
from .link import (N_CQI, CqiTable, EffSinrTrace, Standardizer, _robust_fit, bler, build_trace,
                   select_cqi, select_cqi_scalar)
from .neural import NeuralModel, TrainConfig, train
from .predictors import (NEURAL_KINDS, PredictionBatch, PredictorModel, PredictorSpec, ZohPredictor,
                         build_windows, interpolation_matrix, min_series_length)
from .wiener import build_filter_bank, estimate_autocorrelation

DEFAULT_FRACTIONS = (0.784, 0.196, 0.02)
MSE_FLOOR_DB = -60.0
SUBCARRIERS = 12
SYMBOLS_PER_SLOT = 14

IDEAL = "ideal"


@dataclass
class Dataset:
    """Standardised windows of one or more traces, split in time.

    ``train[j]``, ``val[j]`` and ``test[j]`` hold the windows of track j
    (the best-CQI track, or CQI j + 1 in by-CQI mode) pooled over all
    configs; each config is split chronologically on its own, so every
    split of a mixed-Doppler set covers every Doppler value.
    """

    spec: PredictorSpec
    train: list
    val: list
    test: list
    stats: list
    train_series: list  # [track][config] standardised training segments
    fractions: tuple
    provenance: list
    stride: int

    def split_sizes(self) -> tuple[int, int, int]:
        return len(self.train[0]), len(self.val[0]), len(self.test[0])

    def manifest(self) -> dict:
        n = self.split_sizes()
        return {"fractions": list(self.fractions), "split_sizes": list(n), "stride": self.stride,
                "spec": spec_to_dict(self.spec),
                "configs": [config_to_dict(c) if isinstance(c, ChannelConfig) else c for c in self.provenance],
                "stats": [[s.mean, s.std] for s in self.stats]}


def spec_to_dict(spec: PredictorSpec) -> dict:
    return {k: getattr(spec, k) for k in spec.__dataclass_fields__}


def _split_counts(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def dataset_from_traces(traces: Sequence[EffSinrTrace], spec: PredictorSpec, fractions=DEFAULT_FRACTIONS,
                        stride: int | None = None, provenance=None) -> Dataset:
    """Window, split and standardise already-built traces."""
    if not traces:
        raise ConfigurationError("at least one trace is required")
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigurationError("split fractions must be three non-negative numbers summing to 1")
    need = min_series_length(spec)
    for tr in traces:
        if tr.n_slots < need:
            raise SizingError(f"trace of {tr.n_slots} slots is too short; need at least {need} slots")
    train, val, test, stats, segments = [], [], [], [], []
    for j in range(spec.n_tracks):
        cqi = j + 1 if spec.target == "by_cqi" else None
        parts = {"train": [], "val": [], "test": []}
        raw_segments = []
        for c, tr in enumerate(traces):
            series = tr.track(spec.target, cqi)
            b = build_windows(series, spec, stride)
            b = PredictionBatch(b.inputs, b.targets_tdd, b.targets_fdd, b.slot_index, b.t_csi, None,
                                np.full(len(b), c))
            n_tr, n_va, _ = _split_counts(len(b), fractions)
            if n_tr == 0:
                raise SizingError("no training windows; increase the number of slots")
            parts["train"].append(b.subset(slice(0, n_tr)))
            parts["val"].append(b.subset(slice(n_tr, n_tr + n_va)))
            parts["test"].append(b.subset(slice(n_tr + n_va, None)))
            end = int(b.slot_index[n_tr - 1]) + spec.t_csi
            raw_segments.append(series[:end])
        st = _robust_fit(np.concatenate(raw_segments))
        stats.append(st)
        segments.append([st.apply(s) for s in raw_segments])
        train.append(PredictionBatch.concat(parts["train"]).standardized(st))
        val.append(PredictionBatch.concat(parts["val"]).standardized(st))
        test.append(PredictionBatch.concat(parts["test"]).standardized(st))
    prov = list(provenance) if provenance is not None else [f"trace{c}" for c in range(len(traces))]
    return Dataset(spec, train, val, test, stats, segments, tuple(fractions), prov,
                   spec.t_csi if stride is None else int(stride))


def generate_dataset(configs: Sequence[ChannelConfig], table: CqiTable, spec: PredictorSpec,
                     fractions=DEFAULT_FRACTIONS, stride: int | None = None) -> Dataset:
    """Simulate every config and build a pooled, chronologically split dataset."""
    if not configs:
        raise ConfigurationError("at least one channel config is required")
    need = min_series_length(spec)
    for c in configs:
        if c.n_slots < need:
            raise SizingError(f"config with {c.n_slots} slots is too short; need at least {need} slots")
    traces = [build_trace(generate_sinr_grid(c), table, fractions[0]) for c in configs]
    return dataset_from_traces(traces, spec, fractions, stride, list(configs))


def _autocorr_for(spec: PredictorSpec, series_list) -> object:
    max_lag = spec.t_csi * spec.input_len
    return estimate_autocorrelation(series_list, max_lag)


def fit_predictor(spec: PredictorSpec, dataset: Dataset, train_config: TrainConfig | None = None,
                  seed: int = 0, max_train_windows: int | None = None) -> PredictorModel:
    """Design (Wiener) or train (neural) one predictor per track of `dataset`.

    Wiener filters use the autocorrelation of the standardised training
    segments; neural models train on the training windows and keep the
    snapshot with the lowest validation loss. `max_train_windows` caps the
    training set by uniform subsampling.
    """
    if dataset.spec.t_csi != spec.t_csi or dataset.spec.input_len != spec.input_len \
            or dataset.spec.target != spec.target:
        raise ConfigurationError("predictor spec does not match the dataset's windows")
    models, info = [], {"history": []}
    autocorr = None
    for j in range(spec.n_tracks):
        need_ac = spec.kind == "wiener" or spec.input_mode == "lmmse"
        ac = _autocorr_for(spec, dataset.train_series[j]) if need_ac else None
        if j == 0:
            autocorr = ac
        if spec.kind == "zoh":
            models.append(ZohPredictor(spec))
        elif spec.kind == "wiener":
            models.append(build_filter_bank(ac, spec.input_len, spec.t_csi, spec.horizons))
        elif spec.kind in NEURAL_KINDS:
            tr, va = dataset.train[j], dataset.val[j]
            if max_train_windows is not None and len(tr) > max_train_windows:
                pick = np.random.default_rng(seed).choice(len(tr), max_train_windows, replace=False)
                tr = tr.subset(np.sort(pick))
            x, xv = tr.inputs, va.inputs
            if spec.input_mode != "decimated":
                m = interpolation_matrix(spec, ac)
                x, xv = x @ m.T, xv @ m.T
            net = NeuralModel(spec.kind, spec.seq_len, spec.hidden, spec.n_out, seed + j)
            result = train(net, (x, tr.targets(spec)), (xv, va.targets(spec)), train_config or TrainConfig())
            models.append(result.model)
            info["history"].append(result.history)
    return PredictorModel(spec, models, list(dataset.stats), autocorr, info)


def evaluate_mse(predictor: PredictorModel, batches) -> np.ndarray:
    """Per-horizon MSE in dB on standardised values (0 dB = process variance).

    `batches` is one PredictionBatch or a list with one per track; in the
    latter case the per-track MSEs are averaged before conversion to dB.
    Errors are expressed in each batch's own standardisation.
    """
    if isinstance(batches, PredictionBatch):
        batches = [batches]
    if len(batches) != predictor.spec.n_tracks:
        raise ConfigurationError(f"expected {predictor.spec.n_tracks} batches, got {len(batches)}")
    per_track = []
    for j, b in enumerate(batches):
        if len(b) == 0:
            raise DomainError("cannot evaluate MSE on an empty split")
        if b.stats is None:
            b = b.standardized(predictor.stats[j])
        err = predictor.predict_batch(b, j) - b.targets(predictor.spec)
        per_track.append(np.mean(err ** 2, axis=0))
    return mse_db(np.mean(per_track, axis=0))


def mse_db(mse) -> np.ndarray:
    mse = np.asarray(mse, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10 * np.log10(mse), MSE_FLOOR_DB)


def slot_throughput(selected_cqi, actual_per_cqi_sinr, table: CqiTable, n_rb: int = 52, n_layers: int = 4,
                    slot_duration: float = 1e-3, success=None) -> np.ndarray:
    """Expected delivered rate of one slot in Mbps.

    ``SE(i) * n_rb * 12 * 14 * n_layers * (1 - BLER(i, gamma_i)) / slot_duration``
    for CQI ``i >= 1`` and 0 for ``i = 0``. With `success` (booleans) given,
    the BLER factor is replaced by the drawn outcome.
    """
    cqi = np.asarray(selected_cqi, dtype=int)
    s = np.asarray(actual_per_cqi_sinr, dtype=float)
    if s.shape[-1] != N_CQI or s.shape[:-1] != cqi.shape:
        raise DomainError("need one 15-vector of effective SINRs per selected CQI")
    if np.any((cqi < 0) | (cqi > N_CQI)):
        raise DomainError("CQI must lie in 0..15")
    active = cqi > 0
    idx = np.maximum(cqi, 1)
    gamma = np.take_along_axis(s, (idx - 1)[..., None], axis=-1)[..., 0]
    ok = 1.0 - bler(idx, gamma, table) if success is None else np.asarray(success, dtype=float)
    se = np.asarray(table.spectral_eff)[idx - 1]
    rate = se * n_rb * SUBCARRIERS * SYMBOLS_PER_SLOT * n_layers / slot_duration / 1e6
    out = np.where(active, rate * ok, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class RunReport:
    """Outcome of one link-adaptation run.

    Per-slot series cover every transmission slot ``n + tau`` with
    ``tau = 1 .. T_CSI - 1`` after each report instant ``n``.
    """

    predictor: str
    t_csi: int
    conditioned_tp: np.ndarray
    unconditioned_tp: float
    mse_per_tau: np.ndarray
    cqi_error_hist: dict
    flops: int
    slot: np.ndarray
    tau: np.ndarray
    cqi_used: np.ndarray
    cqi_true: np.ndarray
    throughput: np.ndarray
    horizon: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_intervals(self) -> int:
        return self.slot.size // (self.t_csi - 1)

    @property
    def conditioned_std(self) -> float:
        """Spread of the conditioned throughput across lags."""
        return float(np.std(self.conditioned_tp))

    def summary_row(self, config_hash: str) -> dict:
        row = {"config_hash": config_hash, "predictor": self.predictor, "flops": self.flops,
               "unconditioned_tp": self.unconditioned_tp}
        for t, m in enumerate(self.mse_per_tau, start=1):
            row[f"mse_db_tau{t}"] = float(m)
        return row

    def write(self, out_dir, config_hash: str, seed: int) -> None:
        """conditioned.csv, summary.csv and cqi_error.csv under `out_dir`."""
        meta = {"config_hash": config_hash, "seed": seed}
        taus = range(1, self.t_csi)
        csvio.write_csv(f"{out_dir}/conditioned.csv", ["tau", "throughput_mbps", "mse_db"],
                        [[t, self.conditioned_tp[t - 1], self._mse_at(t)] for t in taus], meta)
        row = self.summary_row(config_hash)
        csvio.write_csv(f"{out_dir}/summary.csv", list(row), [list(row.values())], meta)
        csvio.write_csv(f"{out_dir}/cqi_error.csv", ["error", "probability"],
                        sorted(self.cqi_error_hist.items()), meta)

    def _mse_at(self, tau: int) -> float:
        if self.mse_per_tau.size == self.t_csi - 1:
            return float(self.mse_per_tau[tau - 1])
        return float(self.mse_per_tau[0])


def _as_trace(grid, table: CqiTable) -> tuple[EffSinrTrace, dict]:
    if isinstance(grid, EffSinrTrace):
        return grid, {}
    if isinstance(grid, SinrGrid):
        c = grid.config
        return build_trace(grid, table), {"n_rb": c.n_rb, "n_layers": c.n_layers, "slot_duration": c.slot_duration,
                                          "config": config_to_dict(c)}
    raise ConfigurationError("expected a SinrGrid or an EffSinrTrace")


def _error_hist(true_cqi, used_cqi) -> dict:
    err = np.asarray(true_cqi) - np.asarray(used_cqi)
    values, counts = np.unique(err, return_counts=True)
    return {int(v): float(c / err.size) for v, c in zip(values, counts)}


def _select_from(predictions: np.ndarray, spec_target: str, table: CqiTable) -> np.ndarray:
    # a linear SINR prediction can undershoot zero; treat it as no signal
    pred = np.maximum(predictions, np.finfo(float).tiny)
    if spec_target == "by_cqi":
        return select_cqi(pred, table)
    return select_cqi_scalar(pred, table)


def _predict_tracks(predictor: PredictorModel, trace: EffSinrTrace, horizons) -> tuple:
    """Linear predictions ``(n_reports, len(horizons), n_tracks)`` and report slots."""
    spec = predictor.spec
    outs, anchors = [], None
    for j in range(spec.n_tracks):
        cqi = j + 1 if spec.target == "by_cqi" else None
        b = build_windows(trace.track(spec.target, cqi), spec)
        anchors = b.slot_index
        outs.append(predictor.predict_linear(j, b.inputs))
    return np.stack(outs, axis=-1), anchors


def _mse_per_tau(predictor, trace: EffSinrTrace, pred_lin, anchors, horizons) -> np.ndarray:
    if predictor == IDEAL:
        return np.full(len(horizons), MSE_FLOOR_DB)
    spec = predictor.spec
    per = []
    for j in range(spec.n_tracks):
        cqi = j + 1 if spec.target == "by_cqi" else None
        st = predictor.stats[j]
        truth = trace.track(spec.target, cqi)[anchors[:, None] + np.asarray(horizons)[None, :]]
        per.append(np.mean((st.apply(pred_lin[..., j]) - st.apply(truth)) ** 2, axis=0))
    return mse_db(np.mean(per, axis=0))


def _check_predictor(predictor, t_csi: int, mode: str, horizon=None) -> None:
    if predictor == IDEAL:
        return
    if not isinstance(predictor, PredictorModel):
        raise ConfigurationError("predictor must be a PredictorModel or IDEAL")
    spec = predictor.spec
    if spec.t_csi != t_csi:
        raise ConfigurationError(f"predictor built for T_CSI={spec.t_csi}, run uses {t_csi}")
    if spec.mode != mode:
        raise ConfigurationError(f"predictor mode {spec.mode} does not fit a {mode} run")
    if mode == "fdd_scalar" and spec.horizon != horizon:
        raise ConfigurationError(f"predictor horizon {spec.horizon} != requested {horizon}")


def _link_args(dims: dict, n_rb, n_layers, slot_duration) -> dict:
    return {"n_rb": n_rb if n_rb is not None else dims.get("n_rb", 52),
            "n_layers": n_layers if n_layers is not None else dims.get("n_layers", 4),
            "slot_duration": slot_duration if slot_duration is not None else dims.get("slot_duration", 1e-3)}


def _ideal_anchors(trace: EffSinrTrace, t_csi: int, history: int) -> np.ndarray:
    first = t_csi * (history - 1)
    return np.arange(first, trace.n_slots - t_csi + 1, t_csi)


def _finish(name, predictor, trace, table, t_csi, anchors, cqi_used, pred_lin, mse_h, link, stochastic, seed,
            horizon, cfg) -> RunReport:
    taus = np.arange(1, t_csi)
    slots = anchors[:, None] + taus[None, :]
    if slots.shape[0] < 1:
        raise SizingError("trace too short for a single transmission interval")
    actual = trace.per_cqi[slots]
    success = None
    if stochastic:
        idx = np.maximum(cqi_used, 1)
        gamma = np.take_along_axis(actual, (idx - 1)[..., None], axis=-1)[..., 0]
        success = np.random.default_rng(seed).uniform(size=cqi_used.shape) >= bler(idx, gamma, table)
    tp = slot_throughput(cqi_used, actual, table, success=success, **link)
    true_cqi = trace.best_cqi_index[slots]
    flops = 0 if predictor == IDEAL else predictor.flops
    return RunReport(name, t_csi, tp.mean(axis=0), float(tp.mean()), mse_h, _error_hist(true_cqi, cqi_used), flops,
                     slots.ravel(), np.broadcast_to(taus, slots.shape).ravel(), cqi_used.ravel(), true_cqi.ravel(),
                     tp.ravel(), horizon, cfg)


def run_tdd(grid, table: CqiTable, predictor, t_csi: int | None = None, stochastic: bool = False, seed: int = 0,
            n_rb=None, n_layers=None, slot_duration=None, history: int | None = None) -> RunReport:
    """TDD loop: a fresh prediction for every slot of every interval.

    `grid` is a SinrGrid or an already-compressed EffSinrTrace. `predictor`
    is a fitted PredictorModel or :data:`IDEAL`, which uses the true future
    best-CQI selection. `history` aligns the ideal run with a predictor's
    first usable report (defaults to 1).
    """
    trace, dims = _as_trace(grid, table)
    if t_csi is None:
        if predictor == IDEAL:
            raise ConfigurationError("t_csi is required for the ideal predictor")
        t_csi = predictor.spec.t_csi
    _check_predictor(predictor, t_csi, "tdd_vector")
    link = _link_args(dims, n_rb, n_layers, slot_duration)
    horizons = tuple(range(1, t_csi))
    if predictor == IDEAL:
        anchors = _ideal_anchors(trace, t_csi, history or 1)
        cqi_used = trace.best_cqi_index[anchors[:, None] + np.arange(1, t_csi)[None, :]]
        pred_lin, name = None, IDEAL
    else:
        pred_lin, anchors = _predict_tracks(predictor, trace, horizons)
        target = predictor.spec.target
        cqi_used = _select_from(pred_lin if target == "by_cqi" else pred_lin[..., 0], target, table)
        name = predictor.spec.kind
    mse_h = _mse_per_tau(predictor, trace, pred_lin, anchors, horizons)
    return _finish(name, predictor, trace, table, t_csi, anchors, cqi_used, pred_lin, mse_h, link, stochastic,
                   seed, None, dims.get("config", {}))


def run_fdd(grid, table: CqiTable, predictor, t_csi: int, horizon: int, stochastic: bool = False, seed: int = 0,
            n_rb=None, n_layers=None, slot_duration=None, history: int | None = None) -> RunReport:
    """FDD loop: one CQI per interval, chosen from the prediction at `horizon`."""
    if not 1 <= horizon <= t_csi - 1:
        raise ConfigurationError(f"horizon must lie in [1, {t_csi - 1}]")
    trace, dims = _as_trace(grid, table)
    _check_predictor(predictor, t_csi, "fdd_scalar", horizon)
    link = _link_args(dims, n_rb, n_layers, slot_duration)
    if predictor == IDEAL:
        anchors = _ideal_anchors(trace, t_csi, history or 1)
        chosen = trace.best_cqi_index[anchors + horizon]
        pred_lin, name = None, IDEAL
    else:
        pred_lin, anchors = _predict_tracks(predictor, trace, (horizon,))
        target = predictor.spec.target
        chosen = _select_from(pred_lin[:, 0, :] if target == "by_cqi" else pred_lin[:, 0, 0], target, table)
        name = predictor.spec.kind
    cqi_used = np.repeat(np.asarray(chosen)[:, None], t_csi - 1, axis=1)
    mse_h = _mse_per_tau(predictor, trace, pred_lin, anchors, (horizon,))
    return _finish(name, predictor, trace, table, t_csi, anchors, cqi_used, pred_lin, mse_h, link, stochastic,
                   seed, horizon, dims.get("config", {}))


def throughput_gain(report: RunReport, baseline: RunReport) -> float:
    """Relative unconditioned-throughput gain of `report` over `baseline`."""
    return report.unconditioned_tp / baseline.unconditioned_tp - 1.0


def standard_error(report: RunReport) -> float:
    """Standard error of the unconditioned throughput, from interval means."""
    per_interval = report.throughput.reshape(-1, report.t_csi - 1).mean(axis=1)
    return float(per_interval.std(ddof=1) / math.sqrt(per_interval.size)) if per_interval.size > 1 else 0.0
