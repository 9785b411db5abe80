"""Shared predictor plumbing: specs, input windows, ZOH, interpolation, FLOPs.

Windows follow the reporting timeline: at report slot ``n = T_CSI k`` the
input is ``[g(n), g(n - T_CSI), ..., g(n - (P-1) T_CSI)]`` (most recent
first) and the TDD target is ``[g(n + 1), ..., g(n + T_CSI - 1)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import csvio
from .errors import ConfigurationError, DomainError, SizingError
from .link import N_CQI, Standardizer

KINDS = ("zoh", "wiener", "dnn", "gru", "lstm")
NEURAL_KINDS = ("dnn", "gru", "lstm")
MODES = ("tdd_vector", "fdd_scalar")
TARGETS = ("best_cqi", "by_cqi")
INPUT_MODES = ("decimated", "linear", "lmmse")


@dataclass(frozen=True)
class PredictorSpec:
    """What to predict and with which architecture.

    `horizon` is only used in ``fdd_scalar`` mode. `input_mode` selects
    decimated report samples or a densified (interpolated) input sequence
    sampled every `interp_step` slots over the same time span.
    """

    kind: str = "wiener"
    input_len: int = 4
    hidden: int = 16
    t_csi: int = 4
    mode: str = "tdd_vector"
    horizon: int | None = None
    target: str = "best_cqi"
    input_mode: str = "decimated"
    interp_step: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown predictor kind {self.kind!r}; expected one of {KINDS}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.target not in TARGETS:
            raise ConfigurationError(f"unknown target strategy {self.target!r}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigurationError(f"unknown input mode {self.input_mode!r}")
        if self.input_len < 1:
            raise ConfigurationError("input_len must be >= 1")
        if self.t_csi < 2:
            raise ConfigurationError("t_csi must be >= 2")
        if self.kind in NEURAL_KINDS and self.hidden < 1:
            raise ConfigurationError("hidden must be >= 1 for neural predictors")
        if self.mode == "fdd_scalar":
            if self.horizon is None or not 1 <= self.horizon <= self.t_csi - 1:
                raise ConfigurationError(f"horizon must lie in [1, {self.t_csi - 1}] in fdd_scalar mode")
        if self.input_mode != "decimated":
            if self.interp_step < 1 or self.t_csi % self.interp_step:
                raise ConfigurationError("interp_step must divide t_csi")

    @property
    def n_out(self) -> int:
        return self.t_csi - 1 if self.mode == "tdd_vector" else 1

    @property
    def horizons(self) -> tuple[int, ...]:
        return tuple(range(1, self.t_csi)) if self.mode == "tdd_vector" else (self.horizon,)

    @property
    def n_tracks(self) -> int:
        return N_CQI if self.target == "by_cqi" else 1

    @property
    def seq_len(self) -> int:
        """Length of the input sequence actually fed to the model."""
        if self.input_mode == "decimated":
            return self.input_len
        return (self.input_len - 1) * self.t_csi // self.interp_step + 1

    def with_(self, **changes) -> "PredictorSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class PredictionBatch:
    """Input windows and targets of one series.

    Attributes
    ----------
    inputs : (n, P) ndarray
        Most recent sample first.
    targets_tdd : (n, T_CSI - 1) ndarray
    targets_fdd : (n,) ndarray or None
    slot_index : (n,) int ndarray
        Report slot of each window.
    t_csi : int
    stats : Standardizer or None
        Standardisation the values are expressed in (None for raw values).
    source : (n,) int ndarray
        Index of the originating series (config) of each window.
    """

    inputs: np.ndarray
    targets_tdd: np.ndarray
    targets_fdd: np.ndarray | None
    slot_index: np.ndarray
    t_csi: int
    stats: Standardizer | None = None
    source: np.ndarray | None = None

    def __post_init__(self):
        if self.source is None:
            object.__setattr__(self, "source", np.zeros(len(self.slot_index), dtype=int))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def report_index(self) -> np.ndarray:
        return self.slot_index // self.t_csi

    def targets(self, spec: PredictorSpec) -> np.ndarray:
        """Targets matching the output layout of `spec`, shape ``(n, n_out)``."""
        if spec.mode == "tdd_vector":
            return self.targets_tdd
        return self.targets_tdd[:, spec.horizon - 1: spec.horizon]

    def subset(self, idx) -> "PredictionBatch":
        return PredictionBatch(self.inputs[idx], self.targets_tdd[idx],
                               None if self.targets_fdd is None else self.targets_fdd[idx],
                               self.slot_index[idx], self.t_csi, self.stats, self.source[idx])

    def standardized(self, stats: Standardizer) -> "PredictionBatch":
        """Express raw (linear) windows in `stats` units."""
        if self.stats is not None:
            raise DomainError("batch is already standardised")
        return PredictionBatch(stats.apply(self.inputs), stats.apply(self.targets_tdd),
                               None if self.targets_fdd is None else stats.apply(self.targets_fdd),
                               self.slot_index, self.t_csi, stats, self.source)

    @staticmethod
    def concat(batches: Sequence["PredictionBatch"]) -> "PredictionBatch":
        b0 = batches[0]
        fdd = None if b0.targets_fdd is None else np.concatenate([b.targets_fdd for b in batches])
        return PredictionBatch(np.concatenate([b.inputs for b in batches]),
                               np.concatenate([b.targets_tdd for b in batches]), fdd,
                               np.concatenate([b.slot_index for b in batches]), b0.t_csi, b0.stats,
                               np.concatenate([b.source for b in batches]))

    def to_csv(self, path, meta: dict | None = None) -> None:
        """Columns: k, slot, x_0..x_{P-1}, y_1..y_{T_CSI-1}."""
        p = self.inputs.shape[1]
        header = ["k", "slot", *[f"x_{i}" for i in range(p)], *[f"y_{t}" for t in range(1, self.t_csi)]]
        rows = ([int(k), int(n), *map(float, x), *map(float, y)]
                for k, n, x, y in zip(self.report_index, self.slot_index, self.inputs, self.targets_tdd))
        csvio.write_csv(path, header, rows, meta)

    @classmethod
    def from_csv(cls, path, horizon: int | None = None) -> "PredictionBatch":
        _, header, body = csvio.read_csv(path)
        p = sum(1 for h in header if h.startswith("x_"))
        t_csi = sum(1 for h in header if h.startswith("y_")) + 1
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        y = data[:, 2 + p:]
        fdd = y[:, horizon - 1].copy() if horizon else None
        return cls(data[:, 2:2 + p], y, fdd, data[:, 1].astype(int), t_csi)


def min_series_length(spec: PredictorSpec) -> int:
    return spec.t_csi * (spec.input_len - 1) + spec.t_csi


def build_windows(series, spec: PredictorSpec, stride: int | None = None) -> PredictionBatch:
    """Cut a series into prediction windows.

    One window per report instant ``n = T_CSI k`` that has a full history of
    `input_len` reports and a full future interval; trailing partial windows
    are dropped. `stride` (default ``T_CSI``) spaces the anchor slots; values
    other than ``T_CSI`` treat every `stride`-th slot as a report instant,
    which is only meaningful for building training sets from stationary data.
    """
    x = np.asarray(series, dtype=float)
    t, p = spec.t_csi, spec.input_len
    need = min_series_length(spec)
    if x.ndim != 1 or x.size < need:
        raise SizingError(f"series of length {x.size} is too short; need at least {need} slots")
    stride = t if stride is None else int(stride)
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    first = t * (p - 1)
    last = x.size - t  # anchor n needs n + T_CSI - 1 <= len - 1
    anchors = np.arange(first, last + 1, stride)
    inputs = x[anchors[:, None] - t * np.arange(p)[None, :]]
    targets = x[anchors[:, None] + np.arange(1, t)[None, :]]
    fdd = targets[:, spec.horizon - 1].copy() if spec.mode == "fdd_scalar" else None
    return PredictionBatch(inputs, targets, fdd, anchors, t)


def zoh_predict(x, spec: PredictorSpec) -> np.ndarray:
    """Hold the newest sample over every output."""
    x = np.asarray(x, dtype=float)
    newest = x[..., 0]
    out = np.repeat(newest[..., None], spec.n_out, axis=-1)
    return out


class ZohPredictor:
    """Zero-order hold in the predictor interface."""

    def __init__(self, spec: PredictorSpec):
        self.spec = spec

    def predict(self, x):
        return zoh_predict(x, self.spec)


def _autocorr_fn(autocorr) -> Callable[[np.ndarray], np.ndarray]:
    if autocorr is None:
        raise ConfigurationError("lmmse interpolation requires an autocorrelation")
    if callable(autocorr) and not isinstance(autocorr, np.ndarray):
        return lambda m: np.asarray([autocorr(int(abs(v))) for v in np.ravel(m)]).reshape(np.shape(m))
    values = np.asarray(getattr(autocorr, "values", autocorr), dtype=float)
    return lambda m: values[np.abs(np.asarray(m, dtype=int))]


def interpolation_weights(t_csi: int, method: str = "linear", autocorr=None) -> np.ndarray:
    """Weights ``(T_CSI + 1, 2)`` mapping two bracketing samples to each offset.

    Row ``d`` estimates the value ``d`` slots after the earlier sample. The
    LMMSE rows solve the 2x2 normal equations built from `autocorr`.
    """
    d = np.arange(t_csi + 1)
    if method == "linear":
        frac = d / t_csi
        return np.stack([1 - frac, frac], axis=1)
    if method != "lmmse":
        raise ConfigurationError(f"unknown interpolation method {method!r}")
    r = _autocorr_fn(autocorr)
    r0, rt = float(r(0)), float(r(t_csi))
    gram = np.array([[r0, rt], [rt, r0]])
    cross = np.stack([r(d), r(t_csi - d)], axis=1).astype(float)
    w = np.linalg.lstsq(gram, cross.T, rcond=None)[0].T
    # anchor rows reproduce the samples themselves
    w[0] = [1.0, 0.0]
    w[-1] = [0.0, 1.0]
    return w


def interpolate(sparse, t_csi: int, method: str = "linear", autocorr=None) -> np.ndarray:
    """Fill every slot between samples taken each `t_csi` slots.

    Returns a dense series of length ``(len(sparse) - 1) * t_csi + 1`` whose
    entries at multiples of `t_csi` equal the sparse samples.
    """
    s = np.asarray(sparse, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise SizingError("interpolation needs at least two sparse samples")
    w = interpolation_weights(t_csi, method, autocorr)
    seg = w[:-1, 0][None, :] * s[:-1, None] + w[:-1, 1][None, :] * s[1:, None]
    return np.append(seg.ravel(), s[-1])


def interpolation_matrix(spec: PredictorSpec, autocorr=None) -> np.ndarray:
    """Linear map from a decimated window to the densified model input.

    Returns ``(seq_len, P)``; both input and output are most recent first.
    """
    t, p, step = spec.t_csi, spec.input_len, spec.interp_step
    w = interpolation_weights(t, spec.input_mode, autocorr)
    span = (p - 1) * t
    offsets = np.arange(0, span + 1, step)  # slots before the newest report
    m = np.zeros((offsets.size, p))
    for row, back in enumerate(offsets):
        j, d = divmod(back, t)
        if d == 0:
            m[row, j] = 1.0
            continue
        # between reports j (newer) and j + 1 (older); d slots before report j
        m[row, j + 1] += w[t - d, 0]
        m[row, j] += w[t - d, 1]
    return m


def flops(spec: PredictorSpec) -> int:
    """Inference FLOPs of one prediction (all outputs, all tracks).

    Multiplications and additions are counted, activations are free. The
    output size is ``T_CSI - 1`` in TDD mode and 1 in FDD mode; recurrent
    models run one step per input sample.
    """
    p, d, out = spec.seq_len, spec.hidden, spec.n_out
    if spec.kind == "zoh":
        per_track = 0
    elif spec.kind == "wiener":
        per_track = out * (2 * spec.input_len - 1)
    elif spec.kind == "dnn":
        per_track = 2 * d * (p + out)
    elif spec.kind == "lstm":
        per_track = p * (8 * d * d + 12 * d) + 2 * d * out
    elif spec.kind == "gru":
        per_track = p * (6 * d * d + 11 * d) + 2 * d * out
    else:  # pragma: no cover - guarded by PredictorSpec
        raise DomainError(f"unknown predictor kind {spec.kind!r}")
    return per_track * spec.n_tracks


@dataclass
class PredictorModel:
    """A fitted predictor: one model per predicted track plus its scaling.

    ``models[j].predict`` maps standardised windows ``(n, P)`` to standardised
    predictions ``(n, n_out)``. `stats[j]` is the standardisation of track j
    (the best-CQI track, or CQI j + 1 in by-CQI mode).
    """

    spec: PredictorSpec
    models: list
    stats: list
    autocorr: object = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.models) != self.spec.n_tracks or len(self.stats) != self.spec.n_tracks:
            raise ConfigurationError(f"{self.spec.target} needs {self.spec.n_tracks} models and scalings")

    @property
    def flops(self) -> int:
        return flops(self.spec)

    def _prepare(self, x: np.ndarray) -> np.ndarray:
        if self.spec.input_mode == "decimated":
            return x
        m = interpolation_matrix(self.spec, self.autocorr)
        return x @ m.T

    def predict_track(self, j: int, x_std: np.ndarray) -> np.ndarray:
        """Standardised predictions of track `j` from standardised windows."""
        x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
        if x_std.shape[1] != self.spec.input_len:
            raise DomainError(f"window length {x_std.shape[1]} != input_len {self.spec.input_len}")
        return self.models[j].predict(self._prepare(x_std))

    def predict_linear(self, j: int, x_lin: np.ndarray) -> np.ndarray:
        """Linear-domain predictions of track `j` from linear windows."""
        st = self.stats[j]
        return st.invert(self.predict_track(j, st.apply(x_lin)))

    def predict_batch(self, batch: PredictionBatch, j: int = 0) -> np.ndarray:
        """Predictions expressed in the batch's own units.

        When the batch was standardised with different statistics (e.g. a
        model trained on mixed data evaluated on one config), inputs and
        outputs are converted through the linear domain.
        """
        st = self.stats[j]
        if batch.stats is None:
            return self.predict_linear(j, batch.inputs)
        if batch.stats == st:
            return self.predict_track(j, batch.inputs)
        lin = batch.stats.invert(batch.inputs)
        return batch.stats.apply(self.predict_linear(j, lin))
