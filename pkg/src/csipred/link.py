"""EESM compression, BLER mapping, CQI selection and standardisation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

N_CQI = 15

_CHUNK = 4096


@dataclass(frozen=True)
class CqiTable:
    """Per-CQI EESM calibration, logistic AWGN BLER curves and rates.

    All arrays have length 15 and are indexed by ``cqi - 1``.
    """

    beta: np.ndarray
    bler_mid_db: np.ndarray
    bler_slope: np.ndarray
    spectral_eff: np.ndarray
    bler_target: float = 0.1

    def __post_init__(self):
        for name in ("beta", "bler_mid_db", "bler_slope", "spectral_eff"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_CQI,):
                raise ConfigurationError(f"{name} must have exactly {N_CQI} entries")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("beta", "spectral_eff", "bler_mid_db"):
            if np.any(np.diff(getattr(self, name)) <= 0):
                raise ConfigurationError(f"{name} must be strictly increasing with the CQI index")
        if np.any(self.beta <= 0) or np.any(self.spectral_eff <= 0) or np.any(self.bler_slope <= 0):
            raise ConfigurationError("beta, spectral_eff and bler_slope must be positive")
        if not 0 < self.bler_target < 1:
            raise ConfigurationError("bler_target must lie in (0, 1)")

    @property
    def n_cqi(self) -> int:
        return N_CQI

    def threshold_db(self) -> np.ndarray:
        """Effective SINR (dB) at which each curve crosses the BLER target."""
        t = self.bler_target
        return self.bler_mid_db + np.log((1 - t) / t) / self.bler_slope

    def to_dict(self) -> dict:
        return {
            "bler_target": self.bler_target,
            "entries": [
                {"index": i + 1, "beta": float(self.beta[i]), "bler_mid_db": float(self.bler_mid_db[i]),
                 "bler_slope": float(self.bler_slope[i]), "spectral_eff": float(self.spectral_eff[i])}
                for i in range(N_CQI)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CqiTable":
        unknown = set(data) - {"bler_target", "entries"}
        if unknown:
            raise ConfigurationError(f"unknown CQI table keys: {sorted(unknown)}")
        entries = sorted(data["entries"], key=lambda e: e["index"])
        if [e["index"] for e in entries] != list(range(1, N_CQI + 1)):
            raise ConfigurationError("CQI table needs entries with index 1..15")
        cols = {k: [] for k in ("beta", "bler_mid_db", "bler_slope", "spectral_eff")}
        for e in entries:
            unknown = set(e) - set(cols) - {"index"}
            if unknown:
                raise ConfigurationError(f"unknown CQI entry keys: {sorted(unknown)}")
            for k in cols:
                cols[k].append(float(e[k]))
        return cls(**{k: np.array(v) for k, v in cols.items()}, bler_target=float(data.get("bler_target", 0.1)))


def load_cqi_table(path=None) -> CqiTable:
    """Load a CQI table from JSON; the packaged default when `path` is None."""
    if path is None:
        text = resources.files("csipred.data").joinpath("cqi_table.json").read_text()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"CQI table not found: {path}")
        text = path.read_text()
    return CqiTable.from_dict(json.loads(text))


def _check_sinr(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise DomainError("SINR values must be finite")
    if np.any(values <= 0):
        raise DomainError("SINR values must be positive (linear scale)")


def eesm_compress(slot_sinrs, beta: float) -> float:
    """Exponential effective SINR of one slot.

    ``-beta * ln(mean(exp(-gamma / beta)))`` over every layer and RB,
    evaluated relative to the smallest SINR so the exponentials cannot
    underflow.
    """
    g = np.asarray(slot_sinrs, dtype=float).ravel()
    _check_sinr(g)
    if not (math.isfinite(beta) and beta > 0):
        raise DomainError(f"beta must be positive, got {beta}")
    g_min = g.min()
    return float(g_min - beta * np.log(np.mean(np.exp(-(g - g_min) / beta))))


def _eesm_rows(values: np.ndarray, betas: np.ndarray) -> np.ndarray:
    # values [n, K] -> [n, len(betas)]
    g_min = values.min(axis=1, keepdims=True)
    shifted = values - g_min
    out = np.empty((values.shape[0], betas.size))
    for j, b in enumerate(betas):
        out[:, j] = -b * np.log(np.mean(np.exp(shifted * (-1.0 / b)), axis=1))
    return out + g_min


def effective_sinr_all_cqi(slot_sinrs, table: CqiTable) -> np.ndarray:
    """Effective SINR for every CQI level; works on one slot or a stack of slots.

    `slot_sinrs` is ``(..., n_layers, n_rb)``; the result ``(..., 15)``.
    """
    g = np.asarray(slot_sinrs, dtype=float)
    if g.ndim < 2:
        g = g.reshape(1, -1)
    lead = g.shape[:-2]
    flat = g.reshape(-1, g.shape[-2] * g.shape[-1])
    _check_sinr(flat)
    out = np.empty((flat.shape[0], N_CQI))
    for start in range(0, flat.shape[0], _CHUNK):
        out[start:start + _CHUNK] = _eesm_rows(flat[start:start + _CHUNK], table.beta)
    return out.reshape(*lead, N_CQI)


def lin2db(x):
    return 10 * np.log10(x)


def db2lin(x):
    return 10 ** (np.asarray(x) / 10)


def bler(cqi_index, eff_sinr, table: CqiTable):
    """Logistic AWGN BLER of CQI `cqi_index` (1..15) at linear `eff_sinr`.

    ``1 / (1 + exp(slope * (SINR_dB - mid_dB)))``: 0.5 at the midpoint,
    decreasing in SINR and increasing in the CQI index.
    """
    idx = np.asarray(cqi_index)
    if np.any((idx < 1) | (idx > N_CQI)) or not np.all(idx == np.round(idx)):
        raise DomainError(f"CQI index must be an integer in 1..{N_CQI}")
    s = np.asarray(eff_sinr, dtype=float)
    if np.any(np.isnan(s)) or np.any(s < 0):
        raise DomainError("effective SINR must be non-negative")
    i = idx.astype(int) - 1
    with np.errstate(divide="ignore", over="ignore"):
        x = table.bler_slope[i] * (lin2db(s) - table.bler_mid_db[i])
        out = 1.0 / (1.0 + np.exp(x))
    return float(out) if np.ndim(out) == 0 else out


def bler_all(per_cqi_sinr, table: CqiTable) -> np.ndarray:
    """BLER of every CQI at its own effective SINR, shape ``(..., 15)``."""
    s = np.asarray(per_cqi_sinr, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        x = table.bler_slope * (lin2db(s) - table.bler_mid_db)
        return 1.0 / (1.0 + np.exp(x))


def select_cqi(per_cqi_sinr, table: CqiTable):
    """Highest CQI whose BLER at its own effective SINR meets the target.

    Returns 0 (out of range, no transmission) when no CQI qualifies. Accepts
    a length-15 vector or any ``(..., 15)`` stack.
    """
    s = np.asarray(per_cqi_sinr, dtype=float)
    if s.shape[-1:] != (N_CQI,):
        raise DomainError(f"expected {N_CQI} effective SINRs per slot, got shape {s.shape}")
    ok = bler_all(s, table) <= table.bler_target
    # index of the last feasible entry, 0 when none
    last = N_CQI - np.argmax(ok[..., ::-1], axis=-1)
    out = np.where(ok.any(axis=-1), last, 0)
    return int(out) if out.ndim == 0 else out


def select_cqi_scalar(eff_sinr, table: CqiTable):
    """CQI selection from a single effective SINR tested against every curve."""
    s = np.asarray(eff_sinr, dtype=float)
    return select_cqi(np.repeat(s[..., None], N_CQI, axis=-1), table)


@dataclass(frozen=True)
class Standardizer:
    """Affine map to zero mean and unit variance."""

    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.std) and self.std > 0):
            raise DomainError(f"standard deviation must be positive, got {self.std}")

    @classmethod
    def fit(cls, series) -> "Standardizer":
        x = np.asarray(series, dtype=float)
        return cls(float(x.mean()), float(x.std()))

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


def standardize(series, stats) -> np.ndarray:
    """``(x - mean) / std`` with `stats` a (mean, std) pair or Standardizer."""
    mean, std = stats if not isinstance(stats, Standardizer) else (stats.mean, stats.std)
    return Standardizer(mean, std).apply(series)


def destandardize(series, stats) -> np.ndarray:
    mean, std = stats if not isinstance(stats, Standardizer) else (stats.mean, stats.std)
    return Standardizer(mean, std).invert(series)


def _robust_fit(x: np.ndarray) -> Standardizer:
    # a frozen channel gives a constant track; fall back to unit scale
    std = float(x.std())
    mean = float(x.mean())
    if not std > 1e-12 * max(abs(mean), 1.0):
        std = 1.0
    return Standardizer(mean, std)


@dataclass(frozen=True)
class EffSinrTrace:
    """Per-slot effective SINRs and the selected-CQI track.

    Attributes
    ----------
    per_cqi : (n_slots, 15) ndarray
        Linear effective SINR for every CQI level.
    best_cqi_index : (n_slots,) int ndarray
        Selected CQI per slot, 0 when out of range.
    best_cqi_sinr : (n_slots,) ndarray
        Effective SINR at the selected CQI (CQI 1 when out of range).
    stats : Standardizer
        Statistics of the best-CQI track over the training segment.
    per_cqi_stats : list of Standardizer
        Statistics of each per-CQI track over the training segment.
    """

    per_cqi: np.ndarray
    best_cqi_index: np.ndarray
    best_cqi_sinr: np.ndarray
    stats: Standardizer
    per_cqi_stats: list = field(default_factory=list)
    n_train: int = 0

    @property
    def n_slots(self) -> int:
        return self.per_cqi.shape[0]

    @property
    def mean(self) -> float:
        return self.stats.mean

    @property
    def std(self) -> float:
        return self.stats.std

    def track(self, target: str = "best_cqi", cqi: int | None = None) -> np.ndarray:
        """Linear series used as predictor input: the best track or CQI `cqi`."""
        if target == "best_cqi":
            return self.best_cqi_sinr
        return self.per_cqi[:, cqi - 1]

    def track_stats(self, target: str = "best_cqi", cqi: int | None = None) -> Standardizer:
        return self.stats if target == "best_cqi" else self.per_cqi_stats[cqi - 1]

    def to_csv(self, path, meta: dict | None = None) -> None:
        """slot, gamma_eff_cqi_1..15 (dB), best_cqi, gamma_eff_best (dB)."""
        from .csvio import write_csv
        header = ["slot", *[f"gamma_eff_cqi_{i}" for i in range(1, N_CQI + 1)], "best_cqi", "gamma_eff_best"]
        per_db = lin2db(self.per_cqi)
        best_db = lin2db(self.best_cqi_sinr)
        rows = ([n, *[f"{v:.10g}" for v in per_db[n]], int(self.best_cqi_index[n]), f"{best_db[n]:.10g}"]
                for n in range(self.n_slots))
        write_csv(path, header, rows, meta)


def trace_from_per_cqi(per_cqi: np.ndarray, table: CqiTable, train_fraction: float = 0.784) -> EffSinrTrace:
    per_cqi = np.asarray(per_cqi, dtype=float)
    best = select_cqi(per_cqi, table)
    best = np.atleast_1d(best)
    col = np.maximum(best, 1) - 1
    best_sinr = per_cqi[np.arange(per_cqi.shape[0]), col]
    n_train = max(1, int(math.ceil(train_fraction * per_cqi.shape[0])))
    stats = _robust_fit(best_sinr[:n_train])
    per_stats = [_robust_fit(per_cqi[:n_train, i]) for i in range(N_CQI)]
    return EffSinrTrace(per_cqi, best, best_sinr, stats, per_stats, n_train)


def build_trace(grid, table: CqiTable, train_fraction: float = 0.784) -> EffSinrTrace:
    """Compress every slot of a SINR grid and select its CQI.

    Standardisation statistics come from the first `train_fraction` of the
    slots only.
    """
    values = grid.values if hasattr(grid, "values") else np.asarray(grid)
    return trace_from_per_cqi(effective_sinr_all_cqi(values, table), table, train_fraction)
