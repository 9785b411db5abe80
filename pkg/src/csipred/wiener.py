"""Linear MMSE (Wiener) prediction from an empirical autocorrelation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DomainError, SizingError


@dataclass(frozen=True)
class AutocorrEstimate:
    """Biased autocorrelation ``R(0..max_lag)`` of a zero-mean series."""

    values: np.ndarray
    n_samples: int

    @property
    def max_lag(self) -> int:
        return self.values.size - 1

    @property
    def variance(self) -> float:
        return float(self.values[0])

    def __call__(self, lag):
        lag = np.abs(np.asarray(lag, dtype=int))
        if np.any(lag > self.max_lag):
            raise SizingError(f"lag {int(lag.max())} beyond estimated range {self.max_lag}")
        out = self.values[lag]
        return float(out) if out.ndim == 0 else out


def estimate_autocorrelation(series, max_lag: int) -> AutocorrEstimate:
    """Biased estimate ``R(m) = (1/N) sum_n x(n) x(n+m)``.

    `series` may be one array or a sequence of arrays (e.g. one per Doppler
    value); the latter are pooled, dividing by the total sample count. Every
    series must hold at least ``10 * max_lag`` samples.
    """
    if isinstance(series, np.ndarray) and series.ndim == 1:
        parts = [series]
    else:
        parts = [np.asarray(s, dtype=float) for s in series]
    if max_lag < 0:
        raise DomainError("max_lag must be >= 0")
    acc = np.zeros(max_lag + 1)
    total = 0
    for x in parts:
        x = np.asarray(x, dtype=float)
        if x.size < max(10 * max_lag, 1):
            raise SizingError(f"series of {x.size} samples too short for lag {max_lag} "
                              f"(need {10 * max_lag})")
        n = x.size
        for m in range(max_lag + 1):
            acc[m] += np.dot(x[:n - m], x[m:])
        total += n
    return AutocorrEstimate(acc / total, total)


def ar1_autocorrelation(rho: float, max_lag: int, variance: float = 1.0) -> AutocorrEstimate:
    """Exact autocorrelation of a stationary AR(1) process."""
    return AutocorrEstimate(variance * rho ** np.arange(max_lag + 1), 0)


@dataclass(frozen=True)
class WienerBank:
    """One linear predictor per horizon sharing the input window.

    Attributes
    ----------
    coefficients : (n_horizons, P) ndarray
        Row ``j`` predicts horizon ``horizons[j]`` as ``a . x``.
    horizons : tuple of int
    t_csi, p : int
    analytic_mmse : (n_horizons,) ndarray
        ``R(0) - r^T R^-1 r`` per horizon.
    variance : float
    loading : float
        Diagonal loading that was needed to factorise R (0 if none).
    """

    coefficients: np.ndarray
    horizons: tuple
    t_csi: int
    p: int
    analytic_mmse: np.ndarray
    variance: float
    loading: float = 0.0

    def predict(self, x) -> np.ndarray:
        return wiener_predict(self, x)

    def to_text(self) -> str:
        lines = [f"P {self.p}", f"T_CSI {self.t_csi}", f"variance {float(self.variance)!r}",
                 f"loading {float(self.loading)!r}",
                 "# tau mmse a_0 ... a_{P-1}"]
        for tau, mmse, row in zip(self.horizons, self.analytic_mmse, self.coefficients):
            lines.append(" ".join([str(tau), repr(float(mmse)), *[repr(float(a)) for a in row]]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "WienerBank":
        head, rows = {}, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] in ("P", "T_CSI", "variance", "loading"):
                head[parts[0]] = parts[1]
            else:
                rows.append([float(v) for v in parts])
        rows = np.array(rows)
        return cls(rows[:, 2:], tuple(int(t) for t in rows[:, 0]), int(head["T_CSI"]), int(head["P"]),
                   rows[:, 1], float(head["variance"]), float(head.get("loading", 0.0)))


def normal_equations(autocorr, p: int, t_csi: int, horizons: Sequence[int]):
    """Toeplitz matrix ``R[i,j] = R(T (i-j))`` and right-hand sides ``r[i] = R(T i + tau)``."""
    idx = np.arange(p)
    gram = np.asarray(autocorr(t_csi * (idx[:, None] - idx[None, :])), dtype=float).reshape(p, p)
    rhs = np.stack([np.asarray(autocorr(t_csi * idx + tau), dtype=float).reshape(p) for tau in horizons])
    return gram, rhs


def build_filter_bank(autocorr, p: int, t_csi: int, horizons: Sequence[int] | None = None) -> WienerBank:
    """Solve the Wiener-Hopf equations for every horizon.

    The lag ``t_csi * i + tau`` in the cross-correlation uses the even
    symmetry of the autocorrelation. The Toeplitz system is solved by
    Cholesky; if the factorisation fails the diagonal is loaded with
    ``1e-8 R(0)`` (growing tenfold until it succeeds) and a warning is issued.
    """
    if p < 1 or t_csi < 1:
        raise ConfigurationError("p and t_csi must be >= 1")
    horizons = tuple(range(1, t_csi)) if horizons is None else tuple(int(h) for h in horizons)
    if not horizons or min(horizons) < 1:
        raise ConfigurationError("horizons must be positive")
    need = t_csi * (p - 1) + max(horizons)
    if getattr(autocorr, "max_lag", need) < need:
        raise SizingError(f"autocorrelation covers lag {autocorr.max_lag}, need {need}")
    gram, rhs = normal_equations(autocorr, p, t_csi, horizons)
    r0 = float(autocorr(0))
    loading = 0.0
    while True:
        try:
            factor = linalg.cho_factor(gram + loading * np.eye(p), lower=True, check_finite=True)
            coeffs = linalg.cho_solve(factor, rhs.T).T
            break
        except linalg.LinAlgError:
            loading = 1e-8 * r0 if loading == 0.0 else loading * 10
            if loading > r0:
                raise DomainError("autocorrelation matrix is not positive definite")
    if loading:
        warnings.warn(f"autocorrelation matrix singular; diagonal loading {loading:.3g} applied", RuntimeWarning)
    mmse = r0 - np.einsum("ij,ij->i", rhs, coeffs)
    return WienerBank(coeffs, horizons, t_csi, p, mmse, r0, loading)


def wiener_predict(bank: WienerBank, x) -> np.ndarray:
    """Apply every filter of the bank to window(s) `x` (most recent first)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != bank.p:
        raise DomainError(f"window length {x.shape[-1]} does not match filter order {bank.p}")
    return x @ bank.coefficients.T
