"""Time-varying per-layer, per-RB SINR generation.

Each spatial layer is an independent tapped-delay-line channel. Every tap is a
sum-of-sinusoids Rayleigh (or Rician, for LOS taps) process whose
autocorrelation follows the Clarke/Jakes model ``J0(2 pi f_D m T)``. The
frequency response is evaluated at the centre of every resource block.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ResourceError

PROFILE_NAMES = ("tdl-a", "tdl-b", "tdl-c", "tdl-d", "tdl-e")
NLOS_PROFILES = ("tdl-a", "tdl-b", "tdl-c")

N_SINUSOIDS = 64
SUBCARRIERS_PER_RB = 12
SUBCARRIER_SPACING = 15e3
RB_BANDWIDTH = SUBCARRIERS_PER_RB * SUBCARRIER_SPACING

# 2 GiB of float64 SINR values
MAX_GRID_BYTES = 2 * 1024**3

_BLOCK = 1024
_GRID_MAGIC = b"SINRGRID"


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tapped-delay-line profile.

    Attributes
    ----------
    name : str
        Profile identifier, one of ``PROFILE_NAMES``.
    delays : ndarray
        Tap delays in seconds, strictly increasing.
    powers : ndarray
        Linear tap powers, normalised to unit sum.
    rician_k : ndarray
        Linear Rician K-factor per tap (0 for Rayleigh taps).
    delay_spread : float
        Delay spread the delays were scaled to, in seconds.
    """

    name: str
    delays: np.ndarray
    powers: np.ndarray
    rician_k: np.ndarray
    delay_spread: float = 300e-9

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        powers = np.asarray(self.powers, dtype=float)
        k = np.asarray(self.rician_k, dtype=float)
        if not (delays.shape == powers.shape == k.shape) or delays.ndim != 1 or delays.size == 0:
            raise ConfigurationError(f"{self.name}: delays, powers and rician_k must be equal-length vectors")
        if not (np.all(np.isfinite(delays)) and np.all(np.isfinite(powers)) and np.all(np.isfinite(k))):
            raise ConfigurationError(f"{self.name}: non-finite tap parameter")
        if delays[0] < 0 or np.any(np.diff(delays) <= 0):
            raise ConfigurationError(f"{self.name}: delays must be non-negative and strictly increasing")
        if np.any(powers <= 0) or np.any(k < 0):
            raise ConfigurationError(f"{self.name}: tap powers must be > 0 and K-factors >= 0")
        if self.name in NLOS_PROFILES and np.any(k > 0):
            raise ConfigurationError(f"{self.name}: NLOS profile cannot carry a Rician tap")
        if np.any(k[1:] > 0):
            raise ConfigurationError(f"{self.name}: only the first tap may be Rician")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers / powers.sum())
        object.__setattr__(self, "rician_k", k)

    @property
    def n_taps(self) -> int:
        return self.delays.size

    @property
    def is_los(self) -> bool:
        return bool(self.rician_k[0] > 0)

    def rms_delay_spread(self) -> float:
        mean = np.sum(self.powers * self.delays)
        return float(np.sqrt(np.sum(self.powers * (self.delays - mean) ** 2)))


def _load_profile_table(path=None) -> dict:
    if path is None:
        text = resources.files("csipred.data").joinpath("profiles.json").read_text()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"profile table not found: {path}")
        text = path.read_text()
    table = json.loads(text)
    unknown = set(table) - {"reference_delay_spread_ns", "profiles"}
    if unknown:
        raise ConfigurationError(f"unknown keys in profile table: {sorted(unknown)}")
    return table


def load_profiles(path=None, delay_spread: float = 300e-9) -> dict[str, PowerDelayProfile]:
    """Load every profile of a JSON profile table.

    The file holds ``{"reference_delay_spread_ns": ..., "profiles": [...]}``
    where each profile is ``{"name", "taps": [{"delay_ns", "power_db",
    "rician_k_db"}]}``. Delays are given at the reference delay spread and
    rescaled linearly to `delay_spread`. ``rician_k_db`` is ``null`` for
    Rayleigh taps.
    """
    table = _load_profile_table(path)
    ref = float(table.get("reference_delay_spread_ns", 300.0)) * 1e-9
    out = {}
    for entry in table["profiles"]:
        unknown = set(entry) - {"name", "taps"}
        if unknown:
            raise ConfigurationError(f"unknown profile keys: {sorted(unknown)}")
        delays, powers, ks = [], [], []
        for tap in entry["taps"]:
            unknown = set(tap) - {"delay_ns", "power_db", "rician_k_db"}
            if unknown:
                raise ConfigurationError(f"unknown tap keys: {sorted(unknown)}")
            delays.append(float(tap["delay_ns"]) * 1e-9 * delay_spread / ref)
            powers.append(10 ** (float(tap["power_db"]) / 10))
            k_db = tap.get("rician_k_db")
            ks.append(0.0 if k_db is None else 10 ** (float(k_db) / 10))
        out[entry["name"]] = PowerDelayProfile(entry["name"], np.array(delays), np.array(powers),
                                               np.array(ks), delay_spread)
    return out


def pdp_profile(name: str, delay_spread: float = 300e-9, path=None) -> PowerDelayProfile:
    """Return the named profile scaled to `delay_spread` seconds."""
    if not (np.isfinite(delay_spread) and delay_spread > 0):
        raise ConfigurationError(f"delay spread must be positive, got {delay_spread}")
    profiles = load_profiles(path, delay_spread)
    if name not in profiles:
        raise ConfigurationError(f"unknown profile {name!r}; expected one of {sorted(profiles)}")
    return profiles[name]


def single_tap_profile(rician_k: float = 0.0) -> PowerDelayProfile:
    """Flat (frequency non-selective) profile with a single tap."""
    return PowerDelayProfile("flat", np.zeros(1), np.ones(1), np.array([float(rician_k)]), 0.0)


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of one simulated link.

    Defaults follow the 10 MHz / 15 kHz numerology with four layers.
    """

    doppler_hz: float = 10.0
    n_slots: int = 10_000
    slot_duration: float = 1e-3
    n_layers: int = 4
    n_rb: int = 52
    avg_snr_db: float = 12.5
    profile: PowerDelayProfile = field(default_factory=lambda: pdp_profile("tdl-a"))
    seed: int = 0

    def __post_init__(self):
        for name in ("doppler_hz", "slot_duration", "avg_snr_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.doppler_hz < 0:
            raise ConfigurationError("doppler_hz must be >= 0")
        if self.slot_duration <= 0:
            raise ConfigurationError("slot_duration must be > 0")
        if self.n_slots < 1 or self.n_layers < 1 or self.n_rb < 1:
            raise ConfigurationError("n_slots, n_layers and n_rb must be >= 1")

    @property
    def avg_snr_linear(self) -> float:
        return 10 ** (self.avg_snr_db / 10)

    def with_(self, **changes) -> "ChannelConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class SinrGrid:
    """Linear SINR per slot, layer and resource block."""

    values: np.ndarray  # [n_slots, n_layers, n_rb]
    config: ChannelConfig

    def __post_init__(self):
        v = self.values
        c = self.config
        if v.shape != (c.n_slots, c.n_layers, c.n_rb):
            raise ConfigurationError(f"grid shape {v.shape} does not match config")
        v.setflags(write=False)

    @property
    def n_slots(self) -> int:
        return self.values.shape[0]

    def dump(self, path) -> None:
        """Write the grid as little-endian binary.

        Layout: 8-byte magic ``SINRGRID``, three uint64 dimensions
        (n_slots, n_layers, n_rb), then the values as row-major float64.
        """
        with open(path, "wb") as fh:
            fh.write(_GRID_MAGIC)
            fh.write(struct.pack("<3Q", *self.values.shape))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())


def load_grid_values(path) -> np.ndarray:
    """Read the values written by :meth:`SinrGrid.dump`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _GRID_MAGIC:
            raise ConfigurationError(f"{path}: not a SINR grid dump")
        dims = struct.unpack("<3Q", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(dims)):
        raise ConfigurationError(f"{path}: truncated grid dump")
    return data.reshape(dims).astype(np.float64)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_tap_process(doppler_hz: float, n_slots: int, slot_duration: float = 1e-3,
                         rician_k: float = 0.0, seed=0, n_sinusoids: int = N_SINUSOIDS,
                         angle_offset: float | None = None) -> np.ndarray:
    """Unit-power complex fading sequence sampled once per slot.

    The diffuse part is a sum of `n_sinusoids` complex exponentials with
    independent uniform phases and arrival angles on a midpoint grid over
    ``(0, pi)``, ``alpha_k = pi (k + 1/2 + offset) / M``. The grid makes the
    time-averaged autocorrelation a quadrature rule for ``J0(2 pi f_D m T)``
    and keeps all Doppler frequencies distinct. LOS taps add a deterministic
    component of relative power ``K / (K + 1)`` with a random arrival angle.

    Parameters
    ----------
    doppler_hz : float
        Maximum Doppler shift f_D.
    n_slots : int
        Number of samples.
    slot_duration : float
        Sampling interval in seconds.
    rician_k : float
        Linear K-factor, 0 for Rayleigh.
    seed : int, SeedSequence or Generator
    n_sinusoids : int
    angle_offset : float, optional
        Shift of the angle grid in units of one grid step, in [-0.5, 0.5].
        Drawn at random when omitted. Processes that must be mutually
        uncorrelated over a finite record should use well separated offsets.

    Returns
    -------
    g : (n_slots,) complex ndarray
    """
    for name, value in (("doppler_hz", doppler_hz), ("slot_duration", slot_duration), ("rician_k", rician_k)):
        if not math.isfinite(value):
            raise ConfigurationError(f"{name} must be finite, got {value}")
    if doppler_hz < 0 or slot_duration <= 0 or rician_k < 0:
        raise ConfigurationError("doppler_hz >= 0, slot_duration > 0 and rician_k >= 0 required")
    if n_slots < 1:
        raise ConfigurationError("n_slots must be >= 1")
    rng = _as_rng(seed)
    m = n_sinusoids
    offset = rng.uniform(-0.5, 0.5) if angle_offset is None else float(angle_offset)
    alpha = np.pi * (np.arange(m) + 0.5 + offset) / m
    phases = rng.uniform(0.0, 2 * np.pi, m)
    w = 2 * np.pi * doppler_hz * np.cos(alpha) * slot_duration  # rad / slot
    amp = np.full(m, 1 / np.sqrt(m), dtype=complex)
    if rician_k > 0:
        los_angle = rng.uniform(0.0, 2 * np.pi)
        los_phase = rng.uniform(0.0, 2 * np.pi)
        w = np.append(w, 2 * np.pi * doppler_hz * np.cos(los_angle) * slot_duration)
        phases = np.append(phases, los_phase)
        amp = np.append(amp * np.sqrt(1 / (rician_k + 1)), np.sqrt(rician_k / (rician_k + 1)))

    # g[b*B + i] = sum_k exp(j w_k i) * amp_k exp(j (w_k b B + phi_k))
    n_blocks = -(-n_slots // _BLOCK)
    inner = np.exp(1j * np.outer(np.arange(_BLOCK), w))
    outer = amp[:, None] * np.exp(1j * (np.outer(w, np.arange(n_blocks) * _BLOCK) + phases[:, None]))
    g = (inner @ outer).T.reshape(-1)[:n_slots]
    return np.ascontiguousarray(g)


def rb_center_frequencies(n_rb: int) -> np.ndarray:
    """Baseband centre frequency of every resource block, in Hz."""
    return (np.arange(n_rb) - (n_rb - 1) / 2) * RB_BANDWIDTH


def frequency_response(taps: np.ndarray, profile: PowerDelayProfile, n_rb: int) -> np.ndarray:
    """Evaluate ``sum_t sqrt(p_t) g_t(n) exp(-j 2 pi f_m d_t)`` per slot and RB.

    `taps` has shape ``(n_slots, n_taps)``; the result ``(n_slots, n_rb)``.
    """
    f = rb_center_frequencies(n_rb)
    steering = np.sqrt(profile.powers)[:, None] * np.exp(-2j * np.pi * np.outer(profile.delays, f))
    return taps @ steering


def generate_sinr_grid(config: ChannelConfig, max_bytes: int = MAX_GRID_BYTES) -> SinrGrid:
    """Draw a seeded SINR grid ``avg_snr * |H_l(n, m)|^2``."""
    n_values = config.n_slots * config.n_layers * config.n_rb
    if n_values * 8 > max_bytes:
        raise ResourceError(f"grid of {n_values} values exceeds the {max_bytes}-byte budget")
    profile = config.profile
    n_proc = config.n_layers * profile.n_taps
    children = np.random.SeedSequence(config.seed).spawn(n_proc + 1)
    # stagger the angle grids so that no two processes share Doppler frequencies
    base = np.random.default_rng(children[-1]).uniform()
    offsets = -0.5 + (np.random.default_rng(children[-1]).permutation(n_proc) + base) / n_proc
    out = np.empty((config.n_slots, config.n_layers, config.n_rb))
    for layer in range(config.n_layers):
        taps = np.empty((config.n_slots, profile.n_taps), dtype=complex)
        for t in range(profile.n_taps):
            taps[:, t] = generate_tap_process(config.doppler_hz, config.n_slots, config.slot_duration,
                                              profile.rician_k[t], children[layer * profile.n_taps + t],
                                              angle_offset=offsets[layer * profile.n_taps + t])
        h = frequency_response(taps, profile, config.n_rb)
        out[:, layer, :] = config.avg_snr_linear * (h.real**2 + h.imag**2)
    # guard against an exact spectral null
    np.maximum(out, np.finfo(float).tiny, out=out)
    return SinrGrid(out, config)


def config_to_dict(config: ChannelConfig) -> dict:
    return {
        "doppler_hz": config.doppler_hz,
        "n_slots": config.n_slots,
        "slot_duration": config.slot_duration,
        "n_layers": config.n_layers,
        "n_rb": config.n_rb,
        "avg_snr_db": config.avg_snr_db,
        "profile": config.profile.name,
        "delay_spread": config.profile.delay_spread,
        "seed": config.seed,
    }


def mixed_doppler_configs(base: ChannelConfig, dopplers: Sequence[float]) -> list[ChannelConfig]:
    """One config per Doppler value with distinct derived seeds."""
    return [replace(base, doppler_hz=float(fd), seed=base.seed * 1000 + i) for i, fd in enumerate(dopplers)]
