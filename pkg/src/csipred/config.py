"""JSON experiment configuration with strict key checking.

Schema (every key optional; unknown keys are errors)::

    {
      "channel":   {"doppler_hz", "n_slots", "slot_duration", "n_layers", "n_rb",
                    "avg_snr_db", "profile", "delay_spread", "profiles_path"},
      "cqi_table": "path/to/table.json" | null,
      "predictors": [{"kind", "input_len", "hidden", "t_csi", "mode", "horizon",
                      "target", "input_mode", "interp_step"}, ...],
      "train":     {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "eps",
                    "shuffle_seed", "patience"},
      "sweep":     {"dopplers", "t_csi_list", "horizons", "hidden_sizes", "input_lens",
                    "mixed_dopplers", "profiles"},
      "scale":     {"train_slots", "test_slots", "mixed_slots", "neural_stride",
                    "max_train_windows", "max_mixed_windows"},
      "out_dir":   "out",
      "seed":      0
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .channel import ChannelConfig, pdp_profile
from .errors import ConfigurationError
from .link import CqiTable, load_cqi_table
from .neural import TrainConfig
from .predictors import PredictorSpec


@dataclass(frozen=True)
class Scale:
    """Desk-scale sizes shared by datasets and link simulations."""

    train_slots: int = 100_000
    test_slots: int = 20_000
    mixed_slots: int = 20_000
    neural_stride: int = 1
    max_train_windows: int = 40_000
    max_mixed_windows: int = 100_000


@dataclass(frozen=True)
class Sweep:
    dopplers: tuple = (5.0, 10.0, 20.0)
    t_csi_list: tuple = (4, 8, 16, 32)
    horizons: tuple = (2, 8, 16, 24, 31)
    hidden_sizes: tuple = (4, 8, 16, 32)
    input_lens: tuple = (2, 3, 4, 5, 6, 7)
    mixed_dopplers: tuple = tuple(float(f) for f in range(1, 51))
    profiles: tuple = ("tdl-a", "tdl-b", "tdl-c", "tdl-d", "tdl-e")


def _default_predictors():
    return (PredictorSpec("zoh", t_csi=32), PredictorSpec("wiener", t_csi=32), PredictorSpec("gru", t_csi=32))


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    cqi_table: str | None = None
    predictors: tuple = field(default_factory=_default_predictors)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(patience=20))
    sweep: Sweep = field(default_factory=Sweep)
    scale: Scale = field(default_factory=Scale)
    out_dir: str = "out"
    seed: int = 0

    @property
    def train_seed(self) -> int:
        return 2 * self.seed + 1

    @property
    def test_seed(self) -> int:
        return 2 * self.seed + 2

    def table(self) -> CqiTable:
        return load_cqi_table(self.cqi_table)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        ch = self.channel
        return {
            "channel": {"doppler_hz": ch.doppler_hz, "n_slots": ch.n_slots, "slot_duration": ch.slot_duration,
                        "n_layers": ch.n_layers, "n_rb": ch.n_rb, "avg_snr_db": ch.avg_snr_db,
                        "profile": ch.profile.name, "delay_spread": ch.profile.delay_spread},
            "cqi_table": self.cqi_table,
            "predictors": [asdict(p) for p in self.predictors],
            "train": asdict(self.train),
            "sweep": {k: list(v) for k, v in asdict(self.sweep).items()},
            "scale": asdict(self.scale),
            "out_dir": self.out_dir,
            "seed": self.seed,
        }


def _strict(data, allowed, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return data


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def _channel(data: dict) -> ChannelConfig:
    allowed = ["doppler_hz", "n_slots", "slot_duration", "n_layers", "n_rb", "avg_snr_db", "profile",
               "delay_spread", "profiles_path"]
    d = dict(_strict(data, allowed, "channel"))
    name = d.pop("profile", "tdl-a")
    spread = float(d.pop("delay_spread", 300e-9))
    path = d.pop("profiles_path", None)
    if path is not None and not Path(path).exists():
        raise ConfigurationError(f"profile table not found: {path}")
    return ChannelConfig(**d, profile=pdp_profile(name, spread, path))


def _tuple_axes(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigurationError(f"sweep axis {k!r} must be a non-empty list")
        out[k] = tuple(v)
    return out


def config_from_dict(data: dict, base_dir=None) -> ExperimentConfig:
    _strict(data, _names(ExperimentConfig), "config")
    kw = {}
    if "channel" in data:
        kw["channel"] = _channel(data["channel"])
    if data.get("cqi_table") is not None:
        path = Path(data["cqi_table"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigurationError(f"CQI table not found: {path}")
        kw["cqi_table"] = str(path)
    if "predictors" in data:
        if not data["predictors"]:
            raise ConfigurationError("predictors must be a non-empty list")
        kw["predictors"] = tuple(PredictorSpec(**_strict(p, _names(PredictorSpec), "predictor"))
                                 for p in data["predictors"])
    if "train" in data:
        kw["train"] = TrainConfig(**_strict(data["train"], _names(TrainConfig), "train"))
    if "sweep" in data:
        kw["sweep"] = Sweep(**_tuple_axes(_strict(data["sweep"], _names(Sweep), "sweep")))
    if "scale" in data:
        kw["scale"] = Scale(**_strict(data["scale"], _names(Scale), "scale"))
    for k in ("out_dir", "seed"):
        if k in data:
            kw[k] = data[k]
    return ExperimentConfig(**kw)


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON config; the defaults when `path` is None."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, path.parent)
