"""Device and power configuration, loaded from JSON profiles."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from ..errors import ConfigError, IoError

PROFILE_NAMES = ("ssd-c", "ssd-p")

# Synthesized logic power at 300 MHz, watts per instance.
COMPARATOR_W = 0.284e-3
KMER_REGISTERS_W = 0.645e-3
INDEX_GENERATOR_W = 0.025e-3
CONTROL_UNIT_W = 0.026e-3


def accelerator_power(channels: int) -> float:
    """Logic power of the per-channel comparator, register pair and index
    generator plus one control unit (7.658 mW for 8 channels)."""
    return channels * (COMPARATOR_W + KMER_REGISTERS_W + INDEX_GENERATOR_W) + CONTROL_UNIT_W


@dataclass(frozen=True)
class SsdConfig:
    channels: int = 8
    dies_per_channel: int = 4
    planes_per_die: int = 2
    page_bytes: int = 16384
    per_channel_bw: float = 1.2e9
    external_bw: float = 560e6
    internal_dram_bytes: int = 4 << 30
    internal_dram_bw: float = 12.8e9
    block_bytes: int = 12 << 20
    capacity_bytes: int = 4 << 40
    comparator_rate: float = 300e6        # k-mers/s per channel
    controller_core_rate: float = 550e6   # k-mers/s, all controller cores together
    host_sort_rate: float = 4e9           # bytes/s
    sort_accel_rate: float = 20e9         # bytes/s, external sorting accelerator
    host_dram_bw: float = 25.6e9
    accel_freq: float = 300e6
    name: str = "custom"

    def __post_init__(self):
        for f in fields(self):
            if f.name == "name":
                continue
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{f.name} must be positive, got {v!r}")
        if self.block_bytes % self.page_bytes:
            raise ConfigError("block_bytes must be a multiple of page_bytes")

    @property
    def internal_bw(self) -> float:
        return self.channels * self.per_channel_bw

    @property
    def batch_bytes(self) -> int:
        """Bytes one multi-plane read across all channels and dies returns."""
        return self.channels * self.dies_per_channel * self.planes_per_die * self.page_bytes

    @property
    def pages_per_block(self) -> int:
        return self.block_bytes // self.page_bytes

    def replace(self, **changes) -> "SsdConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SsdConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"power"}
        if unknown:
            raise ConfigError(f"unknown SSD config fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k != "power"})


@dataclass(frozen=True)
class Power:
    active: float
    idle: float = 0.0

    def __post_init__(self):
        if not (self.active >= self.idle >= 0):
            raise ConfigError(f"need active >= idle >= 0, got {self.active}/{self.idle}")


@dataclass(frozen=True)
class PowerModel:
    """Active/idle watts per component.

    Only the accelerator figure (7.658 mW for the 8-channel logic) is a
    synthesized value; every other default is a placeholder to calibrate.
    """

    nand_per_channel: Power = Power(0.35, 0.02)
    internal_dram: Power = Power(0.45, 0.05)
    accelerator: Power = Power(7.658e-3, 0.0)
    controller_cores: Power = Power(0.6, 0.05)
    host_cpu: Power = Power(180.0, 60.0)
    external_link: Power = Power(2.0, 0.3)

    def component(self, name: str) -> Power:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {f.name: {"active": getattr(self, f.name).active, "idle": getattr(self, f.name).idle}
                for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "PowerModel":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown power fields: {sorted(unknown)}")
        return cls(**{k: Power(float(v["active"]), float(v.get("idle", 0.0))) for k, v in data.items()})

    def scaled(self, active_factor: float) -> "PowerModel":
        return PowerModel(**{
            f.name: Power(getattr(self, f.name).active * active_factor, getattr(self, f.name).idle)
            for f in fields(self)
        })


def _read_json(path: Path | str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _profile_text(name: str) -> str:
    return resources.files("ispmeta.ssd").joinpath("profiles", f"{name}.json").read_text("utf-8")


def load_profile(name_or_path: str | Path) -> tuple[SsdConfig, PowerModel]:
    """Load a built-in profile by name or a JSON file by path.

    The JSON holds SsdConfig fields plus an optional ``power`` object.
    """
    if str(name_or_path) in PROFILE_NAMES:
        data = json.loads(_profile_text(str(name_or_path)))
    else:
        data = _read_json(name_or_path)
    cfg = SsdConfig.from_dict(data)
    power = PowerModel.from_dict(data["power"]) if "power" in data else PowerModel()
    return cfg, power


def load_config(name_or_path: str | Path) -> SsdConfig:
    return load_profile(name_or_path)[0]
