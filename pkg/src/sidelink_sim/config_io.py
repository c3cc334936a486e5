"""Configuration parsing, validation, and result serialization."""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np


class ConfigError(Exception):
    """Raised for unknown keys, malformed values, or out-of-range fields."""


class TrafficMode(enum.Enum):
    PERIODIC = "periodic"
    APERIODIC = "aperiodic"


class ReceiverMode(enum.Enum):
    LEGACY = "legacy"
    SIC = "sic"
    SIC_FRC = "sic_frc"
    SIC_FRC_BKC = "sic_frc_bkc"


class AllocationMode(enum.Enum):
    SB_SPS = "sb_sps"
    SB_DS = "sb_ds"
    SORTED = "sorted"


def _parse_enum(cls, text: str, key: str):
    norm = text.strip().lower().replace("-", "_")
    for member in cls:
        if member.value == norm or member.name.lower() == norm:
            return member
    names = ", ".join(m.value for m in cls)
    raise ConfigError(f"{key}: unknown value {text!r} (expected one of: {names})")


@dataclass
class PathlossParams:
    """Dual-slope path loss: a0 + 10*s1*log10(min(d,bp)) + 10*s2*log10(max(d/bp,1))."""

    a0_db: float = 47.86
    slope1: float = 2.0
    slope2: float = 4.0
    breakpoint_m: float = 177.0


@dataclass
class SimConfig:
    # scenario
    road_length_m: float = 2000.0
    density_veh_per_km: float = 12.5
    lanes_per_direction: int = 3
    mean_speed_kmh: float = 70.0
    speed_std_kmh: float = 7.0
    # traffic / modes
    traffic_mode: TrafficMode = TrafficMode.PERIODIC
    receiver_mode: ReceiverMode = ReceiverMode.LEGACY
    allocation_mode: AllocationMode = AllocationMode.SB_SPS
    n_retx: int = 0
    # run control
    sim_duration_s: float = 12.0
    warmup_s: float = 2.0
    rng_seed: int = 1
    # numerology / grid
    numerology_mu: int = 0
    n_subchannels: int = 10
    subchannel_prbs: int = 10
    subch_per_packet: int = 0  # 0 means full band (n_subchannels)
    # receiver
    mcs_sinr_threshold_db: float = 3.6
    kn_db: float = -30.0
    max_sic_iterations: int = 1
    bkc_window_ttis: int = 32
    # allocation
    t1_ms: float = 1.0
    t2_ms: float = 50.0
    rsrp_threshold_dbm: float = -126.0
    keep_probability: float = 0.0
    # radio
    tx_power_dbm: float = 23.0
    antenna_gain_dbi: float = 3.0
    noise_figure_db: float = 9.0
    bandwidth_mhz: float = 20.0
    pathloss: PathlossParams = field(default_factory=PathlossParams)
    shadowing_std_db: float = 3.0
    shadowing_decorr_m: float = 25.0
    # metrics
    cbr_threshold_dbm: float = -94.0
    prr_bin_m: float = 20.0
    # debugging
    debug_trace_rx: int = -1

    @property
    def tti_ms(self) -> float:
        return 2.0 ** (-self.numerology_mu)

    @property
    def n_vehicles(self) -> int:
        return int(round(self.density_veh_per_km * self.road_length_m / 1000.0))

    @property
    def subch_used(self) -> int:
        return self.subch_per_packet if self.subch_per_packet > 0 else self.n_subchannels

    @property
    def placements_per_tti(self) -> int:
        return self.n_subchannels - self.subch_used + 1


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}

_ENUM_FIELDS = {
    "traffic_mode": TrafficMode,
    "receiver_mode": ReceiverMode,
    "allocation_mode": AllocationMode,
}


def _coerce(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def _field_types(cls) -> dict:
    # annotations are strings under __future__.annotations; inspect defaults instead
    probe = cls()
    out = {}
    for f in fields(cls):
        if f.name == "pathloss":
            continue
        out[f.name] = type(getattr(probe, f.name))
    return out


_SIM_FIELD_TYPES = None
_PL_FIELD_TYPES = None


def _sim_field_types() -> dict:
    global _SIM_FIELD_TYPES
    if _SIM_FIELD_TYPES is None:
        _SIM_FIELD_TYPES = _field_types(SimConfig)
    return _SIM_FIELD_TYPES


def _pl_field_types() -> dict:
    global _PL_FIELD_TYPES
    if _PL_FIELD_TYPES is None:
        probe = PathlossParams()
        _PL_FIELD_TYPES = {f.name: type(getattr(probe, f.name)) for f in fields(PathlossParams)}
    return _PL_FIELD_TYPES


def _assign(cfg: SimConfig, key: str, raw: str, where: str = "") -> None:
    loc = f"{where}: " if where else ""
    if key.startswith("pl."):
        sub = key[3:]
        types = _pl_field_types()
        if sub not in types:
            raise ConfigError(f"{loc}unknown key {key!r}")
        setattr(cfg.pathloss, sub, _coerce(key, raw, types[sub]))
        return
    if key in _ENUM_FIELDS:
        setattr(cfg, key, _parse_enum(_ENUM_FIELDS[key], raw, key))
        return
    types = _sim_field_types()
    if key not in types:
        raise ConfigError(f"{loc}unknown key {key!r}")
    setattr(cfg, key, _coerce(key, raw, types[key]))


def parse_config_file(path: str) -> SimConfig:
    """Read a flat key=value file. '#' starts a comment, blank lines skipped."""
    cfg = SimConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
            key, _, raw = text.partition("=")
            _assign(cfg, key.strip(), raw, where=f"{path}:{lineno}")
    validate_config(cfg)
    return cfg


def apply_overrides(cfg: SimConfig, overrides: Iterable[str]) -> SimConfig:
    """Apply key=value strings on top of cfg, returning a new validated config."""
    out = replace(cfg, pathloss=replace(cfg.pathloss))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, _, raw = item.partition("=")
        _assign(out, key.strip(), raw, where=f"override {item!r}")
    validate_config(out)
    return out


def validate_config(cfg: SimConfig) -> None:
    def positive(name):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be > 0, got {getattr(cfg, name)}")

    for name in ("road_length_m", "density_veh_per_km", "mean_speed_kmh",
                 "sim_duration_s", "bandwidth_mhz", "n_subchannels",
                 "subchannel_prbs", "prr_bin_m"):
        positive(name)
    if cfg.lanes_per_direction < 1:
        raise ConfigError(f"lanes_per_direction must be >= 1, got {cfg.lanes_per_direction}")
    if cfg.speed_std_kmh < 0:
        raise ConfigError(f"speed_std_kmh must be >= 0, got {cfg.speed_std_kmh}")
    if not 0 <= cfg.n_retx <= 3:
        raise ConfigError(f"n_retx must be in [0, 3], got {cfg.n_retx}")
    if cfg.warmup_s < 0:
        raise ConfigError(f"warmup_s must be >= 0, got {cfg.warmup_s}")
    if cfg.warmup_s >= cfg.sim_duration_s:
        raise ConfigError("warmup_s must be smaller than sim_duration_s")
    if not 0 <= cfg.numerology_mu <= 3:
        raise ConfigError(f"numerology_mu must be in [0, 3], got {cfg.numerology_mu}")
    if cfg.subch_per_packet < 0 or cfg.subch_per_packet > cfg.n_subchannels:
        raise ConfigError("subch_per_packet must be in [0, n_subchannels]")
    if cfg.max_sic_iterations < 0:
        raise ConfigError(f"max_sic_iterations must be >= 0, got {cfg.max_sic_iterations}")
    if cfg.bkc_window_ttis < 1:
        raise ConfigError(f"bkc_window_ttis must be >= 1, got {cfg.bkc_window_ttis}")
    if not 0.0 <= cfg.keep_probability <= 0.8:
        raise ConfigError(f"keep_probability must be in [0, 0.8], got {cfg.keep_probability}")
    if cfg.t1_ms < 0 or cfg.t2_ms <= cfg.t1_ms:
        raise ConfigError("require 0 <= t1_ms < t2_ms")
    if cfg.n_vehicles < 1:
        raise ConfigError("density * road length yields zero vehicles")


# ---------------------------------------------------------------------------
# run outputs


@dataclass
class RunOutputs:
    """Everything a finished run exposes; CSV writers consume this."""

    # identity (echoed into range_summary.csv)
    receiver_mode: str = ""
    traffic_mode: str = ""
    allocation_mode: str = ""
    n_retx: int = 0
    density_veh_per_km: float = 0.0
    # cbr.csv: (window_start_ms, median cbr)
    cbr_windows: list = field(default_factory=list)
    # prr_by_distance.csv: (bin_center_m, successes, attempts, prr)
    prr_bins: list = field(default_factory=list)
    # wbsp_ccdf.csv: (window_ms, blind-window probability)
    wbsp_table: list = field(default_factory=list)
    # eed_ccdf.csv: (eed_ms, ccdf)
    eed_ccdf: list = field(default_factory=list)
    range_m: float = 0.0
    # raw samples, not serialized
    eed_samples_ms: list = field(default_factory=list)
    wbsp_samples_ms: list = field(default_factory=list)
    # diagnostics
    stats: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_metrics_csv(out: RunOutputs, out_dir: str) -> None:
    """Write the four metric CSVs plus range_summary.csv into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "cbr.csv"),
               ["window_start_ms", "cbr"],
               sorted(out.cbr_windows, key=lambda r: r[0]))
    _write_csv(os.path.join(out_dir, "prr_by_distance.csv"),
               ["bin_center_m", "successes", "attempts", "prr"],
               sorted(out.prr_bins, key=lambda r: r[0]))
    _write_csv(os.path.join(out_dir, "wbsp_ccdf.csv"),
               ["gap_ms", "ccdf"],
               sorted(out.wbsp_table, key=lambda r: r[0]))
    _write_csv(os.path.join(out_dir, "eed_ccdf.csv"),
               ["eed_ms", "ccdf"],
               sorted(out.eed_ccdf, key=lambda r: r[0]))
    _write_csv(os.path.join(out_dir, "range_summary.csv"),
               ["receiver_mode", "traffic_mode", "n_retx", "density", "range_m"],
               [(out.receiver_mode, out.traffic_mode, out.n_retx,
                 out.density_veh_per_km, out.range_m)])
