"""Ring-road fleet: spawning, mobility, geometry, packet arrival processes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config_io import SimConfig, TrafficMode

MEAN_INTERVAL_MS = 100.0
APERIODIC_FLOOR_MS = 50.0
APERIODIC_EXP_MEAN_MS = 50.0


@dataclass
class Fleet:
    """Structure-of-arrays vehicle state on a circular road."""

    n: int
    road_length_m: float
    position_m: np.ndarray   # (n,) float64, in [0, L)
    speed_ms: np.ndarray     # (n,) float64, >= 0
    direction: np.ndarray    # (n,) int8, +1 or -1
    lane: np.ndarray         # (n,) int16


def spawn_fleet(cfg: SimConfig, rng: np.random.Generator) -> Fleet:
    """Drop n vehicles uniformly on the ring, lanes round-robin, speeds gaussian."""
    n = cfg.n_vehicles
    position = rng.uniform(0.0, cfg.road_length_m, size=n)
    speed = rng.normal(cfg.mean_speed_kmh, cfg.speed_std_kmh, size=n)
    speed = np.maximum(speed, 0.0) / 3.6
    n_lanes = 2 * cfg.lanes_per_direction
    lane = (np.arange(n) % n_lanes).astype(np.int16)
    # first half of the lanes runs clockwise, the other half counter-clockwise
    direction = np.where(lane < cfg.lanes_per_direction, 1, -1).astype(np.int8)
    return Fleet(n=n, road_length_m=cfg.road_length_m, position_m=position,
                 speed_ms=speed, direction=direction, lane=lane)


def advance_mobility(fleet: Fleet, dt_s: float) -> None:
    """Move every vehicle along its direction, wrapping around the ring."""
    fleet.position_m += fleet.direction * fleet.speed_ms * dt_s
    fleet.position_m %= fleet.road_length_m


def ring_distance(a, b, road_length_m: float):
    """Geodesic distance on the ring; accepts scalars or arrays."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, road_length_m - d)


def pairwise_ring_distance(position_m: np.ndarray, road_length_m: float) -> np.ndarray:
    """(n, n) matrix of ring distances; zero diagonal."""
    d = np.abs(position_m[:, None] - position_m[None, :])
    return np.minimum(d, road_length_m - d)


def initial_phase_ms(traffic_mode: TrafficMode, rng: np.random.Generator) -> float:
    """First-packet offset, uniform over one nominal interval to desynchronize sources."""
    del traffic_mode  # same nominal interval either way
    return float(rng.uniform(0.0, MEAN_INTERVAL_MS))


def next_packet_interval_ms(traffic_mode: TrafficMode, rng: np.random.Generator) -> float:
    """Inter-arrival time: fixed 100 ms, or 50 ms plus an exponential with mean 50 ms."""
    if traffic_mode is TrafficMode.PERIODIC:
        return MEAN_INTERVAL_MS
    return APERIODIC_FLOOR_MS + float(rng.exponential(APERIODIC_EXP_MEAN_MS))
