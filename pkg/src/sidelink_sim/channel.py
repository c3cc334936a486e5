"""Dual-slope path loss, thermal noise, and correlated shadowing."""

from __future__ import annotations

import numpy as np

from .config_io import PathlossParams

# crossing vehicles on the 1-D ring can pass arbitrarily close; clamp the
# link distance to keep received powers finite and the near field out of scope
MIN_LINK_DISTANCE_M = 1.0

THERMAL_NOISE_DBM_PER_HZ = -174.0


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=np.float64) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=np.float64))


def path_loss_db(distance_m, params: PathlossParams):
    """Two-segment log-distance loss; scalar or array distances, all > 0."""
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0.0):
        raise ValueError("path loss undefined for non-positive distance")
    near = np.minimum(d, params.breakpoint_m)
    far = np.maximum(d / params.breakpoint_m, 1.0)
    pl = params.a0_db + 10.0 * params.slope1 * np.log10(near) \
        + 10.0 * params.slope2 * np.log10(far)
    return pl if pl.ndim else float(pl)


def noise_power_dbm(bandwidth_mhz: float, noise_figure_db: float) -> float:
    """Thermal noise over the given bandwidth, receiver noise figure included."""
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * np.log10(bandwidth_mhz * 1e6) + noise_figure_db


def received_power_dbm(tx_power_dbm, antenna_gain_dbi, pathloss_db, shadowing_db=0.0):
    """Link budget with the same antenna gain applied at both ends."""
    return tx_power_dbm + 2.0 * antenna_gain_dbi - pathloss_db - shadowing_db


def shadowing_step(prev_db, moved_m, decorr_m: float, sigma_db: float,
                   rng: np.random.Generator):
    """One AR(1) update: rho = exp(-moved/decorr), stationary at N(0, sigma^2)."""
    rho = np.exp(-np.asarray(moved_m, dtype=np.float64) / decorr_m)
    innov = rng.normal(0.0, sigma_db, size=np.shape(prev_db))
    return rho * prev_db + np.sqrt(1.0 - rho * rho) * innov


class ShadowingField:
    """Symmetric per-pair shadowing matrix evolving with vehicle displacement.

    The pair (i, j) decorrelates with the total ground both ends covered since
    the last update. Values stay zero on the diagonal.
    """

    def __init__(self, n: int, sigma_db: float, decorr_m: float,
                 rng: np.random.Generator):
        self.n = n
        self.sigma_db = sigma_db
        self.decorr_m = decorr_m
        self._rng = rng
        self.values_db = self._symmetric_normal()

    def _symmetric_normal(self) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, k=1)
        m[iu] = self._rng.normal(0.0, self.sigma_db, size=iu[0].size)
        return m + m.T

    def step(self, moved_m: np.ndarray) -> None:
        """Advance every pair given per-vehicle displacement since last call."""
        delta = moved_m[:, None] + moved_m[None, :]
        rho = np.exp(-delta / self.decorr_m)
        innov = self._symmetric_normal()
        self.values_db = rho * self.values_db + np.sqrt(1.0 - rho * rho) * innov
        np.fill_diagonal(self.values_db, 0.0)


def pairwise_rx_power_dbm(position_m: np.ndarray, road_length_m: float,
                          shadowing_db: np.ndarray, tx_power_dbm: float,
                          antenna_gain_dbi: float,
                          params: PathlossParams) -> np.ndarray:
    """(n, n) received power matrix [tx, rx]; diagonal forced to -inf."""
    d = np.abs(position_m[:, None] - position_m[None, :])
    d = np.minimum(d, road_length_m - d)
    d = np.maximum(d, MIN_LINK_DISTANCE_M)
    np.fill_diagonal(d, MIN_LINK_DISTANCE_M)  # keep path_loss_db happy
    p = received_power_dbm(tx_power_dbm, antenna_gain_dbi,
                           path_loss_db(d, params), shadowing_db)
    np.fill_diagonal(p, -np.inf)
    return p
