"""Per-TTI reception records and SINR/decode primitives.

The jitted kernel in _kernels owns the hot loop; the functions here mirror it
with the same operation order so tests can compare results exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._kernels import MODE_FRC, MODE_LEGACY, MODE_SIC


@dataclass
class DecodeParams:
    noise_mw_per_subch: float
    kn_linear: float
    gamma_bar_linear: float
    max_sic_iterations: int


class TtiRecord:
    """Contributions arriving at one receiver in one TTI, strongest first.

    Ties in power break on transmitter id so record layout is reproducible.
    xi marks cancelled contributions and persists for later reprocessing.
    """

    __slots__ = ("tti", "n", "pow_mw", "tx_ids", "packet_ids",
                 "sc_start", "sc_cnt", "xi", "scis")

    def __init__(self, tti: int, pow_mw, tx_ids, packet_ids, sc_start, sc_cnt,
                 scis: Optional[Sequence] = None):
        pow_mw = np.asarray(pow_mw, dtype=np.float64)
        tx_ids = np.asarray(tx_ids, dtype=np.int64)
        order = np.lexsort((tx_ids, -pow_mw))
        self.tti = tti
        self.n = int(pow_mw.shape[0])
        self.pow_mw = pow_mw[order]
        self.tx_ids = tx_ids[order]
        self.packet_ids = np.asarray(packet_ids, dtype=np.int64)[order]
        self.sc_start = np.asarray(sc_start, dtype=np.int64)[order]
        self.sc_cnt = np.asarray(sc_cnt, dtype=np.int64)[order]
        self.xi = np.zeros(self.n, dtype=np.uint8)
        self.scis = None if scis is None else [scis[i] for i in order]

    def index_of(self, tx_id: int) -> int:
        """Position of a transmitter's contribution, -1 if absent."""
        for i in range(self.n):
            if self.tx_ids[i] == tx_id:
                return i
        return -1


def sinr(rec: TtiRecord, target: int, params: DecodeParams) -> float:
    """Post-cancellation SINR of one contribution, honoring rec.xi.

    Cancelled interferers stay in the sum scaled by the residual factor, so
    the uncancelled case is the plain strongest-over-rest ratio.
    """
    denom = params.noise_mw_per_subch * rec.sc_cnt[target]
    t_lo = rec.sc_start[target]
    t_hi = t_lo + rec.sc_cnt[target]
    for j in range(rec.n):
        if j == target:
            continue
        lo = rec.sc_start[j] if rec.sc_start[j] > t_lo else t_lo
        hi = rec.sc_start[j] + rec.sc_cnt[j]
        if t_hi < hi:
            hi = t_hi
        if hi <= lo:
            continue
        w = params.kn_linear if rec.xi[j] == 1 else 1.0
        denom += w * rec.pow_mw[j] * ((hi - lo) / rec.sc_cnt[j])
    return float(rec.pow_mw[target] / denom)


def sinr_strongest(rec: TtiRecord, params: DecodeParams) -> Optional[float]:
    """SINR of the strongest not-yet-cancelled contribution; None if all gone."""
    for i in range(rec.n):
        if rec.xi[i] == 0:
            return sinr(rec, i, params)
    return None


def decode(gamma: float, prev_ok: bool, params: DecodeParams) -> bool:
    """Decode chain step: succeeds only if every earlier step did."""
    return bool(prev_ok and gamma >= params.gamma_bar_linear)


def mark_cancelled(rec: TtiRecord, target: int) -> None:
    rec.xi[target] = 1


def run_decode_pass(rec: TtiRecord, known: np.ndarray, params: DecodeParams,
                    mode: int) -> np.ndarray:
    """Run one kernel pass on the record; returns decoded indices in order."""
    if rec.n == 0:
        return np.empty(0, dtype=np.int64)
    out = np.empty(rec.n, dtype=np.int64)
    ndec = _kernels.decode_pass(rec.pow_mw, rec.sc_start, rec.sc_cnt, rec.xi,
                                known, params.noise_mw_per_subch,
                                params.kn_linear, params.gamma_bar_linear,
                                params.max_sic_iterations, mode, out)
    return out[:ndec]


__all__ = ["DecodeParams", "TtiRecord", "sinr", "sinr_strongest", "decode",
           "mark_cancelled", "run_decode_pass",
           "MODE_LEGACY", "MODE_SIC", "MODE_FRC"]
