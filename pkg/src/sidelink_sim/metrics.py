"""Congestion, reliability, latency, and awareness-gap metrics."""

from __future__ import annotations

import bisect
import math
import warnings
from typing import Dict, List, Sequence, Tuple

import numpy as np

CBR_WINDOW_MS = 100.0
PRR_MIN_ATTEMPTS = 100
RANGE_PRR_TARGET = 0.95
WBSP_EVENT_RANGE_M = 150.0   # receptions logged out to here (hysteresis)
WBSP_ELIGIBLE_RANGE_M = 100.0  # pair must start the window this close
WBSP_WINDOWS_MS = tuple(range(100, 1001, 100))


class CbrAccumulator:
    """Per-vehicle busy-subchannel counts folded into 100 ms medians."""

    def __init__(self, n_vehicles: int, n_subchannels: int, ttis_per_window: int):
        self.n_vehicles = n_vehicles
        self.denom = float(n_subchannels * ttis_per_window)
        self._busy = np.zeros(n_vehicles, dtype=np.int64)
        self.rows: List[Tuple[int, float]] = []

    def add_tti(self, busy_subch_counts: np.ndarray) -> None:
        self._busy += busy_subch_counts

    def close_window(self, start_ms: float, warmup_ms: float) -> None:
        if start_ms >= warmup_ms:
            cbr = float(np.median(self._busy / self.denom))
            self.rows.append((int(round(start_ms)), cbr))
        self._busy[:] = 0


class PacketLog:
    """Reliability bookkeeping: one distance bin row per (packet, receiver)."""

    def __init__(self, n_vehicles: int, bin_m: float, max_distance_m: float):
        self.n_vehicles = n_vehicles
        self.bin_m = bin_m
        self.n_bins = int(math.ceil(max_distance_m / bin_m)) + 1
        self._bins: Dict[int, np.ndarray] = {}
        self._src: Dict[int, int] = {}
        self._success: Dict[int, np.ndarray] = {}

    def on_generation(self, packet_id: int, src: int,
                      distances_m: np.ndarray) -> None:
        b = np.minimum((distances_m / self.bin_m).astype(np.int64),
                       self.n_bins - 1).astype(np.uint8)
        self._bins[packet_id] = b
        self._src[packet_id] = src
        self._success[packet_id] = np.zeros(self.n_vehicles, dtype=bool)

    def on_delivery(self, packet_id: int, rx: int) -> None:
        hit = self._success.get(packet_id)
        if hit is not None:
            hit[rx] = True

    def tracks(self, packet_id: int) -> bool:
        return packet_id in self._src

    def totals(self) -> Tuple[np.ndarray, np.ndarray]:
        """(successes, attempts) per distance bin over every tracked packet."""
        succ = np.zeros(self.n_bins, dtype=np.int64)
        att = np.zeros(self.n_bins, dtype=np.int64)
        mask = np.ones(self.n_vehicles, dtype=bool)
        for pkt, bins in self._bins.items():
            mask[:] = True
            mask[self._src[pkt]] = False
            np.add.at(att, bins[mask], 1)
            hit = mask & self._success[pkt]
            np.add.at(succ, bins[hit], 1)
        return succ, att

    def prr_rows(self) -> List[Tuple[float, int, int, float]]:
        succ, att = self.totals()
        rows = []
        for b in range(self.n_bins):
            if att[b] == 0:
                continue
            rows.append(((b + 0.5) * self.bin_m, int(succ[b]), int(att[b]),
                         succ[b] / att[b]))
        return rows


def compute_range(successes: np.ndarray, attempts: np.ndarray, bin_m: float,
                  min_attempts: int = PRR_MIN_ATTEMPTS,
                  target: float = RANGE_PRR_TARGET) -> float:
    """Largest distance out to which every well-sampled bin clears the target.

    Walks bins outward; a bin below the target ends the walk, a thin bin is
    skipped (with a warning) without extending the range.
    """
    range_m = 0.0
    for b in range(len(attempts)):
        if attempts[b] < min_attempts:
            if attempts[b] > 0:
                warnings.warn(f"distance bin {b}: only {int(attempts[b])} "
                              f"attempts, skipped in range computation")
            continue
        if successes[b] / attempts[b] > target:
            range_m = (b + 1) * bin_m
        else:
            break
    return range_m


def ccdf_rows(samples_ms: Sequence[float]) -> List[Tuple[int, float]]:
    """Empirical CCDF P(X > g) on an integer-millisecond grid."""
    if len(samples_ms) == 0:
        return []
    arr = np.sort(np.asarray(samples_ms, dtype=np.float64))
    top = int(math.ceil(arr[-1]))
    grid = np.arange(0, top + 1)
    above = arr.size - np.searchsorted(arr, grid, side="right")
    return [(int(g), float(a) / arr.size) for g, a in zip(grid, above)]


class PairEventLog:
    """Successful-reception timestamps per unordered vehicle pair."""

    def __init__(self):
        self.events: Dict[Tuple[int, int], List[float]] = {}

    def log(self, a: int, b: int, t_ms: float) -> None:
        key = (a, b) if a < b else (b, a)
        self.events.setdefault(key, []).append(t_ms)


def _eligible_pairs(position_m: np.ndarray, road_length_m: float,
                    limit_m: float) -> set:
    d = np.abs(position_m[:, None] - position_m[None, :])
    d = np.minimum(d, road_length_m - d)
    iu = np.triu_indices(position_m.shape[0], k=1)
    close = d[iu] <= limit_m
    return set(zip(iu[0][close].tolist(), iu[1][close].tolist()))


def wbsp_table(events: PairEventLog, snapshots: Dict[int, np.ndarray],
               road_length_m: float, start_ms: float, end_ms: float,
               windows_ms: Sequence[int] = WBSP_WINDOWS_MS
               ) -> Tuple[List[Tuple[int, float]], List[float]]:
    """Blind-window probability per window length, plus raw gap samples.

    A pair is eligible for a window if it sits within 100 m at the window
    start; the window is blind if no reception occurred inside it. Gap samples
    are the spacings between consecutive receptions of a pair over stretches
    where every position snapshot kept the pair eligible.
    """
    elig: Dict[int, set] = {
        t: _eligible_pairs(pos, road_length_m, WBSP_ELIGIBLE_RANGE_M)
        for t, pos in snapshots.items()}
    ev_sorted = {k: np.asarray(sorted(v)) for k, v in events.events.items()}

    rows: List[Tuple[int, float]] = []
    for w in windows_ms:
        first = int(math.ceil(start_ms / w)) * w
        n_windows = 0
        n_blind = 0
        s = first
        while s + w <= end_ms:
            pairs = elig.get(s)
            if pairs:
                for pair in pairs:
                    n_windows += 1
                    times = ev_sorted.get(pair)
                    if times is None:
                        n_blind += 1
                        continue
                    lo = np.searchsorted(times, s, side="left")
                    if lo >= times.size or times[lo] >= s + w:
                        n_blind += 1
            s += w
        rows.append((w, n_blind / n_windows if n_windows else 0.0))

    snap_times = sorted(elig.keys())
    gaps: List[float] = []
    for pair, times in ev_sorted.items():
        for t1, t2 in zip(times[:-1], times[1:]):
            i0 = bisect.bisect_left(snap_times, t1)
            i1 = bisect.bisect_right(snap_times, t2)
            covered = snap_times[i0:i1]
            if covered and all(pair in elig[t] for t in covered):
                gaps.append(float(t2 - t1))
    return rows, gaps
