"""Resource selection: sensing-based SPS and dynamic modes, a collision-free
sorted baseline, SCI payloads, and sensing memory."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

SENSING_WINDOW_MS = 1000.0
AVAILABILITY_TARGET = 0.2   # exclusion loop stops once this share survives
RSRP_STEP_DB = 3.0
RSRP_CAP_DBM = 0.0
MAX_SPAN_TTIS = 32          # every copy must stay addressable from the first
COUNTER_MIN = 5
COUNTER_MAX = 15
MAX_FUTURE_POINTERS = 2     # compact SCI signals at most the next two copies


@dataclass(frozen=True)
class Resource:
    tti: int
    subch_start: int


@dataclass(frozen=True)
class SciPayload:
    """Control payload carried by every transmission.

    pointers lists every other copy of the packet (the extended part);
    future_pointers() is the compact reservation view legacy sensing sees.
    """

    source: int
    packet_id: int
    copy_index: int
    n_copies: int
    rri_ttis: int                    # 0 = no periodic reservation signaled
    pointers: Tuple[Resource, ...]

    def future_pointers(self, now_tti: int) -> Tuple[Resource, ...]:
        fut = sorted((r for r in self.pointers if r.tti > now_tti),
                     key=lambda r: (r.tti, r.subch_start))
        return tuple(fut[:MAX_FUTURE_POINTERS])


def build_sci(source: int, packet_id: int, copy_index: int,
              resources: Sequence[Resource], rri_ttis: int = 0) -> SciPayload:
    others = tuple(r for k, r in enumerate(resources) if k != copy_index)
    return SciPayload(source, packet_id, copy_index, len(resources),
                      rri_ttis, others)


def sci_overhead_bits(n_copies: int, n_dtti_max: int, n_subchannels: int,
                      bkc: bool = False) -> int:
    """Extra control bits versus the two-pointer compact format.

    Each pointer beyond the compact pair addresses (TTI offset, subchannel);
    the storage-assisted receiver additionally needs one flag per copy.
    """
    extra = max(0, n_copies - 2) * math.ceil(math.log2(n_dtti_max * n_subchannels))
    if bkc:
        extra += n_copies
    return extra


def rsrp_dbm(rx_power_dbm: float, n_prb: int) -> float:
    """Per-resource-element power of a decoded transmission."""
    return rx_power_dbm - 10.0 * math.log10(12.0 * n_prb)


# ---------------------------------------------------------------------------
# sensing


@dataclass(frozen=True)
class SensingEntry:
    heard_tti: int
    rsrp_dbm: float
    rri_ttis: int
    resources: Tuple[Resource, ...]   # heard resource plus signaled next copies


class SensingMemory:
    """Sliding window of decoded reservations, appended in TTI order.

    Entries are flattened into one row per signaled resource and kept in
    numpy column buffers so selection can scan the whole window vectorized.
    """

    __slots__ = ("window_ttis", "_heard", "_rtti", "_rsc", "_rsrp", "_rri",
                 "_start", "_n")

    def __init__(self, window_ttis: int, capacity: int = 256):
        self.window_ttis = window_ttis
        self._heard = np.empty(capacity, dtype=np.int64)
        self._rtti = np.empty(capacity, dtype=np.int64)
        self._rsc = np.empty(capacity, dtype=np.int64)
        self._rsrp = np.empty(capacity, dtype=np.float64)
        self._rri = np.empty(capacity, dtype=np.int64)
        self._start = 0
        self._n = 0

    def _compact(self, extra: int) -> None:
        live = self._n - self._start
        cap = self._heard.shape[0]
        if live + extra > cap:
            cap = max(2 * cap, live + extra)
        for name in ("_heard", "_rtti", "_rsc", "_rsrp", "_rri"):
            old = getattr(self, name)
            buf = np.empty(cap, dtype=old.dtype)
            buf[:live] = old[self._start:self._n]
            setattr(self, name, buf)
        self._start = 0
        self._n = live

    def add(self, entry: SensingEntry) -> None:
        rows = len(entry.resources)
        if self._n + rows > self._heard.shape[0]:
            self._compact(rows)
        i = self._n
        for r in entry.resources:
            self._heard[i] = entry.heard_tti
            self._rtti[i] = r.tti
            self._rsc[i] = r.subch_start
            self._rsrp[i] = entry.rsrp_dbm
            self._rri[i] = entry.rri_ttis
            i += 1
        self._n = i

    def evict(self, now_tti: int) -> None:
        horizon = now_tti - self.window_ttis
        s = self._start
        while s < self._n and self._heard[s] < horizon:
            s += 1
        self._start = s
        if s > 0 and s > self._heard.shape[0] // 2:
            self._compact(0)

    @property
    def n_rows(self) -> int:
        return self._n - self._start

    def live_rows(self):
        sl = slice(self._start, self._n)
        return (self._heard[sl], self._rtti[sl], self._rsc[sl],
                self._rsrp[sl], self._rri[sl])


def _candidate_rsrp(mem: SensingMemory, t_first: int, t_last: int,
                    placements: int, width: int) -> np.ndarray:
    """Max remembered RSRP per candidate, -inf where nothing was heard.

    Signaled resources land directly when inside the window; a nonzero RRI
    additionally projects every signaled resource forward period by period.
    """
    n_tti = t_last - t_first + 1
    grid = np.full(n_tti * placements, -np.inf)
    _, rtti, rsc, rsrp, rri = mem.live_rows()
    if rtti.size == 0:
        return grid
    direct = (rtti >= t_first) & (rtti <= t_last)
    hits_t = [rtti[direct]]
    hits_sc = [rsc[direct]]
    hits_v = [rsrp[direct]]
    per = rri > 0
    if per.any():
        rt, rr = rtti[per], rri[per]
        sc, vv = rsc[per], rsrp[per]
        k0 = np.maximum(1, -((rt - t_first) // rr))
        t = rt + k0 * rr
        while True:
            m = t <= t_last
            if not m.any():
                break
            t, rr, sc, vv = t[m], rr[m], sc[m], vv[m]
            hits_t.append(t)
            hits_sc.append(sc)
            hits_v.append(vv)
            t = t + rr
    ht = np.concatenate(hits_t)
    if ht.size == 0:
        return grid
    hsc = np.concatenate(hits_sc)
    hv = np.concatenate(hits_v)
    if placements == 1:
        np.maximum.at(grid, ht - t_first, hv)
        return grid
    lo = np.maximum(0, hsc - width + 1)
    hi = np.minimum(placements - 1, hsc + width - 1)
    for i in range(ht.size):
        base = (int(ht[i]) - t_first) * placements
        seg = grid[base + int(lo[i]):base + int(hi[i]) + 1]
        np.maximum(seg, hv[i], out=seg)
    return grid


def select_resources(mem: SensingMemory, t_first: int, t_last: int,
                     placements: int, width: int, n_copies: int,
                     rsrp_threshold_dbm: float, own_busy_ttis: Set[int],
                     rng: np.random.Generator) -> List[Resource]:
    """Sensing-based selection of n_copies resources in [t_first, t_last].

    Excludes candidates above the RSRP threshold, raising it 3 dB at a time
    until a fifth of the grid survives; tops up with the least-loud candidates
    if the cap is hit. Picks are uniform, one TTI each, max span 32 TTIs.
    """
    n_tti = t_last - t_first + 1
    grid = _candidate_rsrp(mem, t_first, t_last, placements, width)
    cand_tti = t_first + np.arange(n_tti * placements) // placements
    valid = ~np.isin(cand_tti, list(own_busy_ttis)) if own_busy_ttis else \
        np.ones(grid.size, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise RuntimeError("selection window fully blocked by own transmissions")
    quota = math.ceil(AVAILABILITY_TARGET * n_valid)

    thr = rsrp_threshold_dbm
    avail = valid & (grid < thr)
    while int(avail.sum()) < quota and thr < RSRP_CAP_DBM:
        thr = min(thr + RSRP_STEP_DB, RSRP_CAP_DBM)
        avail = valid & (grid < thr)
    short = quota - int(avail.sum())
    if short > 0:
        # threshold cap reached: admit the quietest excluded candidates,
        # randomizing order among equal RSRP so ties do not favor early TTIs
        rest = np.flatnonzero(valid & ~avail)
        rest = rng.permutation(rest)
        rest = rest[np.argsort(grid[rest], kind="stable")]
        avail[rest[:short]] = True

    picks: List[Resource] = []
    used_ttis: Set[int] = set()
    lo_tti, hi_tti = t_first, t_last
    pool = avail.copy()
    for _ in range(n_copies):
        ok = pool & (cand_tti >= lo_tti) & (cand_tti <= hi_tti)
        if used_ttis:
            ok &= ~np.isin(cand_tti, list(used_ttis))
        idxs = np.flatnonzero(ok)
        if idxs.size == 0:
            # exhausted the excluded-filtered pool: fall back to the quietest
            # candidate that still honors span and half-duplex constraints
            ok = valid & (cand_tti >= lo_tti) & (cand_tti <= hi_tti)
            if used_ttis:
                ok &= ~np.isin(cand_tti, list(used_ttis))
            idxs = np.flatnonzero(ok)
            if idxs.size == 0:
                raise RuntimeError("no schedulable resource left in window")
            idxs = rng.permutation(idxs)
            choice = int(idxs[np.argsort(grid[idxs], kind="stable")[0]])
        else:
            choice = int(rng.choice(idxs))
        pool[choice] = False
        tti = int(cand_tti[choice])
        picks.append(Resource(tti, int(choice % placements)))
        used_ttis.add(tti)
        span_min = min(used_ttis)
        span_max = max(used_ttis)
        lo_tti = max(t_first, span_max - MAX_SPAN_TTIS)
        hi_tti = min(t_last, span_min + MAX_SPAN_TTIS)
    picks.sort(key=lambda r: (r.tti, r.subch_start))
    return picks


def draw_reselection_counter(rng: np.random.Generator) -> int:
    return int(rng.integers(COUNTER_MIN, COUNTER_MAX + 1))


def keep_grant(rng: np.random.Generator, keep_probability: float) -> bool:
    """Counter expiry: keep the same grant with probability keep_probability."""
    return bool(rng.random() < keep_probability)


# ---------------------------------------------------------------------------
# sorted baseline


def rank_by_position(position_m: np.ndarray) -> np.ndarray:
    """Vehicle indices ordered around the ring, index breaking exact ties."""
    n = position_m.shape[0]
    return np.lexsort((np.arange(n), position_m))


def sorted_allocation(ranked_ids: Sequence[int], ttis_per_period: int,
                      placements: int, n_copies: int) -> Dict[int, List[Resource]]:
    """Deterministic rank-based grid for one allocation period.

    Resources are split into contiguous groups of n_copies; the copies of one
    vehicle land in adjacent TTIs so each stays addressable from the first.
    With more vehicles than groups the assignment wraps and overloads share.
    """
    total = ttis_per_period * placements
    groups = total // n_copies
    if groups == 0:
        raise ValueError("period too small for the requested copy count")
    out: Dict[int, List[Resource]] = {}
    for rank, vid in enumerate(ranked_ids):
        g = rank % groups
        res = [Resource((g * n_copies + k) % ttis_per_period,
                        (g * n_copies + k) // ttis_per_period)
               for k in range(n_copies)]
        out[int(vid)] = res
    return out
