"""Simulation engine: the TTI loop tying mobility, channel, MAC, and metrics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels
from .allocation import (Resource, SciPayload, SensingEntry, SensingMemory,
                         SENSING_WINDOW_MS, build_sci, draw_reselection_counter,
                         keep_grant, rank_by_position, rsrp_dbm,
                         select_resources, sorted_allocation)
from .channel import ShadowingField, noise_power_dbm, pairwise_rx_power_dbm
from .config_io import (AllocationMode, ReceiverMode, RunOutputs, SimConfig,
                        TrafficMode)
from .metrics import (CBR_WINDOW_MS, WBSP_EVENT_RANGE_M, CbrAccumulator,
                      PacketLog, PairEventLog, ccdf_rows, compute_range,
                      wbsp_table)
from .phy import DecodeParams, TtiRecord
from .receiver import RxState, process_tti
from .scenario import (advance_mobility, initial_phase_ms,
                       next_packet_interval_ms, ring_distance, spawn_fleet)


@dataclass
class _Tx:
    src: int
    packet_id: int
    copy_index: int
    subch_start: int
    sci: SciPayload


@dataclass
class _Mac:
    next_gen_ms: float = 0.0
    grant: Optional[List[Resource]] = None   # next occasion, absolute TTIs
    counter: int = 0
    future_tx: List[int] = field(default_factory=list)
    queued_pkt: int = -1                     # sorted mode, newest undispatched


class Simulation:
    """One seeded run; call run() once."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.tti_ms = cfg.tti_ms
        self.total_ttis = int(round(cfg.sim_duration_s * 1000.0 / self.tti_ms))
        self.window_ttis = int(round(CBR_WINDOW_MS / self.tti_ms))
        self.rri_ttis = int(round(100.0 / self.tti_ms))
        self.t1_ttis = max(1, int(math.ceil(cfg.t1_ms / self.tti_ms)))
        self.t2_ttis = int(math.ceil(cfg.t2_ms / self.tti_ms))
        self.width = cfg.subch_used
        self.placements = cfg.placements_per_tti
        self.full_band = self.width == cfg.n_subchannels

        self.noise_total_mw = 10.0 ** (noise_power_dbm(
            cfg.bandwidth_mhz, cfg.noise_figure_db) / 10.0)
        self.noise_sc_mw = self.noise_total_mw / cfg.n_subchannels
        self.params = DecodeParams(
            noise_mw_per_subch=self.noise_sc_mw,
            kn_linear=10.0 ** (cfg.kn_db / 10.0),
            gamma_bar_linear=10.0 ** (cfg.mcs_sinr_threshold_db / 10.0),
            max_sic_iterations=cfg.max_sic_iterations)
        self.cbr_thr_mw = 10.0 ** (cfg.cbr_threshold_dbm / 10.0)

        # independent streams so MAC draws never depend on receiver behavior
        n = cfg.n_vehicles
        ss = np.random.SeedSequence(cfg.rng_seed)
        children = ss.spawn(2 + 2 * n)
        self.rng_scenario = np.random.default_rng(children[0])
        self.rng_shadow = np.random.default_rng(children[1])
        self.rng_traffic = [np.random.default_rng(c) for c in children[2:2 + n]]
        self.rng_mac = [np.random.default_rng(c) for c in children[2 + n:]]

        self.fleet = spawn_fleet(cfg, self.rng_scenario)
        self.shadow = ShadowingField(n, cfg.shadowing_std_db,
                                     cfg.shadowing_decorr_m, self.rng_shadow)
        self.p_dbm = np.full((n, n), -np.inf)
        self.p_mw = np.zeros((n, n))

        self.macs = [_Mac() for _ in range(n)]
        for v in range(n):
            self.macs[v].next_gen_ms = initial_phase_ms(
                cfg.traffic_mode, self.rng_traffic[v])
        self.sensing = [SensingMemory(int(round(SENSING_WINDOW_MS / self.tti_ms)))
                        for _ in range(n)]
        self.rx = [RxState(v, cfg.receiver_mode, cfg.bkc_window_ttis,
                           trace_enabled=(v == cfg.debug_trace_rx))
                   for v in range(n)]

        self.calendar: Dict[int, List[_Tx]] = {}
        self.packets: Dict[int, Tuple[int, float]] = {}
        self.next_pkt_id = 0
        end_ms = cfg.sim_duration_s * 1000.0
        self.end_ms = end_ms
        self.warmup_ms = cfg.warmup_s * 1000.0
        if cfg.allocation_mode is AllocationMode.SORTED:
            self.gen_stop_ms = end_ms - 2 * 100.0  # queued packets still dispatch
        else:
            self.gen_stop_ms = end_ms - cfg.t2_ms

        self.cbr = CbrAccumulator(n, cfg.n_subchannels, self.window_ttis)
        self.pktlog = PacketLog(n, cfg.prr_bin_m, cfg.road_length_m / 2.0)
        self.events = PairEventLog()
        self.snapshots: Dict[int, np.ndarray] = {}
        self.eed_samples: List[float] = []
        self._digest = hashlib.sha256()
        self.n_copies = cfg.n_retx + 1

    # -- MAC ---------------------------------------------------------------

    def _assign(self, v: int, pkt: int, resources: List[Resource],
                rri_signaled: int) -> None:
        res = tuple(resources)
        mac = self.macs[v]
        for k, r in enumerate(res):
            sci = build_sci(v, pkt, k, res, rri_signaled)
            self.calendar.setdefault(r.tti, []).append(
                _Tx(v, pkt, k, r.subch_start, sci))
            mac.future_tx.append(r.tti)

    def _select(self, v: int, t: int) -> List[Resource]:
        mac = self.macs[v]
        busy = {x for x in mac.future_tx if x > t}
        return select_resources(
            self.sensing[v], t + self.t1_ttis, t + self.t2_ttis - 1,
            self.placements, self.width, self.n_copies,
            self.cfg.rsrp_threshold_dbm, busy, self.rng_mac[v])

    def _handle_generation(self, v: int, gen_ms: float, t: int) -> None:
        pkt = self.next_pkt_id
        self.next_pkt_id += 1
        self.packets[pkt] = (v, gen_ms)
        if gen_ms >= self.warmup_ms:
            dist = ring_distance(self.fleet.position_m,
                                 self.fleet.position_m[v],
                                 self.cfg.road_length_m)
            self.pktlog.on_generation(pkt, v, dist)

        mac = self.macs[v]
        mode = self.cfg.allocation_mode
        if mode is AllocationMode.SORTED:
            mac.queued_pkt = pkt   # newest packet wins the next period
            return
        mac.future_tx = [x for x in mac.future_tx if x > t]
        if mode is AllocationMode.SB_DS:
            self._assign(v, pkt, self._select(v, t), 0)
            return
        # sensing-based SPS
        rng = self.rng_mac[v]
        if mac.grant is None:
            mac.grant = self._select(v, t)
            mac.counter = draw_reselection_counter(rng)
        elif mac.counter == 0:
            if keep_grant(rng, self.cfg.keep_probability):
                mac.counter = draw_reselection_counter(rng)
            else:
                mac.grant = self._select(v, t)
                mac.counter = draw_reselection_counter(rng)
        while mac.grant[0].tti <= t:
            mac.grant = [Resource(r.tti + self.rri_ttis, r.subch_start)
                         for r in mac.grant]
        mac.counter -= 1
        rri_signaled = self.rri_ttis if mac.counter >= 1 else 0
        self._assign(v, pkt, mac.grant, rri_signaled)
        mac.grant = [Resource(r.tti + self.rri_ttis, r.subch_start)
                     for r in mac.grant]

    def _dispatch_sorted_period(self, t: int) -> None:
        ranked = rank_by_position(self.fleet.position_m)
        amap = sorted_allocation(ranked, self.rri_ttis, self.placements,
                                 self.n_copies)
        for v, mac in enumerate(self.macs):
            if mac.queued_pkt < 0:
                continue
            res = [Resource(t + r.tti, r.subch_start) for r in amap[v]]
            self._assign(v, mac.queued_pkt, res, 0)
            mac.queued_pkt = -1

    # -- PHY planes ----------------------------------------------------------

    def _cbr_tti(self, txs: List[_Tx], p_slice: np.ndarray,
                 is_tx: np.ndarray) -> None:
        n_subch = self.cfg.n_subchannels
        if self.full_band:
            per_sc = p_slice.sum(axis=0) / n_subch + self.noise_sc_mw
            busy = np.where(per_sc > self.cbr_thr_mw, n_subch, 0)
        else:
            n = self.fleet.n
            per_sc = np.full((n_subch, n), self.noise_sc_mw)
            for i, tx in enumerate(txs):
                sl = slice(tx.subch_start, tx.subch_start + self.width)
                per_sc[sl] += p_slice[i] / self.width
            busy = (per_sc > self.cbr_thr_mw).sum(axis=0)
        busy = busy.astype(np.int64)
        busy[is_tx] = n_subch   # half duplex: own slot is busy by definition
        self.cbr.add_tti(busy)

    def _sensing_tti(self, t: int, txs: List[_Tx], p_slice: np.ndarray,
                     best_idx: np.ndarray, best_mw: np.ndarray,
                     tot_mw: np.ndarray, is_tx: np.ndarray) -> None:
        """Feed decoded reservations to sensing memories (capture rule)."""
        if self.full_band:
            sinr = best_mw / (self.noise_total_mw + (tot_mw - best_mw))
            ok = (~is_tx) & (sinr >= self.params.gamma_bar_linear)
            heard = np.flatnonzero(ok)
            pairs = ((rx, int(best_idx[rx])) for rx in heard)
        else:
            found = []
            band_noise = self.noise_sc_mw * self.width
            for rx in np.flatnonzero(~is_tx):
                for i, tx in enumerate(txs):
                    interf = 0.0
                    for j, other in enumerate(txs):
                        if j == i:
                            continue
                        lo = max(tx.subch_start, other.subch_start)
                        hi = min(tx.subch_start + self.width,
                                 other.subch_start + self.width)
                        if hi > lo:
                            interf += p_slice[j, rx] * (hi - lo) / self.width
                    if p_slice[i, rx] / (band_noise + interf) >= \
                            self.params.gamma_bar_linear:
                        found.append((rx, i))
            pairs = iter(found)
        n_prb = self.width * self.cfg.subchannel_prbs
        for rx, i in pairs:
            tx = txs[i]
            entry = SensingEntry(
                heard_tti=t,
                rsrp_dbm=rsrp_dbm(float(self.p_dbm[tx.src, rx]), n_prb),
                rri_ttis=tx.sci.rri_ttis,
                resources=(Resource(t, tx.subch_start),)
                + tx.sci.future_pointers(t))
            mem = self.sensing[rx]
            mem.add(entry)
            mem.evict(t)

    def _receive_tti(self, t: int, txs: List[_Tx], p_slice: np.ndarray,
                     best_mw: np.ndarray, tot_mw: np.ndarray,
                     is_tx: np.ndarray) -> None:
        if self.full_band:
            # even cancelling everything down to the residual floor cannot
            # save a receiver below threshold, so skip it outright
            floor = self.noise_total_mw + self.params.kn_linear * (tot_mw - best_mw)
            active = (~is_tx) & (best_mw / floor >= self.params.gamma_bar_linear)
        else:
            active = ~is_tx
        tx_ids = np.array([tx.src for tx in txs], dtype=np.int64)
        pkt_ids = np.array([tx.packet_id for tx in txs], dtype=np.int64)
        sc_start = np.array([tx.subch_start for tx in txs], dtype=np.int64)
        sc_cnt = np.full(len(txs), self.width, dtype=np.int64)
        scis = [tx.sci for tx in txs]
        wall_end_ms = (t + 1) * self.tti_ms
        for rx_v in np.flatnonzero(active):
            rec = TtiRecord(t, p_slice[:, rx_v], tx_ids, pkt_ids, sc_start,
                            sc_cnt, scis)
            for pkt, src in process_tti(self.rx[rx_v], rec, self.params):
                self._on_delivery(int(rx_v), pkt, src, wall_end_ms)

    def _on_delivery(self, rx_v: int, pkt: int, src: int,
                     wall_end_ms: float) -> None:
        gen_ms = self.packets[pkt][1]
        if self.pktlog.tracks(pkt):
            self.pktlog.on_delivery(pkt, rx_v)
            self.eed_samples.append(wall_end_ms - gen_ms)
        if wall_end_ms >= self.warmup_ms:
            d = ring_distance(self.fleet.position_m[src],
                              self.fleet.position_m[rx_v],
                              self.cfg.road_length_m)
            if d <= WBSP_EVENT_RANGE_M:
                self.events.log(src, rx_v, wall_end_ms)

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunOutputs:
        _kernels.warmup()
        cfg = self.cfg
        tti_s = self.tti_ms / 1000.0
        moved_per_window = None
        for t in range(self.total_ttis):
            now_ms = t * self.tti_ms
            advance_mobility(self.fleet, tti_s)
            if t % self.window_ttis == 0:
                if t > 0:
                    if moved_per_window is None:
                        moved_per_window = self.fleet.speed_ms * \
                            (self.window_ttis * tti_s)
                    self.shadow.step(moved_per_window)
                    self.cbr.close_window(now_ms - CBR_WINDOW_MS, self.warmup_ms)
                self.p_dbm = pairwise_rx_power_dbm(
                    self.fleet.position_m, cfg.road_length_m,
                    self.shadow.values_db, cfg.tx_power_dbm,
                    cfg.antenna_gain_dbi, cfg.pathloss)
                with np.errstate(invalid="ignore"):
                    self.p_mw = 10.0 ** (self.p_dbm / 10.0)
                self.snapshots[int(round(now_ms))] = self.fleet.position_m.copy()
                if cfg.allocation_mode is AllocationMode.SORTED and \
                        t % self.rri_ttis == 0:
                    self._dispatch_sorted_period(t)
            for v in range(self.fleet.n):
                mac = self.macs[v]
                while mac.next_gen_ms < (t + 1) * self.tti_ms and \
                        mac.next_gen_ms <= self.gen_stop_ms:
                    gen_ms = mac.next_gen_ms
                    mac.next_gen_ms = gen_ms + next_packet_interval_ms(
                        cfg.traffic_mode, self.rng_traffic[v])
                    self._handle_generation(v, gen_ms, t)
            txs = self.calendar.pop(t, None)
            if not txs:
                continue
            txs.sort(key=lambda x: (x.src, x.subch_start))
            for tx in txs:
                self._digest.update(
                    f"{t},{tx.src},{tx.packet_id},{tx.copy_index},"
                    f"{tx.subch_start};".encode())
            idx = np.array([tx.src for tx in txs], dtype=np.int64)
            p_slice = self.p_mw[idx, :]
            is_tx = np.zeros(self.fleet.n, dtype=bool)
            is_tx[idx] = True
            tot_mw = p_slice.sum(axis=0)
            best_idx = p_slice.argmax(axis=0)
            best_mw = p_slice[best_idx, np.arange(self.fleet.n)]
            self._cbr_tti(txs, p_slice, is_tx)
            if cfg.allocation_mode is not AllocationMode.SORTED:
                self._sensing_tti(t, txs, p_slice, best_idx, best_mw, tot_mw,
                                  is_tx)
            self._receive_tti(t, txs, p_slice, best_mw, tot_mw, is_tx)
        if self.total_ttis % self.window_ttis == 0 and self.total_ttis > 0:
            self.cbr.close_window(self.end_ms - CBR_WINDOW_MS, self.warmup_ms)
        return self._finalize()

    def _finalize(self) -> RunOutputs:
        cfg = self.cfg
        succ, att = self.pktlog.totals()
        wbsp_rows, gaps = wbsp_table(self.events, self.snapshots,
                                     cfg.road_length_m, self.warmup_ms,
                                     self.end_ms)
        out = RunOutputs(
            receiver_mode=cfg.receiver_mode.value,
            traffic_mode=cfg.traffic_mode.value,
            allocation_mode=cfg.allocation_mode.value,
            n_retx=cfg.n_retx,
            density_veh_per_km=cfg.density_veh_per_km,
            cbr_windows=self.cbr.rows,
            prr_bins=self.pktlog.prr_rows(),
            wbsp_table=wbsp_rows,
            eed_ccdf=ccdf_rows(self.eed_samples),
            range_m=compute_range(succ, att, cfg.prr_bin_m),
            eed_samples_ms=self.eed_samples,
            wbsp_samples_ms=gaps,
            stats={
                "schedule_digest": self._digest.hexdigest(),
                "bkc_misses": int(sum(r.bkc_misses for r in self.rx)),
                "n_packets": self.next_pkt_id,
                "n_tracked": len(self.pktlog._src),
                "numba": _kernels.HAVE_NUMBA,
            })
        if 0 <= cfg.debug_trace_rx < self.fleet.n:
            out.stats["trace"] = self.rx[cfg.debug_trace_rx].trace
        return out


def run_simulation(cfg: SimConfig) -> RunOutputs:
    """Run one seeded simulation and return its metric bundle."""
    return Simulation(cfg).run()
