"""Receiver state machines built on the decode kernel.

Four flavors share one pass routine: plain capture, successive cancellation,
pre-cancellation of copies announced by earlier decodes, and recovery of past
TTIs kept in a short signal store. A pass always runs to completion before its
control consequences are applied; recoveries triggered by those consequences
are drained depth-first within the same tick.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .allocation import Resource, SciPayload
from .config_io import ReceiverMode
from .phy import MODE_FRC, MODE_LEGACY, MODE_SIC, DecodeParams, TtiRecord, run_decode_pass

_MODE_FLAGS = {
    ReceiverMode.LEGACY: (MODE_LEGACY, False, False),
    ReceiverMode.SIC: (MODE_SIC, False, False),
    ReceiverMode.SIC_FRC: (MODE_FRC, True, False),
    ReceiverMode.SIC_FRC_BKC: (MODE_FRC, True, True),
}


@dataclass(frozen=True)
class TraceEvent:
    tti: int
    event: str   # decode | frc_cancel | bkc_cancel | bkc_reprocess
    tx: int
    packet_id: int


@dataclass
class SkippedTti:
    """Unsorted stand-in for a stored TTI nothing could be decoded from yet.

    Building and sorting a full record for every stored TTI is wasted work
    when most are never revisited; cancellations that arrive before a revisit
    are queued in marks and applied on materialization.
    """

    tti: int
    pow_mw: np.ndarray
    tx_ids: np.ndarray
    packet_ids: np.ndarray
    sc_start: np.ndarray
    sc_cnt: np.ndarray
    scis: list
    marks: List[Tuple[int, int]]   # (subch_start, packet_id)

    def materialize(self) -> TtiRecord:
        rec = TtiRecord(self.tti, self.pow_mw, self.tx_ids, self.packet_ids,
                        self.sc_start, self.sc_cnt, self.scis)
        for sc, pkt in self.marks:
            for i in range(rec.n):
                if rec.sc_start[i] == sc and rec.packet_ids[i] == pkt:
                    rec.xi[i] = 1
                    break
        return rec


class RxState:
    """Everything one receiving vehicle remembers across TTIs."""

    __slots__ = ("vehicle_id", "receiver_mode", "bkc_window_ttis", "delivered",
                 "frame_storage", "signal_storage", "bkc_misses", "trace",
                 "trace_enabled")

    def __init__(self, vehicle_id: int, receiver_mode: ReceiverMode,
                 bkc_window_ttis: int = 32, trace_enabled: bool = False):
        self.vehicle_id = vehicle_id
        self.receiver_mode = receiver_mode
        self.bkc_window_ttis = bkc_window_ttis
        self.delivered: Set[int] = set()
        # tti -> {subch_start: packet_id}, filled from decoded announcements
        self.frame_storage: Dict[int, Dict[int, int]] = {}
        # tti -> TtiRecord with cancellation state, insertion-ordered by tti
        self.signal_storage: "OrderedDict[int, TtiRecord]" = OrderedDict()
        self.bkc_misses = 0
        self.trace: List[TraceEvent] = []
        self.trace_enabled = trace_enabled

    def _emit(self, tti: int, event: str, tx: int, packet_id: int) -> None:
        if self.trace_enabled:
            self.trace.append(TraceEvent(tti, event, tx, packet_id))


def register_forward_copies(state: RxState, sci: SciPayload, now_tti: int) -> None:
    """Remember announced future copies so they can be pre-cancelled on arrival."""
    for r in sci.pointers:
        if r.tti > now_tti:
            state.frame_storage.setdefault(r.tti, {})[r.subch_start] = sci.packet_id


def _store_record(state: RxState, entry) -> None:
    ss = state.signal_storage
    ss[entry.tti] = entry
    horizon = entry.tti - state.bkc_window_ttis
    while ss:
        oldest = next(iter(ss))
        if oldest >= horizon:
            break
        del ss[oldest]


def store_skipped_record(state: RxState, tti: int, pow_mw, tx_ids, packet_ids,
                         sc_start, sc_cnt, scis) -> None:
    """Keep a TTI for possible later recovery without processing it now."""
    _store_record(state, SkippedTti(tti, pow_mw, tx_ids, packet_ids, sc_start,
                                    sc_cnt, scis, []))


def _mark_past_copy(state: RxState, ptr: Resource, packet_id: int,
                    wall_tti: int, stack: List[int]) -> None:
    """Cancel a stored copy a fresh decode just revealed; queue its TTI."""
    rec = state.signal_storage.get(ptr.tti)
    if rec is None:
        state.bkc_misses += 1   # evicted, skipped as hopeless, or own tx TTI
        return
    if isinstance(rec, SkippedTti):
        key = (ptr.subch_start, packet_id)
        for i in range(len(rec.packet_ids)):
            if rec.sc_start[i] == ptr.subch_start and \
                    rec.packet_ids[i] == packet_id:
                if key not in rec.marks:
                    rec.marks.append(key)
                    state._emit(wall_tti, "bkc_cancel", int(rec.tx_ids[i]),
                                packet_id)
                    stack.append(ptr.tti)
                return
        state.bkc_misses += 1
        return
    for i in range(rec.n):
        if rec.sc_start[i] == ptr.subch_start and rec.packet_ids[i] == packet_id:
            if rec.xi[i] == 0:
                rec.xi[i] = 1
                state._emit(wall_tti, "bkc_cancel", int(rec.tx_ids[i]), packet_id)
                stack.append(ptr.tti)
            return
    state.bkc_misses += 1


def _pass_and_consequences(state: RxState, rec: TtiRecord, wall_tti: int,
                           params: DecodeParams, kernel_mode: int, frc: bool,
                           bkc: bool, deliveries: List[Tuple[int, int]],
                           stack: List[int]) -> None:
    known = np.zeros(rec.n, dtype=np.uint8)
    for i in range(rec.n):
        if int(rec.packet_ids[i]) in state.delivered:
            known[i] = 1
            if frc and rec.xi[i] == 0:
                state._emit(wall_tti, "frc_cancel", int(rec.tx_ids[i]),
                            int(rec.packet_ids[i]))
    decoded = run_decode_pass(rec, known, params, kernel_mode)
    for idx in decoded:
        pkt = int(rec.packet_ids[idx])
        tx = int(rec.tx_ids[idx])
        state._emit(wall_tti, "decode", tx, pkt)
        if pkt not in state.delivered:
            state.delivered.add(pkt)
            deliveries.append((pkt, tx))
    if rec.scis is None:
        return
    for idx in decoded:
        sci: Optional[SciPayload] = rec.scis[idx]
        if sci is None:
            continue
        for ptr in sci.pointers:
            if ptr.tti > wall_tti:
                if frc:
                    state.frame_storage.setdefault(ptr.tti, {})[ptr.subch_start] = \
                        sci.packet_id
            elif bkc:
                _mark_past_copy(state, ptr, sci.packet_id, wall_tti, stack)


def process_tti(state: RxState, rec: TtiRecord,
                params: DecodeParams) -> List[Tuple[int, int]]:
    """Handle one received TTI; returns (packet_id, tx_id) first deliveries.

    Recovered past packets are included; they count as delivered now, at this
    record's wall time.
    """
    kernel_mode, frc, bkc = _MODE_FLAGS[state.receiver_mode]
    deliveries: List[Tuple[int, int]] = []
    stack: List[int] = []
    _pass_and_consequences(state, rec, rec.tti, params, kernel_mode, frc, bkc,
                           deliveries, stack)
    if frc:
        state.frame_storage.pop(rec.tti, None)   # spent on arrival
    if bkc:
        _store_record(state, rec)   # store first: recoveries may point back here
        while stack:
            past_tti = stack.pop()
            past = state.signal_storage.get(past_tti)
            if past is None:
                continue
            if isinstance(past, SkippedTti):
                past = past.materialize()
                state.signal_storage[past_tti] = past
            state._emit(rec.tti, "bkc_reprocess", -1, past_tti)
            _pass_and_consequences(state, past, rec.tti, params, kernel_mode,
                                   frc, bkc, deliveries, stack)
    return deliveries


def reprocess_past_tti(state: RxState, past_tti: int, wall_tti: int,
                       params: DecodeParams) -> List[Tuple[int, int]]:
    """Re-run one stored TTI now (test hook; process_tti drives this itself)."""
    kernel_mode, frc, bkc = _MODE_FLAGS[state.receiver_mode]
    rec = state.signal_storage.get(past_tti)
    if rec is None:
        return []
    deliveries: List[Tuple[int, int]] = []
    stack: List[int] = []
    _pass_and_consequences(state, rec, wall_tti, params, kernel_mode, frc, bkc,
                           deliveries, stack)
    while stack:
        t = stack.pop()
        nxt = state.signal_storage.get(t)
        if nxt is None:
            continue
        state._emit(wall_tti, "bkc_reprocess", -1, t)
        _pass_and_consequences(state, nxt, wall_tti, params, kernel_mode, frc,
                               bkc, deliveries, stack)
    return deliveries
