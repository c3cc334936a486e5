"""Hot decode loop, jitted when numba is available.

Set SIDELINK_SIM_NO_NUMBA=1 to force the interpreted fallback. Both paths run
the same function body with the same operation order, so results are
bit-identical either way.
"""

from __future__ import annotations

import os

import numpy as np


def _noop_jit(*jit_args, **jit_kwargs):
    def wrap(fn):
        return fn
    return wrap


if os.environ.get("SIDELINK_SIM_NO_NUMBA", "") not in ("", "0"):
    HAVE_NUMBA = False
    njit = _noop_jit
else:
    try:
        from numba import njit
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
        njit = _noop_jit

MODE_LEGACY = 0
MODE_SIC = 1
MODE_FRC = 2


@njit(cache=True)
def decode_pass(pow_mw, sc_start, sc_cnt, xi, known, noise_mw_per_subch,
                kn, gamma_bar, budget, mode, out_idx):
    """One receiver pass over contributions sorted by descending power.

    xi is updated in place (1 = cancelled). Decoded contribution indices are
    written to out_idx in decode order; returns how many were written.
    Budget counts cancel-and-retry cycles, so at most 1 + budget decodes.
    MODE_FRC first cancels, free of budget, every contribution whose packet
    is already known to the receiver.
    """
    m = pow_mw.shape[0]
    ndec = 0
    iters = 0
    if mode == MODE_FRC:
        for i in range(m):
            if known[i] == 1 and xi[i] == 0:
                xi[i] = 1
    while True:
        target = -1
        for i in range(m):
            if xi[i] == 0:
                target = i
                break
        if target < 0:
            break
        denom = noise_mw_per_subch * sc_cnt[target]
        t_lo = sc_start[target]
        t_hi = t_lo + sc_cnt[target]
        for j in range(m):
            if j == target:
                continue
            lo = sc_start[j] if sc_start[j] > t_lo else t_lo
            hi = sc_start[j] + sc_cnt[j]
            if t_hi < hi:
                hi = t_hi
            if hi <= lo:
                continue
            w = kn if xi[j] == 1 else 1.0
            denom += w * pow_mw[j] * ((hi - lo) / sc_cnt[j])
        gamma = pow_mw[target] / denom
        if gamma < gamma_bar:
            break
        out_idx[ndec] = target
        ndec += 1
        if mode == MODE_LEGACY:
            break
        if iters >= budget:
            break
        xi[target] = 1
        iters += 1
    return ndec


def warmup() -> None:
    """Trigger jit compilation on a tiny instance so first real use is fast."""
    pow_mw = np.array([2.0, 1.0])
    sc = np.zeros(2, dtype=np.int64)
    cnt = np.full(2, 4, dtype=np.int64)
    xi = np.zeros(2, dtype=np.uint8)
    known = np.zeros(2, dtype=np.uint8)
    out = np.zeros(2, dtype=np.int64)
    decode_pass(pow_mw, sc, cnt, xi, known, 1e-12, 1e-3, 1.0, 1, MODE_SIC, out)
