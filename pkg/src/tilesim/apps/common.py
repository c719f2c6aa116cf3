"""Toolkit for writing simulated kernels.

A kernel is a set of logical channels plus a branch of the compiled
task-body dispatcher ``body(ctx, tile, pu, chan, msg, start_ps)``. The
body does the functional work directly on the global memory image,
charges time with the helpers here, and emits messages that the engine
routes. ``chan`` is -1 for the per-kernel init task and -2 for the epoch
hook.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from ..arch import ConfigError
from ..core import (
    FD_RT, FD_DEST, FD_CHAN, FD_WORDS, FD_TS, FD_KEY, FD_ROW, FD_P0, FLD,
    CI_T, CI_PU_PS, CI_STCAP, CI_RT_DEG, CI_SLICE_B,
    CT_INSTR_INT, CT_INSTR_FP, CT_INSTR_BR,
    EN_ACC, EN_ERR, EN_FRONTIER, EN_APP0, ERR_NONE, ERR_STAGE,
)
from ..memory import dcache_access
from ..noc import next_waypoint
from ..ops import (
    APP_BFS, APP_SSSP, APP_WCC, APP_PR, APP_SPMV, APP_SPMM, APP_FFT,
    APP_HIST, APP_EMPTY, APP_STREAM,
    AG_APP, AG_MODE, AG_V, AG_ROOT, AG_ITERS, AG_BINS, AG_SHIFT, AG_N,
    AG_K, AG_DAMP, AG_S_MODE, AG_S_SRC, AG_S_DEST, AG_S_COUNT,
    f32_bits, bits_f32, f64_bits, bits_f64, addr_of,
    COMB_NONE, COMB_MIN2_I64, COMB_MIN2_F32, COMB_SUM_I64, COMB_SUM_F32,
    COMB_SUM_F64, COMB_SUM4_F64,
)

__all__ = [
    "APP0", "APP_BFS", "APP_SSSP", "APP_WCC", "APP_PR", "APP_SPMV",
    "APP_SPMM", "APP_FFT", "APP_HIST", "APP_EMPTY", "APP_STREAM",
    "AG_APP", "AG_MODE", "AG_V", "AG_ROOT", "AG_ITERS", "AG_BINS",
    "AG_SHIFT", "AG_N", "AG_K", "AG_DAMP", "AG_S_MODE", "AG_S_SRC",
    "AG_S_DEST", "AG_S_COUNT",
    "f32_bits", "bits_f32", "f64_bits", "bits_f64", "addr_of",
    "COMB_NONE", "COMB_MIN2_I64", "COMB_MIN2_F32", "COMB_SUM_I64",
    "COMB_SUM_F32", "COMB_SUM_F64", "COMB_SUM4_F64",
    "add_cycles", "ld64", "st64", "ld32", "st32", "ldf32", "stf32",
    "ldf64", "stf64", "emit", "set_frontier", "cq_free",
    "split_owner", "owner_tile", "my_range", "alloc_array",
    "split_counts", "footprint_bytes", "Channel", "AppProgram",
]

APP0 = EN_APP0   # first per-tile scratch slot in ctx.eng


# --------------------------------------------------------------- task costs

@njit(cache=True, nogil=True, inline="always")
def add_cycles(ctx, tl, n_int, n_fp, n_br):
    """Charge scalar instructions; one PU cycle each."""
    ctx.ctr[tl, CT_INSTR_INT] += n_int
    ctx.ctr[tl, CT_INSTR_FP] += n_fp
    ctx.ctr[tl, CT_INSTR_BR] += n_br
    ctx.eng[tl, EN_ACC] += (n_int + n_fp + n_br) * ctx.cfgi[CI_PU_PS]


@njit(cache=True, nogil=True, inline="always")
def _mem(ctx, tl, addr, nbytes, write, start):
    now = start + ctx.eng[tl, EN_ACC]
    ctx.eng[tl, EN_ACC] += dcache_access(ctx, tl, addr, nbytes, write, now)
    return ctx.eng[tl, EN_ERR] == ERR_NONE


@njit(cache=True, nogil=True, inline="always")
def ld64(ctx, tl, addr, start):
    if not _mem(ctx, tl, addr, 8, False, start):
        return np.int64(0)
    return ctx.mem64[addr >> 3]


@njit(cache=True, nogil=True, inline="always")
def st64(ctx, tl, addr, v, start):
    if _mem(ctx, tl, addr, 8, True, start):
        ctx.mem64[addr >> 3] = v


@njit(cache=True, nogil=True, inline="always")
def ld32(ctx, tl, addr, start):
    if not _mem(ctx, tl, addr, 4, False, start):
        return np.int32(0)
    return ctx.mem32[addr >> 2]


@njit(cache=True, nogil=True, inline="always")
def st32(ctx, tl, addr, v, start):
    if _mem(ctx, tl, addr, 4, True, start):
        ctx.mem32[addr >> 2] = np.int32(v)


@njit(cache=True, nogil=True, inline="always")
def ldf32(ctx, tl, addr, start):
    if not _mem(ctx, tl, addr, 4, False, start):
        return np.float32(0.0)
    return ctx.memf32[addr >> 2]


@njit(cache=True, nogil=True, inline="always")
def stf32(ctx, tl, addr, v, start):
    if _mem(ctx, tl, addr, 4, True, start):
        ctx.memf32[addr >> 2] = np.float32(v)


@njit(cache=True, nogil=True, inline="always")
def ldf64(ctx, tl, addr, start):
    if not _mem(ctx, tl, addr, 8, False, start):
        return 0.0
    return ctx.memf64[addr >> 3]


@njit(cache=True, nogil=True, inline="always")
def stf64(ctx, tl, addr, v, start):
    if _mem(ctx, tl, addr, 8, True, start):
        ctx.memf64[addr >> 3] = v


# ---------------------------------------------------------------- emission

@njit(cache=True, nogil=True)
def emit(ctx, tl, p, start, dest, ch, key, w0, w1, w2, w3):
    """Stage one message (costs one int instruction). Payload words beyond
    the four given are zero; combinable channels start at their first
    reduction-tree waypoint."""
    n = ctx.stagen[tl, p]
    if n >= ctx.cfgi[CI_STCAP]:
        if ctx.eng[tl, EN_ERR] == ERR_NONE:
            ctx.eng[tl, EN_ERR] = ERR_STAGE
        return
    ctx.ctr[tl, CT_INSTR_INT] += 1
    ctx.eng[tl, EN_ACC] += ctx.cfgi[CI_PU_PS]
    m = ctx.stage[tl, p, n]
    rt = dest
    if key >= 0 and ctx.chancomb[ch] != 0 and ctx.cfgi[CI_RT_DEG] >= 4 and dest != tl:
        rt = next_waypoint(ctx, tl, dest)
    m[FD_RT] = rt
    m[FD_DEST] = dest
    m[FD_CHAN] = ch
    m[FD_WORDS] = ctx.chanw[ch]
    m[FD_TS] = start + ctx.eng[tl, EN_ACC]
    m[FD_KEY] = key
    m[FD_ROW] = -1
    m[FD_P0 + 0] = w0
    m[FD_P0 + 1] = w1
    m[FD_P0 + 2] = w2
    m[FD_P0 + 3] = w3
    for i in range(4, 8):
        m[FD_P0 + i] = 0
    ctx.stagen[tl, p] = n + 1


@njit(cache=True, nogil=True, inline="always")
def set_frontier(ctx, tl):
    ctx.eng[tl, EN_FRONTIER] = 1


@njit(cache=True, nogil=True, inline="always")
def cq_free(ctx, tl, ch):
    # tasks bound their remote emissions by the free CQ space they observe
    # at start; with one PU per tile that guarantees the stage always drains
    # and rules out message-dependent deadlock
    return ctx.qcap[1, ch] - ctx.cqn[tl, ch]


# ------------------------------------------------------- layout and owners

@njit(cache=True, nogil=True, inline="always")
def split_owner(i, n, t):
    """Owner tile of element i when n elements are split contiguously over
    t tiles, first n % t tiles holding one extra."""
    q = n // t
    r = n % t
    c = r * (q + 1)
    if i < c:
        return i // (q + 1)
    return r + (i - c) // (q if q > 0 else 1)


@njit(cache=True, nogil=True, inline="always")
def owner_tile(ctx, aid, i):
    """Owner tile of element i of array aid (layout table walk)."""
    t = np.searchsorted(ctx.lay_start[aid], i, side="right") - 1
    return t


@njit(cache=True, nogil=True, inline="always")
def my_range(ctx, aid, tl):
    return ctx.lay_start[aid, tl], ctx.lay_start[aid, tl + 1]


def alloc_array(ctx, aid, counts, log2, cursors):
    """Host-side: place array aid with counts[t] elements on each tile."""
    T = ctx.lay_base.shape[1]
    slice_b = int(ctx.cfgi[CI_SLICE_B])
    counts = np.asarray(counts, dtype=np.int64)
    ctx.lay_start[aid, 0] = 0
    np.cumsum(counts, out=ctx.lay_start[aid, 1:])
    ctx.lay_log2[aid] = log2
    for t in range(T):
        cursors[t] = (cursors[t] + 7) & ~7
        ctx.lay_base[aid, t] = t * slice_b + cursors[t]
        cursors[t] += int(counts[t]) << log2
        if cursors[t] > slice_b:
            raise ConfigError(
                f"tile {t} needs {cursors[t]} B, slice holds {slice_b} B: "
                "dataset does not fit this machine")


def split_counts(n: int, t: int) -> np.ndarray:
    """Element counts per tile for the contiguous split."""
    q, r = divmod(n, t)
    return np.array([q + 1 if i < r else q for i in range(t)], dtype=np.int64)


def footprint_bytes(layouts) -> int:
    """Worst per-tile footprint for (counts, log2) pairs, with alignment."""
    tot = None
    for counts, log2 in layouts:
        b = (np.asarray(counts, dtype=np.int64) << log2) + 7
        b &= ~np.int64(7)
        tot = b if tot is None else tot + b
    return int(tot.max()) if tot is not None else 0


# ------------------------------------------------------------- app program

@dataclass
class Channel:
    words: int                  # payload words on the wire (header extra)
    combine: int = COMB_NONE    # combine operator for in-network reduction


@dataclass
class AppProgram:
    """Everything the engine needs to run one application. The compiled
    task body is selected by ``ctx.ag[AG_APP]``, which ``setup`` sets."""
    name: str
    channels: list
    epoch_mode: str = "none"    # none | global | local
    max_epochs: int = 0
    n_kernels: int = 1
    plan: Callable = lambda cfg, ds: {}
    setup: Callable = lambda ctx, cfg, ds: None
    finalize: Callable = lambda ctx, cfg, ds, res: {}
    check: Callable | None = None    # (ctx, cfg, ds) -> (ok, message)
