"""Tile memory model: scratchpad or cache over DRAM, with timing.

Every PU data access goes through ``dcache_access``. In scratchpad mode the
address must fall inside the tile's own slice of the address space; touching
a remote slice is a hard error because the hardware has no path for it.
In cache mode the SPM is managed as a direct-mapped or set-associative
write-back cache of DRAM lines, and misses are charged against the per
channel DRAM bandwidth counters.
"""
from __future__ import annotations

import math

from numba import njit

from .core import (
    CI_T, CI_SLICE_B, CI_CACHE, CI_SETS, CI_WAYS, CI_LINE_B, CI_SRAM_PS,
    CI_DRAM_RT_PS, CI_DRAM_SLOT_PS, CI_CH_PER_CHIP, CI_W, CI_CHIP_W,
    CI_CHIP_H, CI_PF,
    CT_SRAM_RB, CT_SRAM_WB, CT_TAG_R, CT_MEM_HIT, CT_MEM_MISS, CT_MEM_WB,
    CT_DRAM_RB, CT_DRAM_WB, CT_PF_ISS, CT_PF_USE, CT_INSTR_MEM,
    EN_ERR, EN_ERRA, EN_ERRB, ERR_NONE, ERR_REMOTE, ERR_ADDR,
)

# cmeta bit flags
CM_DIRTY = 1
CM_PFFLAG = 2   # line was installed by a prefetch and not yet referenced


def sram_latency_ns(spm_kib: int, params) -> float:
    """SRAM access latency: base latency for a 512 KiB bank, plus one
    pipeline stage per quadrupling of capacity beyond it."""
    if spm_kib <= params.sram_base_kib:
        return params.sram_base_ns
    steps = math.ceil(math.log(spm_kib / params.sram_base_kib, 4.0))
    return params.sram_base_ns + params.sram_step_ns * steps


def sram_mux_factor(spm_kib: int, params) -> float:
    """Per-access energy multiplier: wider output muxes as banks multiply."""
    if spm_kib <= params.sram_base_kib:
        return 1.0
    doublings = math.ceil(math.log2(spm_kib / params.sram_base_kib))
    return params.sram_mux_step ** doublings


@njit(cache=True, nogil=True, inline="always")
def dram_channel_of(ctx, t, addr):
    """DRAM channel serving this line: channels striped over lines within
    the chiplet that owns the accessing tile."""
    w = ctx.cfgi[CI_W]
    cw, chh = ctx.cfgi[CI_CHIP_W], ctx.cfgi[CI_CHIP_H]
    chip = ((t // w) // chh) * (w // cw) + (t % w) // cw
    per = ctx.cfgi[CI_CH_PER_CHIP]
    line = addr // ctx.cfgi[CI_LINE_B]
    return chip * per + line % per


@njit(cache=True, nogil=True)
def dram_request(ctx, t, addr, write, now_ps):
    """One DRAM line transaction; returns its latency in ps.

    Each channel keeps a single monotone counter Y. A request arriving at
    X waits max(0, Y - X) behind earlier traffic, pays the round trip, and
    advances Y by one transaction slot. Visit order over tiles is fixed by
    the engine, so the counter sequence is deterministic.
    """
    ch = dram_channel_of(ctx, t, addr)
    x = now_ps + ctx.busps[t]
    y = ctx.dramY[ch]
    wait = y - x
    if wait < 0:
        wait = 0
    if y < x:
        y = x
    ctx.dramY[ch] = y + ctx.cfgi[CI_DRAM_SLOT_PS]
    ctx.ctr_dram[ch] += 1
    bits = ctx.cfgi[CI_LINE_B] * 8
    if write:
        ctx.ctr[t, CT_DRAM_WB] += bits
    else:
        ctx.ctr[t, CT_DRAM_RB] += bits
    return wait + ctx.cfgi[CI_DRAM_RT_PS] + 2 * ctx.busps[t]


@njit(cache=True, nogil=True)
def cache_lookup(ctx, t, addr, write, now_ps, is_pf):
    """Cache line access; returns latency in ps (SRAM hit time included)."""
    line_b = ctx.cfgi[CI_LINE_B]
    sets = ctx.cfgi[CI_SETS]
    ways = ctx.cfgi[CI_WAYS]
    line = addr // line_b
    st = line % sets
    ctx.ctr[t, CT_TAG_R] += 1
    for wy in range(ways):
        if ctx.ctag[t, st, wy] == line:
            if is_pf:
                return 0
            ctx.clru[t, st, wy] = now_ps
            if write:
                ctx.cmeta[t, st, wy] |= CM_DIRTY
            if ctx.cmeta[t, st, wy] & CM_PFFLAG:
                ctx.cmeta[t, st, wy] &= ~CM_PFFLAG
                ctx.ctr[t, CT_PF_USE] += 1
            ctx.ctr[t, CT_MEM_HIT] += 1
            rdy = ctx.cready[t, st, wy] - now_ps
            if rdy < 0:
                rdy = 0
            return rdy + ctx.cfgi[CI_SRAM_PS]
    # miss: evict LRU way, write back if dirty, then fetch. The writeback
    # takes a DRAM channel slot but does not delay the PU.
    vic = 0
    old = ctx.clru[t, st, 0]
    for wy in range(1, ways):
        if ctx.clru[t, st, wy] < old:
            old = ctx.clru[t, st, wy]
            vic = wy
    if ctx.ctag[t, st, vic] >= 0 and (ctx.cmeta[t, st, vic] & CM_DIRTY):
        ctx.ctr[t, CT_MEM_WB] += 1
        dram_request(ctx, t, ctx.ctag[t, st, vic] * line_b, True, now_ps)
    lat = dram_request(ctx, t, addr, False, now_ps)
    ctx.ctag[t, st, vic] = line
    ctx.cmeta[t, st, vic] = CM_DIRTY if write else 0
    ctx.clru[t, st, vic] = now_ps
    ctx.cready[t, st, vic] = now_ps + lat
    if is_pf:
        ctx.cmeta[t, st, vic] |= CM_PFFLAG
        ctx.ctr[t, CT_PF_ISS] += 1
        return 0
    ctx.ctr[t, CT_MEM_MISS] += 1
    return lat + ctx.cfgi[CI_SRAM_PS]


@njit(cache=True, nogil=True)
def prefetch_line(ctx, t, addr, now_ps):
    """Best-effort line prefetch; never charges PU latency."""
    if addr < 0 or addr >= ctx.cfgi[CI_SLICE_B] * ctx.cfgi[CI_T]:
        return
    cache_lookup(ctx, t, addr, False, now_ps, True)


@njit(cache=True, nogil=True)
def dcache_access(ctx, t, addr, nbytes, write, now_ps):
    """Timing + accounting for a PU data access. Returns latency in ps."""
    ctx.ctr[t, CT_INSTR_MEM] += 1
    if write:
        ctx.ctr[t, CT_SRAM_WB] += nbytes * 8
    else:
        ctx.ctr[t, CT_SRAM_RB] += nbytes * 8
    slice_b = ctx.cfgi[CI_SLICE_B]
    if addr < 0 or addr + nbytes > slice_b * ctx.cfgi[CI_T]:
        if ctx.eng[t, EN_ERR] == ERR_NONE:
            ctx.eng[t, EN_ERR] = ERR_ADDR
            ctx.eng[t, EN_ERRA] = addr
            ctx.eng[t, EN_ERRB] = t
        return 0
    if ctx.cfgi[CI_CACHE] == 0:
        if addr // slice_b != t or (addr + nbytes - 1) // slice_b != t:
            if ctx.eng[t, EN_ERR] == ERR_NONE:
                ctx.eng[t, EN_ERR] = ERR_REMOTE
                ctx.eng[t, EN_ERRA] = addr
                ctx.eng[t, EN_ERRB] = t
            return 0
        return ctx.cfgi[CI_SRAM_PS]
    lat = cache_lookup(ctx, t, addr, write, now_ps, False)
    line_b = ctx.cfgi[CI_LINE_B]
    if addr // line_b != (addr + nbytes - 1) // line_b:
        lat += cache_lookup(ctx, t, addr + nbytes - 1, write, now_ps, False)
    if ctx.cfgi[CI_PF] == 1:
        prefetch_line(ctx, t, addr + line_b, now_ps)
    return lat
