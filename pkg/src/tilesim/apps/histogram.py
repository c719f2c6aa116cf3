"""Histogram of edge targets, binned by a key shift.

Every tile scans the column list of its rows, maps each target id to a
bin (bin = id >> shift) and sends an increment to the bin's owner on a
sum-combining channel, so hot bins collapse inside the network instead
of serializing at one tile.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..arch import ConfigError
from ..core import TID_INIT, TID_EPOCH, FD_KEY, FD_P0, CI_T, CI_NOC_PS
from .common import (
    APP_HIST, AG_APP, AG_V, AG_BINS, AG_SHIFT,
    AppProgram, Channel, COMB_SUM_I64,
    add_cycles, ld64, st64, ld32, emit, cq_free, split_owner, addr_of,
    my_range, alloc_array, split_counts,
)
from .graphs import (
    A_RP, A_CI, A_AUX, make_plan, gather, vertex_split,
)

CH_CNT = 0
CH_KICK = 1
BUDGET = 64

CHANNELS = [Channel(1, COMB_SUM_I64), Channel(3)]


@njit(cache=True, nogil=True)
def _hist_kick(ctx, tl, p, start, msg):
    V = ctx.ag[AG_V]
    BINS = ctx.ag[AG_BINS]
    shift = ctx.ag[AG_SHIFT]
    T = ctx.cfgi[CI_T]
    i = msg[FD_P0]
    pos = msg[FD_P0 + 2]
    s, e2 = my_range(ctx, A_RP, tl)
    nv = e2 - s - 1
    estart = ctx.lay_start[A_CI, tl]
    rstart = ctx.lay_start[A_RP, tl]
    budget = cq_free(ctx, tl, CH_CNT) - 1
    if budget > BUDGET:
        budget = BUDGET
    add_cycles(ctx, tl, 3, 0, 1)
    while i < nv and budget > 0:
        rpa = addr_of(ctx, A_RP, tl, rstart + i)
        rp0 = ld64(ctx, tl, rpa, start)
        rp1 = ld64(ctx, tl, rpa + 8, start)
        e = estart + rp0 + pos
        ee = estart + rp1
        while e < ee and budget > 0:
            u = np.int64(ld32(ctx, tl, addr_of(ctx, A_CI, tl, e), start))
            b = u >> shift
            emit(ctx, tl, p, start, split_owner(b, BINS, T), CH_CNT,
                 b, 1, 0, 0, 0)
            add_cycles(ctx, tl, 3, 0, 1)
            e += 1
            budget -= 1
        if e < ee:
            pos = e - (estart + rp0)
            break
        i += 1
        pos = 0
    if i < nv:
        emit(ctx, tl, p, start, tl, CH_KICK, -1, i, 0, pos, 0)


@njit(cache=True, nogil=True)
def histogram_body(ctx, tl, p, chan, msg, start):
    if chan == TID_INIT:
        s, e2 = my_range(ctx, A_RP, tl)
        add_cycles(ctx, tl, 2, 0, 1)
        if e2 - s > 1:
            emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, 0, 0, 0)
    elif chan == TID_EPOCH:
        pass
    elif chan == CH_KICK:
        _hist_kick(ctx, tl, p, start, msg)
    else:
        b = msg[FD_KEY]
        ha = addr_of(ctx, A_AUX, tl, b)
        st64(ctx, tl, ha, ld64(ctx, tl, ha, start) + msg[FD_P0], start)
        add_cycles(ctx, tl, 1, 0, 0)


def make_histogram(opts=None):
    opts = opts or {}

    def _graph(ds):
        if getattr(ds, "kind", None) != "graph":
            raise ConfigError("histogram needs a graph dataset")
        return ds.csr

    def _geometry(ds):
        g = _graph(ds)
        bins = int(opts.get("bins", min(256, g.V)))
        if bins < 1 or bins & (bins - 1):
            raise ConfigError(f"histogram: bins {bins} is not a power of two")
        vbits = max(int(g.V - 1).bit_length(), 1)
        shift = max(vbits - int(bins).bit_length() + 1, 0)
        return bins, shift

    def plan(cfg, ds):
        g = _graph(ds)
        bins, shift = _geometry(ds)
        vc, vstart, ec = vertex_split(cfg, g)
        lay = [(A_RP, vc + 1, 3), (A_CI, ec, 2),
               (A_AUX, split_counts(bins, cfg.n_tiles), 3)]
        return make_plan(cfg, lay, CHANNELS, "histogram")

    def setup(ctx, cfg, ds):
        g = _graph(ds)
        bins, shift = _geometry(ds)
        T = cfg.n_tiles
        vc, vstart, ec = vertex_split(cfg, g)
        cursors = np.zeros(T, dtype=np.int64)
        alloc_array(ctx, A_RP, vc + 1, 3, cursors)
        alloc_array(ctx, A_CI, ec, 2, cursors)
        alloc_array(ctx, A_AUX, split_counts(bins, T), 3, cursors)
        for t in range(T):
            s, e = int(vstart[t]), int(vstart[t + 1])
            e0, e1 = int(g.row_ptr[s]), int(g.row_ptr[e])
            b = int(ctx.lay_base[A_RP, t]) >> 3
            ctx.mem64[b:b + (e - s) + 1] = g.row_ptr[s:e + 1] - g.row_ptr[s]
            b = int(ctx.lay_base[A_CI, t]) >> 2
            ctx.mem32[b:b + (e1 - e0)] = g.col_idx[e0:e1]
        ctx.ag[AG_APP] = APP_HIST
        ctx.ag[AG_V] = g.V
        ctx.ag[AG_BINS] = bins
        ctx.ag[AG_SHIFT] = shift

    def check(ctx, cfg, ds):
        g = _graph(ds)
        bins, shift = _geometry(ds)
        want = ds.oracle(("hist", bins),
                         lambda: np.bincount(g.col_idx >> shift,
                                             minlength=bins).astype(np.int64))
        got = gather(ctx, A_AUX, np.int64)
        if np.array_equal(got, want):
            return True, "histogram: counts match reference"
        bad = int(np.flatnonzero(got != want)[0])
        return False, (f"histogram: bin {bad} got {got[bad]} want {want[bad]}")

    def finalize(ctx, cfg, ds, res):
        g = _graph(ds)
        t_s = res.runtime_cycles * int(ctx.cfgi[CI_NOC_PS]) * 1e-12
        m = int(g.E)
        return {"time_s": t_s, "edges": m,
                "teps": m / t_s if t_s > 0 else 0.0}

    return AppProgram(
        name="histogram", channels=CHANNELS, epoch_mode="none",
        plan=plan, setup=setup, finalize=finalize, check=check)
