"""Shared layout and machinery for the graph kernels.

Vertices are block-distributed: tile t owns a contiguous range of vertex
ids whose sizes differ by at most one, so ownership is closed-form
(``split_owner``) and never needs a lookup message. Each tile stores the
row-pointer slice for its vertices (localized to tile-relative edge
offsets), the column and value lists for those rows, the per-vertex state
array, and a small pending-work ring used by the traversal kernels.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..arch import ConfigError, SPM_SCRATCHPAD
from ..core import (
    TID_INIT, TID_EPOCH, FD_KEY, FD_P0, CI_T,
    queue_reserved_bytes,
)
from ..ops import A_RP, A_CI, A_VA, A_OUT, A_AUX, A_FL, A_FC
from .common import (
    APP0, APP_BFS, APP_SSSP, APP_WCC,
    AG_APP, AG_MODE, AG_V, AG_ROOT,
    add_cycles, ld64, st64, ld32, st32, ldf32, stf32,
    f32_bits, bits_f32, emit, set_frontier, cq_free,
    split_owner, addr_of, my_range, alloc_array, split_counts,
)

# per-tile scratch slots (ctx.eng)
S_BASE = APP0        # next pending-ring index to expand
S_CHAIN = APP0 + 1   # an expansion chain is in flight on this tile

# logical channels common to the traversal kernels
CH_VISIT = 0
CH_KICK = 1

BUDGET = 64          # edge emissions per expansion task


# --------------------------------------------------------- host-side layout

def vertex_split(cfg, g):
    """(counts, starts, edge counts) of the block distribution."""
    T = cfg.n_tiles
    vc = split_counts(g.V, T)
    vstart = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(vc, out=vstart[1:])
    ec = (g.row_ptr[vstart[1:]] - g.row_ptr[vstart[:-1]]).astype(np.int64)
    return vc, vstart, ec


def base_layouts(cfg, g, vals: bool, out_log2: int):
    """Layout list [(aid, counts, log2)] for the CSR slices and result."""
    vc, vstart, ec = vertex_split(cfg, g)
    lay = [(A_RP, vc + 1, 3), (A_CI, ec, 2)]
    if vals:
        lay.append((A_VA, ec, 2))
    lay.append((A_OUT, vc, out_log2))
    return vc, vstart, ec, lay


def per_tile_bytes(layouts) -> np.ndarray:
    tot = None
    for _aid, counts, log2 in layouts:
        b = ((np.asarray(counts, dtype=np.int64) << log2) + 7) & ~np.int64(7)
        tot = b if tot is None else tot + b
    return tot


def make_plan(cfg, layouts, channels, name: str,
              iq_caps=None, cq_caps=None) -> dict:
    """Plan dict for ``run_app``; hard error when a scratchpad cannot hold
    the working set, stating roughly how many tiles it would take."""
    T = cfg.n_tiles
    per = per_tile_bytes(layouts)
    need = int(per.max())
    plan = {"mem_bytes": need * T, "n_arrays": 16}
    if iq_caps is not None:
        plan["iq_caps"] = iq_caps
    if cq_caps is not None:
        plan["cq_caps"] = cq_caps
    if cfg.spm_mode == SPM_SCRATCHPAD:
        wire = np.asarray(
            [c.words + (0 if cfg.no_header else 1) for c in channels],
            dtype=np.int64)
        iq = np.asarray(iq_caps, dtype=np.int64) if iq_caps is not None \
            else np.full(len(channels), cfg.iq_capacity_default, dtype=np.int64)
        cq = np.asarray(cq_caps, dtype=np.int64) if cq_caps is not None \
            else np.full(len(channels), cfg.cq_capacity_default, dtype=np.int64)
        for c, v in cfg.iq_capacity.items():
            iq[c] = v
        for c, v in cfg.cq_capacity.items():
            cq[c] = v
        usable = cfg.spm_bytes - queue_reserved_bytes(cfg, wire, iq, cq)
        line_b = cfg.cacheline_bits // 8
        slice_b = -(-need // line_b) * line_b
        if usable <= 0 or slice_b > usable:
            total = int(per.sum())
            min_tiles = -(-total // max(usable, 1)) if usable > 0 else 0
            hint = (f"; needs at least ~{min_tiles} tiles of this shape"
                    if min_tiles > T else "; enlarge the scratchpad")
            raise ConfigError(
                f"{name}: worst tile needs {slice_b} B but only "
                f"{max(usable, 0)} B of scratchpad remain after queue "
                f"reservations{hint}")
    return plan


def place_graph(ctx, cfg, g, vals: bool, out_log2: int):
    """Allocate and fill the CSR slices; returns (vc, vstart, cursors)."""
    T = cfg.n_tiles
    vc, vstart, ec, lay = base_layouts(cfg, g, vals, out_log2)
    cursors = np.zeros(T, dtype=np.int64)
    for aid, counts, log2 in lay:
        alloc_array(ctx, aid, counts, log2, cursors)
    for t in range(T):
        s, e = int(vstart[t]), int(vstart[t + 1])
        e0, e1 = int(g.row_ptr[s]), int(g.row_ptr[e])
        b = int(ctx.lay_base[A_RP, t]) >> 3
        ctx.mem64[b:b + (e - s) + 1] = g.row_ptr[s:e + 1] - g.row_ptr[s]
        b = int(ctx.lay_base[A_CI, t]) >> 2
        ctx.mem32[b:b + (e1 - e0)] = g.col_idx[e0:e1]
        if vals:
            b = int(ctx.lay_base[A_VA, t]) >> 2
            ctx.memf32[b:b + (e1 - e0)] = g.vals[e0:e1]
    return vc, vstart, cursors


def _view(ctx, dtype):
    dt = np.dtype(dtype)
    if dt == np.int64:
        return ctx.mem64, 3
    if dt == np.int32:
        return ctx.mem32, 2
    if dt == np.float32:
        return ctx.memf32, 2
    if dt == np.float64:
        return ctx.memf64, 3
    raise ValueError(f"no memory view for {dt}")


def gather(ctx, aid: int, dtype) -> np.ndarray:
    """Host-side read-back of a distributed array."""
    view, log2 = _view(ctx, dtype)
    T = ctx.lay_base.shape[1]
    n = int(ctx.lay_start[aid, T])
    out = np.empty(n, dtype=dtype)
    for t in range(T):
        s, e = int(ctx.lay_start[aid, t]), int(ctx.lay_start[aid, t + 1])
        if e > s:
            b = int(ctx.lay_base[aid, t]) >> log2
            out[s:e] = view[b:b + (e - s)]
    return out


def scatter(ctx, aid: int, values: np.ndarray) -> None:
    """Host-side preload of a distributed array (initial state)."""
    view, log2 = _view(ctx, values.dtype)
    T = ctx.lay_base.shape[1]
    for t in range(T):
        s, e = int(ctx.lay_start[aid, t]), int(ctx.lay_start[aid, t + 1])
        if e > s:
            b = int(ctx.lay_base[aid, t]) >> log2
            view[b:b + (e - s)] = values[s:e]


# ------------------------------------------------------ compiled traversal

@njit(cache=True, nogil=True)
def push_pending(ctx, tl, p, start, v):
    """Queue v for expansion unless it already waits in the ring."""
    add_cycles(ctx, tl, 2, 0, 1)
    flag = addr_of(ctx, A_AUX, tl, v)
    if ld32(ctx, tl, flag, start) != 0:
        return
    st32(ctx, tl, flag, 1, start)
    nv = ctx.lay_start[A_OUT, tl + 1] - ctx.lay_start[A_OUT, tl]
    fca = addr_of(ctx, A_FC, tl, tl)
    fc = ld64(ctx, tl, fca, start)
    sa = addr_of(ctx, A_FL, tl, ctx.lay_start[A_FL, tl] + fc % nv)
    st32(ctx, tl, sa, v, start)
    st64(ctx, tl, fca, fc + 1, start)
    if ctx.ag[AG_MODE] == 1:
        set_frontier(ctx, tl)
    elif ctx.eng[tl, S_CHAIN] == 0:
        ctx.eng[tl, S_CHAIN] = 1
        emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, -1, 0, 0)


@njit(cache=True, nogil=True)
def _trav_init(ctx, tl, p, start):
    a = ctx.ag[AG_APP]
    V = ctx.ag[AG_V]
    T = ctx.cfgi[CI_T]
    add_cycles(ctx, tl, 2, 0, 1)
    if a == APP_WCC:
        # every vertex starts as its own seed
        s, e = my_range(ctx, A_OUT, tl)
        nv = e - s
        for li in range(nv):
            v = s + li
            st32(ctx, tl, addr_of(ctx, A_FL, tl, v), v, start)
            st32(ctx, tl, addr_of(ctx, A_AUX, tl, v), 1, start)
            add_cycles(ctx, tl, 1, 0, 1)
        if nv > 0:
            st64(ctx, tl, addr_of(ctx, A_FC, tl, tl), nv, start)
            if ctx.ag[AG_MODE] == 1:
                set_frontier(ctx, tl)
            else:
                ctx.eng[tl, S_CHAIN] = 1
                emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, -1, 0, 0)
        return
    root = ctx.ag[AG_ROOT]
    if split_owner(root, V, T) == tl:
        if a == APP_BFS:
            st32(ctx, tl, addr_of(ctx, A_OUT, tl, root), 0, start)
        else:
            stf32(ctx, tl, addr_of(ctx, A_OUT, tl, root), np.float32(0.0), start)
        push_pending(ctx, tl, p, start, root)


@njit(cache=True, nogil=True)
def _trav_hook(ctx, tl, p, start):
    # barrier step: freeze the window of pending vertices and expand it
    add_cycles(ctx, tl, 2, 0, 1)
    base = ctx.eng[tl, S_BASE]
    end = ld64(ctx, tl, addr_of(ctx, A_FC, tl, tl), start)
    if end > base:
        ctx.eng[tl, S_CHAIN] = 1
        emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, end, 0, 0)


@njit(cache=True, nogil=True)
def trav_kick(ctx, tl, p, start, msg):
    a = ctx.ag[AG_APP]
    V = ctx.ag[AG_V]
    T = ctx.cfgi[CI_T]
    endw = msg[FD_P0 + 1]
    pos = msg[FD_P0 + 2]
    i = ctx.eng[tl, S_BASE]
    add_cycles(ctx, tl, 3, 0, 1)
    if endw < 0:
        end = ld64(ctx, tl, addr_of(ctx, A_FC, tl, tl), start)
    else:
        end = endw
    budget = cq_free(ctx, tl, CH_VISIT) - 1
    if budget > BUDGET:
        budget = BUDGET
    vstart = ctx.lay_start[A_OUT, tl]
    nv = ctx.lay_start[A_OUT, tl + 1] - vstart
    estart = ctx.lay_start[A_CI, tl]
    rstart = ctx.lay_start[A_RP, tl]
    while i < end and budget > 0:
        v = np.int64(ld32(ctx, tl, addr_of(ctx, A_FL, tl, vstart + i % nv),
                          start))
        li = v - vstart
        if pos == 0:
            st32(ctx, tl, addr_of(ctx, A_AUX, tl, v), 0, start)
        rpa = addr_of(ctx, A_RP, tl, rstart + li)
        rp0 = ld64(ctx, tl, rpa, start)
        rp1 = ld64(ctx, tl, rpa + 8, start)
        dv = np.float32(0.0)
        w0 = np.int64(0)
        if a == APP_SSSP:
            dv = ldf32(ctx, tl, addr_of(ctx, A_OUT, tl, v), start)
        elif a == APP_BFS:
            w0 = np.int64(ld32(ctx, tl, addr_of(ctx, A_OUT, tl, v), start)) + 1
        else:
            w0 = np.int64(ld32(ctx, tl, addr_of(ctx, A_OUT, tl, v), start))
        e = estart + rp0 + pos
        ee = estart + rp1
        while e < ee and budget > 0:
            u = np.int64(ld32(ctx, tl, addr_of(ctx, A_CI, tl, e), start))
            ow = split_owner(u, V, T)
            if a == APP_SSSP:
                wt = ldf32(ctx, tl, addr_of(ctx, A_VA, tl, e), start)
                pw = f32_bits(np.float32(dv + wt))
                add_cycles(ctx, tl, 3, 1, 1)
            else:
                pw = w0
                add_cycles(ctx, tl, 3, 0, 1)
            emit(ctx, tl, p, start, ow, CH_VISIT, u, pw, 0, 0, 0)
            e += 1
            budget -= 1
        if e < ee:
            pos = e - (estart + rp0)
            break
        i += 1
        ctx.eng[tl, S_BASE] = i
        pos = 0
    if i < end:
        emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, endw, pos, 0)
    else:
        ctx.eng[tl, S_CHAIN] = 0


@njit(cache=True, nogil=True)
def trav_visit(ctx, tl, p, start, msg):
    a = ctx.ag[AG_APP]
    v = msg[FD_KEY]
    oa = addr_of(ctx, A_OUT, tl, v)
    add_cycles(ctx, tl, 1, 0, 1)
    if a == APP_SSSP:
        nd = bits_f32(msg[FD_P0])
        if nd < ldf32(ctx, tl, oa, start):
            stf32(ctx, tl, oa, nd, start)
            push_pending(ctx, tl, p, start, v)
    else:
        nl = msg[FD_P0]
        if nl < np.int64(ld32(ctx, tl, oa, start)):
            st32(ctx, tl, oa, nl, start)
            push_pending(ctx, tl, p, start, v)


@njit(cache=True, nogil=True)
def traversal_body(ctx, tl, p, chan, msg, start):
    if chan == TID_INIT:
        _trav_init(ctx, tl, p, start)
    elif chan == TID_EPOCH:
        _trav_hook(ctx, tl, p, start)
    elif chan == CH_KICK:
        trav_kick(ctx, tl, p, start, msg)
    else:
        trav_visit(ctx, tl, p, start, msg)
