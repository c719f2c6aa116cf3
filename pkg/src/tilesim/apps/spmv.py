"""Sparse matrix kernels: y = A x and C = A B (B dense, few columns).

The matrix is stored transposed: the owner of column j holds the list of
(row, value) pairs of that column, multiplies them by its local x[j] (or
B[j, :]) and pushes float64 partial products to the row owners on a
sum-combining channel. Termination is plain quiescence; no epochs.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..arch import ConfigError
from ..core import TID_INIT, TID_EPOCH, FD_KEY, FD_P0, CI_T, CI_NOC_PS
from .common import (
    APP_SPMV, APP_SPMM, AG_APP, AG_V, AG_K,
    AppProgram, Channel, COMB_SUM_F64, COMB_SUM4_F64,
    add_cycles, ld64, ld32, ldf32, ldf64, stf64, f64_bits, bits_f64,
    emit, cq_free, split_owner, addr_of, my_range, alloc_array,
)
from .graphs import (
    A_RP, A_CI, A_VA, A_OUT, A_AUX, vertex_split, base_layouts, make_plan,
    place_graph, gather, scatter,
)

CH_PROD = 0
CH_KICK = 1
BUDGET = 64

MAX_COLS = 4


# ------------------------------------------------------------ compiled body

@njit(cache=True, nogil=True)
def _mm_kick(ctx, tl, p, start, msg):
    a = ctx.ag[AG_APP]
    V = ctx.ag[AG_V]
    K = ctx.ag[AG_K]
    T = ctx.cfgi[CI_T]
    i = msg[FD_P0]
    pos = msg[FD_P0 + 2]
    s, e2 = my_range(ctx, A_RP, tl)
    nv = e2 - s - 1
    vstart = ctx.lay_start[A_RP, tl] - tl   # global id of first local column
    estart = ctx.lay_start[A_CI, tl]
    rstart = ctx.lay_start[A_RP, tl]
    budget = cq_free(ctx, tl, CH_PROD) - 1
    if budget > BUDGET:
        budget = BUDGET
    add_cycles(ctx, tl, 3, 0, 1)
    b0 = 0.0
    b1 = 0.0
    b2 = 0.0
    b3 = 0.0
    while i < nv and budget > 0:
        j = vstart + i
        rpa = addr_of(ctx, A_RP, tl, rstart + i)
        rp0 = ld64(ctx, tl, rpa, start)
        rp1 = ld64(ctx, tl, rpa + 8, start)
        if rp1 == rp0:
            add_cycles(ctx, tl, 1, 0, 1)
            i += 1
            continue
        if a == APP_SPMV:
            b0 = np.float64(ldf32(ctx, tl, addr_of(ctx, A_AUX, tl, j), start))
            add_cycles(ctx, tl, 1, 0, 1)
        else:
            for k in range(K):
                bk = np.float64(
                    ldf32(ctx, tl, addr_of(ctx, A_AUX, tl, j * K + k), start))
                if k == 0:
                    b0 = bk
                elif k == 1:
                    b1 = bk
                elif k == 2:
                    b2 = bk
                else:
                    b3 = bk
            add_cycles(ctx, tl, K, 0, 1)
        e = estart + rp0 + pos
        ee = estart + rp1
        while e < ee and budget > 0:
            row = np.int64(ld32(ctx, tl, addr_of(ctx, A_CI, tl, e), start))
            av = np.float64(ldf32(ctx, tl, addr_of(ctx, A_VA, tl, e), start))
            ow = split_owner(row, V, T)
            if a == APP_SPMV:
                emit(ctx, tl, p, start, ow, CH_PROD, row,
                     f64_bits(av * b0), 0, 0, 0)
                add_cycles(ctx, tl, 2, 1, 1)
            else:
                emit(ctx, tl, p, start, ow, CH_PROD, row,
                     f64_bits(av * b0), f64_bits(av * b1),
                     f64_bits(av * b2), f64_bits(av * b3))
                add_cycles(ctx, tl, 2, K, 1)
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
def spmv_body(ctx, tl, p, chan, msg, start):
    if chan == TID_INIT:
        s, e2 = my_range(ctx, A_RP, tl)
        add_cycles(ctx, tl, 2, 0, 1)
        if e2 - s > 1:
            emit(ctx, tl, p, start, tl, CH_KICK, -1, 0, 0, 0, 0)
    elif chan == TID_EPOCH:
        pass
    elif chan == CH_KICK:
        _mm_kick(ctx, tl, p, start, msg)
    else:
        row = msg[FD_KEY]
        K = ctx.ag[AG_K]
        add_cycles(ctx, tl, 1, 0, 0)
        if ctx.ag[AG_APP] == APP_SPMV:
            oa = addr_of(ctx, A_OUT, tl, row)
            y = ldf64(ctx, tl, oa, start)
            stf64(ctx, tl, oa, y + bits_f64(msg[FD_P0]), start)
            add_cycles(ctx, tl, 0, 1, 0)
        else:
            for k in range(K):
                oa = addr_of(ctx, A_OUT, tl, row * K + k)
                y = ldf64(ctx, tl, oa, start)
                stf64(ctx, tl, oa, y + bits_f64(msg[FD_P0 + k]), start)
            add_cycles(ctx, tl, 0, K, 0)


# ------------------------------------------------------- host-side program

def _operand(ds, cols: int):
    """Deterministic dense operand derived from the dataset seed."""
    def build():
        rng = np.random.default_rng([int(ds.seed), 1001])
        if cols == 0:
            return rng.standard_normal(ds.csr.V).astype(np.float32)
        return rng.standard_normal((ds.csr.V, cols)).astype(np.float32)
    return ds.oracle(("operand", cols), build)


def spmv_ref(g, x: np.ndarray) -> np.ndarray:
    src = g.src_of_edges()
    w = g.vals.astype(np.float64) * x.astype(np.float64)[g.col_idx]
    return np.bincount(src, weights=w, minlength=g.V)


def spmm_ref(g, B: np.ndarray) -> np.ndarray:
    src = g.src_of_edges()
    va = g.vals.astype(np.float64)
    dst = g.col_idx.astype(np.int64)
    C = np.empty((g.V, B.shape[1]))
    for k in range(B.shape[1]):
        C[:, k] = np.bincount(src, weights=va * B[dst, k].astype(np.float64),
                              minlength=g.V)
    return C


def make_spmm(dense_cols: int, opts=None):
    """dense_cols == 0 builds spmv; 1..4 builds spmm with that many columns."""
    opts = opts or {}
    K = int(opts.get("cols", dense_cols if dense_cols else 0))
    if dense_cols:
        if not 1 <= K <= MAX_COLS:
            raise ConfigError(f"spmm: cols {K} outside 1..{MAX_COLS}")
        name = "spmm"
        channels = [Channel(K, COMB_SUM4_F64), Channel(3)]
    else:
        K = 0
        name = "spmv"
        channels = [Channel(1, COMB_SUM_F64), Channel(3)]

    def _graph(ds):
        if getattr(ds, "kind", None) != "graph":
            raise ConfigError(f"{name} needs a graph dataset")
        return ds.transpose

    def plan(cfg, ds):
        gt = _graph(ds)
        vc, vstart, ec, lay = base_layouts(cfg, gt, True, 3)
        if K:
            lay[-1] = (A_OUT, vc * K, 3)
            lay.append((A_AUX, vc * K, 2))
        else:
            lay.append((A_AUX, vc, 2))
        return make_plan(cfg, lay, channels, name)

    def setup(ctx, cfg, ds):
        gt = _graph(ds)
        T = cfg.n_tiles
        vc, vstart, ec = vertex_split(cfg, gt)
        cursors = np.zeros(T, dtype=np.int64)
        alloc_array(ctx, A_RP, vc + 1, 3, cursors)
        alloc_array(ctx, A_CI, ec, 2, cursors)
        alloc_array(ctx, A_VA, ec, 2, cursors)
        alloc_array(ctx, A_OUT, vc * K if K else vc, 3, cursors)
        alloc_array(ctx, A_AUX, vc * K if K else vc, 2, cursors)
        for t in range(T):
            s, e = int(vstart[t]), int(vstart[t + 1])
            e0, e1 = int(gt.row_ptr[s]), int(gt.row_ptr[e])
            b = int(ctx.lay_base[A_RP, t]) >> 3
            ctx.mem64[b:b + (e - s) + 1] = gt.row_ptr[s:e + 1] - gt.row_ptr[s]
            b = int(ctx.lay_base[A_CI, t]) >> 2
            ctx.mem32[b:b + (e1 - e0)] = gt.col_idx[e0:e1]
            b = int(ctx.lay_base[A_VA, t]) >> 2
            ctx.memf32[b:b + (e1 - e0)] = gt.vals[e0:e1]
        op = _operand(ds, K)
        scatter(ctx, A_AUX, op.reshape(-1))
        ctx.ag[AG_APP] = APP_SPMM if K else APP_SPMV
        ctx.ag[AG_V] = gt.V
        ctx.ag[AG_K] = K

    def check(ctx, cfg, ds):
        g = ds.csr
        op = _operand(ds, K)
        if K:
            want = ds.oracle(("spmm", K), lambda: spmm_ref(g, op))
            got = gather(ctx, A_OUT, np.float64).reshape(-1, K)
        else:
            want = ds.oracle("spmv", lambda: spmv_ref(g, op))
            got = gather(ctx, A_OUT, np.float64)
        if np.allclose(got, want, rtol=1e-6, atol=1e-9):
            return True, f"{name}: product matches reference"
        bad = np.unravel_index(int(np.argmax(np.abs(got - want))), got.shape)
        return False, (f"{name}: mismatch at {bad}: "
                       f"got {got[bad]!r} want {want[bad]!r}")

    def finalize(ctx, cfg, ds, res):
        g = ds.csr
        t_s = res.runtime_cycles * int(ctx.cfgi[CI_NOC_PS]) * 1e-12
        m = int(g.E) * (K if K else 1)
        return {"time_s": t_s, "edges": m,
                "teps": m / t_s if t_s > 0 else 0.0,
                "gflops": 2.0 * m / t_s * 1e-9 if t_s > 0 else 0.0}

    return AppProgram(
        name=name, channels=channels, epoch_mode="none",
        plan=plan, setup=setup, finalize=finalize, check=check)
