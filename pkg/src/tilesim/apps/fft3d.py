"""Distributed 3D FFT over an n-cube of complex values on an n x n grid.

Tile (r, c) starts with the pencil data[c, r, :]. Three radix-2 stages
with two all-to-all transposes between them: transform along z, exchange
within grid columns, transform along y, exchange within grid rows,
transform along x. Tile (a, b) ends holding spectrum[:, b, a].
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..arch import ConfigError
from ..core import TID_INIT, TID_EPOCH, FD_P0, CI_W, CI_NOC_PS
from .common import (
    APP0, APP_FFT, AG_APP, AG_N,
    AppProgram, Channel,
    add_cycles, ldf64, stf64, f64_bits, bits_f64, emit,
    alloc_array,
)
from .graphs import make_plan

A_B0 = 0    # stage buffers: interleaved re/im, 2n float64 per tile
A_B1 = 1
A_B2 = 2

F_C1 = APP0        # first-transpose arrivals
F_C2 = APP0 + 1    # second-transpose arrivals

CH_T1 = 0
CH_T2 = 1

CHANNELS = [Channel(3), Channel(3)]


# ------------------------------------------------------------ compiled body

@njit(cache=True, nogil=True)
def _fft_pencil(ctx, tl, aid, n, start):
    """In-place forward radix-2 FFT of the tile's 2n-element buffer."""
    base = ctx.lay_start[aid, tl]
    # bit-reversal permutation
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        add_cycles(ctx, tl, 3, 0, 1)
        if i < j:
            ia = addr_of2(ctx, aid, tl, base + 2 * i)
            ja = addr_of2(ctx, aid, tl, base + 2 * j)
            ar = ldf64(ctx, tl, ia, start)
            ai = ldf64(ctx, tl, ia + 8, start)
            br = ldf64(ctx, tl, ja, start)
            bi = ldf64(ctx, tl, ja + 8, start)
            stf64(ctx, tl, ia, br, start)
            stf64(ctx, tl, ia + 8, bi, start)
            stf64(ctx, tl, ja, ar, start)
            stf64(ctx, tl, ja + 8, ai, start)
    length = 2
    while length <= n:
        half = length >> 1
        ang = -2.0 * math.pi / length
        wr0 = math.cos(ang)
        wi0 = math.sin(ang)
        add_cycles(ctx, tl, 1, 8, 0)
        i0 = 0
        while i0 < n:
            wr = 1.0
            wi = 0.0
            for k in range(half):
                ia = addr_of2(ctx, aid, tl, base + 2 * (i0 + k))
                ib = addr_of2(ctx, aid, tl, base + 2 * (i0 + k + half))
                ar = ldf64(ctx, tl, ia, start)
                ai = ldf64(ctx, tl, ia + 8, start)
                br = ldf64(ctx, tl, ib, start)
                bi = ldf64(ctx, tl, ib + 8, start)
                tr = br * wr - bi * wi
                ti = br * wi + bi * wr
                stf64(ctx, tl, ia, ar + tr, start)
                stf64(ctx, tl, ia + 8, ai + ti, start)
                stf64(ctx, tl, ib, ar - tr, start)
                stf64(ctx, tl, ib + 8, ai - ti, start)
                nwr = wr * wr0 - wi * wi0
                wi = wr * wi0 + wi * wr0
                wr = nwr
                add_cycles(ctx, tl, 3, 10, 1)
            i0 += length
        length <<= 1


@njit(cache=True, nogil=True, inline="always")
def addr_of2(ctx, aid, tl, i):
    return ctx.lay_base[aid, tl] + ((i - ctx.lay_start[aid, tl]) << 3)


@njit(cache=True, nogil=True)
def _fft_scatter(ctx, tl, p, start, aid, ch, n):
    """Send every element of the freshly transformed pencil to its next
    owner; the index at the receiver rides in the third payload word."""
    W = ctx.cfgi[CI_W]
    r = tl // W
    c = tl % W
    base = ctx.lay_start[aid, tl]
    for z in range(n):
        ea = addr_of2(ctx, aid, tl, base + 2 * z)
        re = ldf64(ctx, tl, ea, start)
        im = ldf64(ctx, tl, ea + 8, start)
        if ch == CH_T1:
            dest = z * W + c
            idx = r
        else:
            dest = r * W + z
            idx = c
        emit(ctx, tl, p, start, dest, ch, -1,
             f64_bits(re), f64_bits(im), idx, 0)
        add_cycles(ctx, tl, 2, 0, 1)


@njit(cache=True, nogil=True)
def fft3d_body(ctx, tl, p, chan, msg, start):
    n = ctx.ag[AG_N]
    if chan == TID_INIT:
        _fft_pencil(ctx, tl, A_B0, n, start)
        _fft_scatter(ctx, tl, p, start, A_B0, CH_T1, n)
    elif chan == TID_EPOCH:
        pass
    elif chan == CH_T1:
        idx = msg[FD_P0 + 2]
        base = ctx.lay_start[A_B1, tl]
        ea = addr_of2(ctx, A_B1, tl, base + 2 * idx)
        stf64(ctx, tl, ea, bits_f64(msg[FD_P0]), start)
        stf64(ctx, tl, ea + 8, bits_f64(msg[FD_P0 + 1]), start)
        add_cycles(ctx, tl, 2, 0, 1)
        cnt = ctx.eng[tl, F_C1] + 1
        ctx.eng[tl, F_C1] = cnt
        if cnt == n:
            _fft_pencil(ctx, tl, A_B1, n, start)
            _fft_scatter(ctx, tl, p, start, A_B1, CH_T2, n)
    else:
        idx = msg[FD_P0 + 2]
        base = ctx.lay_start[A_B2, tl]
        ea = addr_of2(ctx, A_B2, tl, base + 2 * idx)
        stf64(ctx, tl, ea, bits_f64(msg[FD_P0]), start)
        stf64(ctx, tl, ea + 8, bits_f64(msg[FD_P0 + 1]), start)
        add_cycles(ctx, tl, 2, 0, 1)
        cnt = ctx.eng[tl, F_C2] + 1
        ctx.eng[tl, F_C2] = cnt
        if cnt == n:
            _fft_pencil(ctx, tl, A_B2, n, start)


# ------------------------------------------------------- host-side program

def make_fft3d(opts=None):
    def _tensor(ds):
        if getattr(ds, "kind", None) != "tensor":
            raise ConfigError("fft3d needs a tensor dataset (fft<n>)")
        return ds

    def plan(cfg, ds):
        t = _tensor(ds)
        n = t.n
        if cfg.grid_w != n or cfg.grid_h != n:
            raise ConfigError(
                f"fft3d: edge {n} tensor needs an {n}x{n} grid, "
                f"not {cfg.grid_w}x{cfg.grid_h}")
        counts = np.full(cfg.n_tiles, 2 * n, dtype=np.int64)
        lay = [(A_B0, counts, 3), (A_B1, counts, 3), (A_B2, counts, 3)]
        caps = [max(cfg.cq_capacity_default, n)] * 2
        return make_plan(cfg, lay, CHANNELS, "fft3d", cq_caps=caps)

    def setup(ctx, cfg, ds):
        t = _tensor(ds)
        n = t.n
        T = cfg.n_tiles
        counts = np.full(T, 2 * n, dtype=np.int64)
        cursors = np.zeros(T, dtype=np.int64)
        for aid in (A_B0, A_B1, A_B2):
            alloc_array(ctx, aid, counts, 3, cursors)
        for tl in range(T):
            r, c = tl // n, tl % n
            pencil = t.data[c, r, :]
            b = int(ctx.lay_base[A_B0, tl]) >> 3
            ctx.memf64[b:b + 2 * n:2] = pencil.real
            ctx.memf64[b + 1:b + 2 * n:2] = pencil.imag
        ctx.ag[AG_APP] = APP_FFT
        ctx.ag[AG_N] = n

    def check(ctx, cfg, ds):
        t = _tensor(ds)
        n = t.n
        want = t.oracle("fftn", lambda: np.fft.fftn(t.data))
        got = np.empty((n, n, n), dtype=np.complex128)
        for tl in range(cfg.n_tiles):
            a, b_ = tl // n, tl % n
            base = int(ctx.lay_base[A_B2, tl]) >> 3
            got[:, b_, a] = (ctx.memf64[base:base + 2 * n:2]
                             + 1j * ctx.memf64[base + 1:base + 2 * n:2])
        scale = float(np.abs(want).max())
        if np.allclose(got, want, rtol=1e-6, atol=1e-6 * max(scale, 1.0)):
            return True, "fft3d: spectrum matches reference"
        bad = np.unravel_index(int(np.argmax(np.abs(got - want))), got.shape)
        return False, (f"fft3d: mismatch at {bad}: "
                       f"got {got[bad]!r} want {want[bad]!r}")

    def finalize(ctx, cfg, ds, res):
        t = _tensor(ds)
        n = t.n
        t_s = res.runtime_cycles * int(ctx.cfgi[CI_NOC_PS]) * 1e-12
        from ..core import CT_INSTR_FP
        fp = int(ctx.ctr[:, CT_INSTR_FP].sum())
        return {"time_s": t_s, "elements": n ** 3,
                "elems_per_s": n ** 3 / t_s if t_s > 0 else 0.0,
                "gflops": fp / t_s * 1e-9 if t_s > 0 else 0.0}

    return AppProgram(
        name="fft3d", channels=CHANNELS, epoch_mode="none",
        plan=plan, setup=setup, finalize=finalize, check=check)
