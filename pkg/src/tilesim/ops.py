"""Application-facing operator tables compiled into the engine.

One engine binary serves every kernel: the task body, the payload
combine operator and the prefetch-address extractor are all single
compiled dispatchers switching on small integer codes (``ctx.ag`` slots
and the per-channel combine table), so nothing in the hot path is a
function value and the whole chain caches to disk once.
"""
from __future__ import annotations

import numpy as np
from numba import njit, types
from numba.extending import intrinsic
from llvmlite import ir

from .core import FD_KEY

# application ids (ctx.ag[AG_APP])
APP_BFS, APP_SSSP, APP_WCC, APP_PR, APP_SPMV, APP_SPMM, APP_FFT, APP_HIST = range(8)
APP_EMPTY = 8
APP_STREAM = 9

# global app arguments (ctx.ag slots)
AG_APP = 0      # application id
AG_MODE = 1     # traversal apps: 0 = asynchronous, 1 = per-epoch frontier
AG_V = 2        # vertex count
AG_ROOT = 3     # search root
AG_ITERS = 4    # fixed iteration count
AG_BINS = 5     # histogram bins
AG_SHIFT = 6    # histogram key shift (bin = key >> shift)
AG_N = 7        # spectral tensor edge size
AG_K = 8        # dense output columns
AG_DAMP = 9     # damping factor as float64 bits
AG_S_MODE = 10  # synthetic traffic pattern
AG_S_SRC = 11   # synthetic traffic source tile
AG_S_DEST = 12  # synthetic traffic destination tile
AG_S_COUNT = 13  # synthetic messages per source

# distributed array ids shared by the graph kernels
A_RP = 0    # row pointers, localized (tile-relative edge offsets), int64
A_CI = 1    # column indices, int32
A_VA = 2    # edge values, float32
A_OUT = 3   # per-vertex result (level / distance / label / rank / row)
A_AUX = 4   # per-vertex auxiliary (pending flag / accumulator / operand)
A_FL = 5    # pending-expansion ring, int32 vertex ids
A_FC = 6    # pending-expansion ring tail counter, one int64 per tile


# ------------------------------------------------------------ bit reinterp

@intrinsic
def f32_bits(typingctx, v):
    """float32 value -> its bit pattern as int64."""
    sig = types.int64(types.float32)

    def codegen(context, builder, signature, args):
        b = builder.bitcast(args[0], ir.IntType(32))
        return builder.zext(b, ir.IntType(64))
    return sig, codegen


@intrinsic
def bits_f32(typingctx, v):
    """low 32 bits of an int64 -> float32."""
    sig = types.float32(types.int64)

    def codegen(context, builder, signature, args):
        t = builder.trunc(args[0], ir.IntType(32))
        return builder.bitcast(t, ir.FloatType())
    return sig, codegen


@intrinsic
def f64_bits(typingctx, v):
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.IntType(64))
    return sig, codegen


@intrinsic
def bits_f64(typingctx, v):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.DoubleType())
    return sig, codegen


# ------------------------------------------------------------ address math

@njit(cache=True, nogil=True, inline="always")
def addr_of(ctx, aid, tl, i):
    """Address of element i of array aid, which tile tl owns."""
    return ctx.lay_base[aid, tl] + ((i - ctx.lay_start[aid, tl]) << ctx.lay_log2[aid])


# ------------------------------------------------------- builtin combiners

# channel combine operators (values stored in the channel table; 0 = not
# combinable, so every real operator is nonzero)
COMB_NONE = 0
COMB_MIN2_I64 = 1   # lexicographic min of (word0, word1)
COMB_MIN2_F32 = 2   # word0 holds float32 bits; min by value then word1
COMB_SUM_I64 = 3
COMB_SUM_F32 = 4
COMB_SUM_F64 = 5
COMB_SUM4_F64 = 6   # element-wise sum of four float64 words


@njit(cache=True, nogil=True)
def combine_op(op, dst, src):
    """Merge payload ``src`` into ``dst`` with the channel's operator."""
    if op == COMB_MIN2_I64:
        if src[0] < dst[0] or (src[0] == dst[0] and src[1] < dst[1]):
            dst[0] = src[0]
            dst[1] = src[1]
    elif op == COMB_MIN2_F32:
        a = bits_f32(src[0])
        b = bits_f32(dst[0])
        if a < b or (a == b and src[1] < dst[1]):
            dst[0] = src[0]
            dst[1] = src[1]
    elif op == COMB_SUM_I64:
        dst[0] += src[0]
    elif op == COMB_SUM_F32:
        dst[0] = f32_bits(bits_f32(dst[0]) + bits_f32(src[0]))
    elif op == COMB_SUM_F64:
        dst[0] = f64_bits(bits_f64(dst[0]) + bits_f64(src[0]))
    elif op == COMB_SUM4_F64:
        for i in range(4):
            dst[i] = f64_bits(bits_f64(dst[i]) + bits_f64(src[i]))


@njit(cache=True, nogil=True)
def app_extract(ctx, tl, ch, msg):
    """Address a delivered message will touch first (pointer prefetch)."""
    if ch != 0:
        return np.int64(-1)
    k = msg[FD_KEY]
    if k < 0:
        return np.int64(-1)
    a = ctx.ag[AG_APP]
    if a <= APP_WCC or a == APP_SPMV:
        return addr_of(ctx, A_OUT, tl, k)
    if a == APP_SPMM:
        return addr_of(ctx, A_OUT, tl, k * ctx.ag[AG_K])
    if a == APP_PR or a == APP_HIST:
        return addr_of(ctx, A_AUX, tl, k)
    return np.int64(-1)
