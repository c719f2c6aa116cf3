"""Flit-level interconnect model.

Dimension-ordered routing (X fully before Y) over a 2D mesh or folded 2D
torus, with optional chiplet-internal express links and waypoint-based
reduction trees for combinable channels. Routers have one finite FIFO per
(input port, logical channel); output ports arbitrate round robin or by
static priority and serialize multi-flit messages.

Column boundaries are crossed through timestamped rings with credit based
flow control. Credits return with a one cycle delay through parity-tagged
events, so the observable schedule does not depend on how columns are
grouped onto workers.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .core import (
    FD_RT, FD_DEST, FD_CHAN, FD_WORDS, FD_TS, FD_KEY, FD_ROW, FD_P0, FLD,
    P_PU, P_E, P_W, P_N, P_S, P_XE, P_XW, P_XN, P_XS,
    D_E, D_W, D_N, D_S, D_XE, D_XW, D_XN, D_XS,
    R_E, R_W, R_XE, R_XW,
    CI_W, CI_H, CI_NP, CI_NETS, CI_NC, CI_SLOTS, CI_STRIDE, CI_TOPO,
    CI_NODE_W, CI_NODE_H, CI_RT_DEG, CI_NOC_PS, CI_FLITB, CI_ARB, CI_RCAP,
    CI_PF,
    CT_HOP, CT_FLIT_HOP, CT_FLIT_HOP_X, CT_HOP_CHIP, CT_HOP_PKG, CT_HOP_NODE,
    CT_STALL_BP, CT_STALL_CONT, CT_INJ, CT_EJ, CT_MERGE, CT_MERGE_IQ, CT_RACT,
    CT_XBIT_CHIP, CT_XBIT_PKG, CT_XBIT_NODE, CT_Q_R, CT_SRAM_RB,
    CC_INJ, CC_EJ, CC_MERGE, CC_MERGE_IQ, CC_HOP, CC_FLIT_HOP,
    CC_HOP_CHIP, CC_HOP_PKG, CC_HOP_NODE, CC_STALL_BP, CC_STALL_CONT,
    WAKE_FAR,
    iq_push, cq_push, ceil_div,
)
from .memory import prefetch_line
from .ops import combine_op, app_extract

# output/move direction -> input port seen by the receiving router
_DIR_TO_INPORT = np.array([P_W, P_E, P_S, P_N, P_XW, P_XE, P_XS, P_XN],
                          dtype=np.int64)


@njit(cache=True, nogil=True, inline="always")
def sdist(a, b, node_len, torus):
    """Signed steps from coordinate a to b; positive ties break upward."""
    if torus and node_len > 2 and a // node_len == b // node_len:
        d = (b - a) % node_len
        if 2 * d <= node_len:
            return d
        return d - node_len
    return b - a


@njit(cache=True, nogil=True, inline="always")
def wrap_coord(v, node0, node_len, torus):
    if torus and node_len > 2:
        return node0 + (v - node0) % node_len
    return v


@njit(cache=True, nogil=True)
def route_dir(ctx, x, y, rt):
    """Next move for a message targeting tile rt from (x, y).

    Returns -1 to eject, else a D_* direction. X runs fully before Y;
    express links are taken while the remaining distance covers the stride.
    """
    w = ctx.cfgi[CI_W]
    tx = rt % w
    ty = rt // w
    torus = ctx.cfgi[CI_TOPO] == 1
    stride = ctx.cfgi[CI_STRIDE]
    if tx != x:
        dx = sdist(x, tx, ctx.cfgi[CI_NODE_W], torus)
        if dx > 0:
            if stride > 0 and dx >= stride and ctx.latm[D_XE, x] >= 0:
                return D_XE
            return D_E
        if stride > 0 and -dx >= stride and ctx.latm[D_XW, x] >= 0:
            return D_XW
        return D_W
    if ty != y:
        dy = sdist(y, ty, ctx.cfgi[CI_NODE_H], torus)
        if dy > 0:
            if stride > 0 and dy >= stride and ctx.latm[D_XN, y] >= 0:
                return D_XN
            return D_N
        if stride > 0 and -dy >= stride and ctx.latm[D_XS, y] >= 0:
            return D_XS
        return D_S
    return -1


@njit(cache=True, nogil=True)
def next_waypoint(ctx, cur, dest):
    """Next reduction-tree waypoint between cur and dest.

    Stages aggregate along the sender's row first, shrinking the X offset
    from the destination by the tree degree per stage, then walk the
    destination column the same way, so ~degree children converge per
    waypoint. A stage is an ordinary dimension-ordered unicast: the
    message leaves the network at the waypoint, combines in the channel
    queue there, and is re-injected toward the next stage. Row-only then
    column-only stages keep every path X-before-Y even when a full queue
    makes a message skip its stop, so waypointed traffic can never close
    a channel-dependency cycle that plain routing could not.
    """
    deg = ctx.cfgi[CI_RT_DEG]
    if deg < 4 or cur == dest:
        return dest
    w = ctx.cfgi[CI_W]
    torus = ctx.cfgi[CI_TOPO] == 1
    cx, cy = cur % w, cur // w
    dx_, dy_ = dest % w, dest // w
    nw = ctx.cfgi[CI_NODE_W]
    nh = ctx.cfgi[CI_NODE_H]
    offx = -sdist(cx, dx_, nw, torus)
    if offx != 0:
        qx = offx // deg if offx >= 0 else -((-offx) // deg)
        nx = wrap_coord(dx_ + qx, (dx_ // nw) * nw, nw, torus)
        wp = cy * w + nx
    else:
        offy = -sdist(cy, dy_, nh, torus)
        qy = offy // deg if offy >= 0 else -((-offy) // deg)
        ny = wrap_coord(dy_ + qy, (dy_ // nh) * nh, nh, torus)
        wp = ny * w + dx_
    if wp == cur:
        return dest
    return wp


@njit(cache=True, nogil=True, inline="always")
def post_credit(ctx, rid, row, ch, t):
    """Receiver freed one credited slot; sender may see it from t+1 on."""
    f = ctx.cred_freed[rid, row, ch]
    slots = ctx.cfgi[CI_SLOTS]
    ctx.cred_ev[rid, row, ch, f % slots] = ((t + 1) << 1) | ((f // slots) & 1)
    ctx.cred_freed[rid, row, ch] = f + 1
    # wake the router that consumes this ring's credits. May cross a worker
    # boundary, so it uses a parity-slot flag like the credit event itself:
    # all writers store the same byte and the owner reads it the next cycle
    ctx.ract[row * ctx.cfgi[CI_W] + (rid >> 2), (t + 1) & 1] = 1


@njit(cache=True, nogil=True)
def cred_avail(ctx, rid, row, ch, t):
    """Credits currently usable by the sender (acks events up to t-1)."""
    slots = ctx.cfgi[CI_SLOTS]
    ack = ctx.cred_ack[rid, row, ch]
    while True:
        ev = ctx.cred_ev[rid, row, ch, ack % slots]
        if ev == 0:
            break
        if (ev & 1) != ((ack // slots) & 1):
            break
        if (ev >> 1) - 1 > t - 1:
            break
        ack += 1
    ctx.cred_ack[rid, row, ch] = ack
    return ctx.cred_cap[rid] - (ctx.cred_sent[rid, row, ch] - ack)


@njit(cache=True, nogil=True)
def rbuf_find_merge(ctx, tl, pt, ch, dest, key):
    if key < 0 or ctx.chancomb[ch] == 0:
        return -1
    n = ctx.rbufn[tl, pt, ch]
    h = ctx.rbufh[tl, pt, ch]
    slots = ctx.cfgi[CI_SLOTS]
    for k in range(n):
        s = (h + k) % slots
        if (ctx.rbuf[tl, pt, ch, s, FD_KEY] == key
                and ctx.rbuf[tl, pt, ch, s, FD_DEST] == dest):
            return s
    return -1


@njit(cache=True, nogil=True)
def rbuf_insert(ctx, tl, pt, ch, msg, ts, crid, tnz):
    """Insert into a router input FIFO, combining when possible.

    Returns 1 if the message merged into a waiting one (no slot consumed),
    else 0. The caller guarantees a free slot otherwise. ``crid``: ring
    whose credit the stored message holds, -1 if none. ``tnz``: first cycle
    whose router pass can observe the insert; it reschedules a sleeping
    router and anchors the occupancy accounting.
    """
    s = rbuf_find_merge(ctx, tl, pt, ch, msg[FD_DEST], msg[FD_KEY])
    col = tl % ctx.cfgi[CI_W]
    if s >= 0:
        combine_op(ctx.chancomb[ch], ctx.rbuf[tl, pt, ch, s, FD_P0:], msg[FD_P0:])
        if ts > ctx.rbuf[tl, pt, ch, s, FD_TS]:
            ctx.rbuf[tl, pt, ch, s, FD_TS] = ts
        ctx.ctr[tl, CT_MERGE] += 1
        ctx.ctr_col[col, ch, CC_MERGE] += 1
        if tnz < ctx.rwake[tl]:
            ctx.rwake[tl] = tnz
        return 1
    n = ctx.rbufn[tl, pt, ch]
    slots = ctx.cfgi[CI_SLOTS]
    s = (ctx.rbufh[tl, pt, ch] + n) % slots
    for f in range(FLD):
        ctx.rbuf[tl, pt, ch, s, f] = msg[f]
    ctx.rbuf[tl, pt, ch, s, FD_TS] = ts
    ctx.rbuf[tl, pt, ch, s, FD_ROW] = crid
    ctx.rbufn[tl, pt, ch] = n + 1
    ctx.rbuft[tl] += 1
    if ctx.rbuft[tl] == 1 and tnz < ctx.rbnz[tl]:
        ctx.rbnz[tl] = tnz
    wk = ceil_div(ts, ctx.cfgi[CI_NOC_PS])
    if wk < tnz:
        wk = tnz
    if wk < ctx.rwake[tl]:
        ctx.rwake[tl] = wk
    return 0


@njit(cache=True, nogil=True)
def cq_find_merge(ctx, tl, ch, dest, key):
    """Waiting channel-queue entry a tree message can combine into."""
    if key < 0 or ctx.chancomb[ch] == 0:
        return -1
    n = ctx.cqn[tl, ch]
    h = ctx.cqh[tl, ch]
    cap = ctx.cq.shape[2]
    for k in range(n):
        s = (h + k) % cap
        if ctx.cq[tl, ch, s, FD_KEY] == key and ctx.cq[tl, ch, s, FD_DEST] == dest:
            return s
    return -1


@njit(cache=True, nogil=True)
def iq_can_accept(ctx, tl, ch, dest, key):
    if ctx.iqn[tl, ch] < ctx.qcap[0, ch]:
        return True
    if key < 0 or ctx.chancomb[ch] == 0:
        return False
    n = ctx.iqn[tl, ch]
    h = ctx.iqh[tl, ch]
    cap = ctx.iq.shape[2]
    for k in range(n):
        s = (h + k) % cap
        if ctx.iq[tl, ch, s, FD_KEY] == key and ctx.iq[tl, ch, s, FD_DEST] == dest:
            return True
    return False


@njit(cache=True, nogil=True)
def iq_insert(ctx, tl, ch, msg, ts, t):
    """Deliver into an input queue; merges with a waiting task if keys match."""
    msg[FD_TS] = ts
    if t + 1 < ctx.ewake[tl]:
        ctx.ewake[tl] = t + 1
    s = iq_push(ctx, tl, ch, msg, tl % ctx.cfgi[CI_W])
    col = tl % ctx.cfgi[CI_W]
    if s >= 0:
        combine_op(ctx.chancomb[ch], ctx.iq[tl, ch, s, FD_P0:], msg[FD_P0:])
        if ts > ctx.iq[tl, ch, s, FD_TS]:
            ctx.iq[tl, ch, s, FD_TS] = ts
        ctx.ctr[tl, CT_MERGE_IQ] += 1
        ctx.ctr_col[col, ch, CC_MERGE_IQ] += 1
        return 1
    if ctx.cfgi[CI_PF] == 2:
        addr = app_extract(ctx, tl, ch, msg)
        if addr >= 0:
            prefetch_line(ctx, tl, addr, ts)
    return 0


@njit(cache=True, nogil=True)
def router_phase(ctx, w, c0, c1, t):
    """One router cycle for columns [c0, c1)."""
    noc_ps = ctx.cfgi[CI_NOC_PS]
    t_ps = t * noc_ps
    W = ctx.cfgi[CI_W]
    H = ctx.cfgi[CI_H]
    NP = ctx.cfgi[CI_NP]
    NETS = ctx.cfgi[CI_NETS]
    NC = ctx.cfgi[CI_NC]
    SLOTS = ctx.cfgi[CI_SLOTS]
    RCAP = ctx.cfgi[CI_RCAP]
    flitb = ctx.cfgi[CI_FLITB]
    rr = ctx.cfgi[CI_ARB] == 0
    nin = NP * NC
    # dirof[p*NC+ch] holds the head's output direction (-1 eject, D_*
    # otherwise) or -9 when that input has no arrived head; navail[d+1]
    # counts live candidates per direction so empty outputs skip fast
    dirof = np.empty(nin, dtype=np.int64)
    navail = np.empty(NP + 1, dtype=np.int64)
    lastact = ctx.lastact[w]
    # bubble rule: on torus rings a message entering the ring axis must
    # leave one slot free downstream, which keeps the ring deadlock free
    bub_x = ctx.cfgi[CI_TOPO] == 1 and ctx.cfgi[CI_NODE_W] > 2
    bub_y = ctx.cfgi[CI_TOPO] == 1 and ctx.cfgi[CI_NODE_H] > 2

    for c in range(c0, c1):
        # 1. drain boundary rings feeding this column
        for i in range(6):
            rid = ctx.rin[c, i]
            if rid < 0:
                break
            pbase = ctx.rin_port[c, i]
            rd = ctx.ring_rd[rid]
            wr = ctx.ring_wr[rid]
            while rd < wr and ctx.ring[rid, rd % RCAP, FD_TS] <= t_ps:
                m = ctx.ring[rid, rd % RCAP]
                row = m[FD_ROW]
                ch = m[FD_CHAN]
                tl = row * W + c
                net = ch % NETS
                merged = rbuf_insert(ctx, tl, net * NP + pbase, ch, m,
                                     m[FD_TS], rid, t)
                if merged:
                    post_credit(ctx, rid, row, ch, t)
                rd += 1
            ctx.ring_rd[rid] = rd

        # 2. per-router switching, fixed row order inside the column
        for y in range(H):
            tl = y * W + c
            if ctx.ract[tl, t & 1] == 0 and ctx.rwake[tl] > t:
                continue
            ctx.ract[tl, t & 1] = 0
            # bill cycles slept through at the stall pattern frozen when the
            # router last ran; sleep is only entered when no head can move
            # until a wake poke arrives, so the pattern cannot have changed
            slept = t - ctx.rvis[tl]
            if slept > 0:
                for ch in range(NC):
                    b = ctx.rsbp[tl, ch]
                    if b != 0:
                        ctx.ctr[tl, CT_STALL_BP] += b * slept
                        ctx.ctr_col[c, ch, CC_STALL_BP] += b * slept
                    b = ctx.rscont[tl, ch]
                    if b != 0:
                        ctx.ctr[tl, CT_STALL_CONT] += b * slept
                        ctx.ctr_col[c, ch, CC_STALL_CONT] += b * slept
                if ctx.rsract[tl] != 0:
                    ctx.ctr[tl, CT_RACT] += slept
                elif ctx.rbnz[tl] < t:
                    a0 = ctx.rbnz[tl]
                    if a0 < ctx.rvis[tl]:
                        a0 = ctx.rvis[tl]
                    ctx.ctr[tl, CT_RACT] += t - a0
            for ch in range(NC):
                ctx.rsbp[tl, ch] = 0
                ctx.rscont[tl, ch] = 0
            moved = False
            nwake = WAKE_FAR
            if ctx.rbuft[tl] > 0:
                ctx.ctr[tl, CT_RACT] += 1
            for net in range(NETS):
                # inject: one message per cycle from the channel queues
                if ctx.cqtot[tl] > 0 and ctx.ibusy[tl, net] > t_ps:
                    wk = ceil_div(ctx.ibusy[tl, net], noc_ps)
                    if wk < nwake:
                        nwake = wk
                if ctx.ibusy[tl, net] <= t_ps and ctx.cqtot[tl] > 0:
                    p0 = ctx.rr_cq[tl, net]
                    for k in range(NC):
                        ch = (p0 + k) % NC
                        if ch % NETS != net or ctx.cqn[tl, ch] == 0:
                            continue
                        m = ctx.cq[tl, ch, ctx.cqh[tl, ch]]
                        if m[FD_TS] > t_ps:
                            wk = ceil_div(m[FD_TS], noc_ps)
                            if wk < nwake:
                                nwake = wk
                            continue
                        pt = net * NP + P_PU
                        smerge = rbuf_find_merge(ctx, tl, pt, ch,
                                                 m[FD_DEST], m[FD_KEY])
                        if smerge < 0 and ctx.rbufn[tl, pt, ch] >= SLOTS:
                            ctx.ctr[tl, CT_STALL_BP] += 1
                            ctx.ctr_col[c, ch, CC_STALL_BP] += 1
                            ctx.rsbp[tl, ch] += 1
                            continue
                        rbuf_insert(ctx, tl, pt, ch, m, t_ps, -1, t + 1)
                        ctx.cqh[tl, ch] = (ctx.cqh[tl, ch] + 1) % ctx.cq.shape[2]
                        ctx.cqn[tl, ch] -= 1
                        ctx.cqtot[tl] -= 1
                        if t + 1 < ctx.ewake[tl]:
                            ctx.ewake[tl] = t + 1
                        moved = True
                        words = m[FD_WORDS]
                        ctx.ibusy[tl, net] = t_ps + words * noc_ps
                        ctx.ctr[tl, CT_INJ] += 1
                        ctx.ctr_col[c, ch, CC_INJ] += 1
                        ctx.ctr[tl, CT_Q_R] += 1
                        ctx.ctr[tl, CT_SRAM_RB] += words * flitb
                        if rr:
                            ctx.rr_cq[tl, net] = (ch + 1) % NC
                        break

                if ctx.rbuft[tl] == 0:
                    continue
                # collect switch candidates: FIFO heads that have arrived
                ncand = 0
                for d in range(NP + 1):
                    navail[d] = 0
                for p in range(NP):
                    pt = net * NP + p
                    for ch in range(NC):
                        if ctx.rbufn[tl, pt, ch] == 0:
                            dirof[p * NC + ch] = -9
                            continue
                        h = ctx.rbufh[tl, pt, ch]
                        if ctx.rbuf[tl, pt, ch, h, FD_TS] > t_ps:
                            wk = ceil_div(ctx.rbuf[tl, pt, ch, h, FD_TS], noc_ps)
                            if wk < nwake:
                                nwake = wk
                            dirof[p * NC + ch] = -9
                            continue
                        d = route_dir(ctx, c, y, ctx.rbuf[tl, pt, ch, h, FD_RT])
                        dirof[p * NC + ch] = d
                        navail[d + 1] += 1
                        ncand += 1
                if ncand == 0:
                    continue

                for o in range(NP):
                    od = o - 1   # o=0 ejects, else direction index
                    if navail[od + 1] == 0:
                        continue
                    opt = net * NP + o
                    if ctx.obusy[tl, opt] > t_ps:
                        wk = ceil_div(ctx.obusy[tl, opt], noc_ps)
                        if wk < nwake:
                            nwake = wk
                        for idx in range(nin):
                            if dirof[idx] == od:
                                ctx.ctr[tl, CT_STALL_CONT] += 1
                                ctx.ctr_col[c, idx % NC, CC_STALL_CONT] += 1
                                ctx.rscont[tl, idx % NC] += 1
                        continue
                    start = ctx.rr_out[tl, opt] if rr else 0
                    granted = -1
                    for k0 in range(nin):
                        idx = (start + k0) % nin
                        if dirof[idx] != od:
                            continue
                        p = idx // NC
                        ch = idx % NC
                        pt = net * NP + p
                        h = ctx.rbufh[tl, pt, ch]
                        m = ctx.rbuf[tl, pt, ch, h]
                        words = m[FD_WORDS]
                        if od < 0:
                            if m[FD_DEST] == tl:
                                ok = iq_can_accept(ctx, tl, ch, m[FD_DEST],
                                                   m[FD_KEY])
                            else:
                                # waypoint stop: needs queue space or a merge
                                # partner; when refused the message carries on
                                # toward the next stage instead of blocking
                                ok = (ctx.cqn[tl, ch] < ctx.qcap[1, ch]
                                      or cq_find_merge(ctx, tl, ch, m[FD_DEST],
                                                       m[FD_KEY]) >= 0)
                                if not ok:
                                    m[FD_RT] = next_waypoint(ctx, tl,
                                                             m[FD_DEST])
                                    moved = True
                        elif od == D_N or od == D_S or od == D_XN or od == D_XS:
                            step = 1 if (od == D_N or od == D_S) else ctx.cfgi[CI_STRIDE]
                            sgn = 1 if (od == D_N or od == D_XN) else -1
                            nh = ctx.cfgi[CI_NODE_H]
                            ny = wrap_coord(y + sgn * step, (y // nh) * nh, nh,
                                            ctx.cfgi[CI_TOPO] == 1)
                            dtl = ny * W + c
                            dpt = net * NP + _DIR_TO_INPORT[od]
                            need = 1
                            if bub_y and p != _DIR_TO_INPORT[od]:
                                need = 2
                            ok = (ctx.rbufn[dtl, dpt, ch] <= SLOTS - need
                                  or rbuf_find_merge(ctx, dtl, dpt, ch,
                                                     m[FD_DEST], m[FD_KEY]) >= 0)
                        else:
                            if od == D_E:
                                rid = 4 * c + R_E
                            elif od == D_W:
                                rid = 4 * c + R_W
                            elif od == D_XE:
                                rid = 4 * c + R_XE
                            else:
                                rid = 4 * c + R_XW
                            need = 1
                            if bub_x and p != _DIR_TO_INPORT[od]:
                                need = 2
                            ok = cred_avail(ctx, rid, y, ch, t) >= need
                        if not ok:
                            ctx.ctr[tl, CT_STALL_BP] += 1
                            ctx.ctr_col[c, ch, CC_STALL_BP] += 1
                            ctx.rsbp[tl, ch] += 1
                            continue
                        granted = idx
                        break
                    if granted < 0:
                        continue
                    # move the granted head; its physical input port is
                    # spent for this cycle, all its channels included
                    idx = granted
                    pbase = (idx // NC) * NC
                    for j in range(pbase, pbase + NC):
                        d = dirof[j]
                        if d > -9:
                            navail[d + 1] -= 1
                            dirof[j] = -9
                    p = idx // NC
                    ch = idx % NC
                    pt = net * NP + p
                    h = ctx.rbufh[tl, pt, ch]
                    m = ctx.rbuf[tl, pt, ch, h]
                    words = m[FD_WORDS]
                    crid = m[FD_ROW]
                    ctx.rbufh[tl, pt, ch] = (h + 1) % SLOTS
                    ctx.rbufn[tl, pt, ch] -= 1
                    ctx.rbuft[tl] -= 1
                    moved = True
                    if crid >= 0:
                        post_credit(ctx, crid, y, ch, t)
                    if p == P_N or p == P_S or p == P_XN or p == P_XS:
                        # a freed slot may unblock the upstream router that
                        # feeds this port; it reconsiders the cycle it can
                        # first observe the space
                        ustep = 1 if (p == P_N or p == P_S) else ctx.cfgi[CI_STRIDE]
                        if p == P_S or p == P_XS:
                            ustep = -ustep
                        nh = ctx.cfgi[CI_NODE_H]
                        uy = wrap_coord(y + ustep, (y // nh) * nh, nh,
                                        ctx.cfgi[CI_TOPO] == 1)
                        if 0 <= uy < H and uy != y:
                            utl = uy * W + c
                            wk = t if uy > y else t + 1
                            if wk < ctx.rwake[utl]:
                                ctx.rwake[utl] = wk
                    if rr:
                        ctx.rr_out[tl, opt] = (idx + 1) % nin
                    if od < 0:
                        ser = words
                        ctx.obusy[tl, opt] = t_ps + ser * noc_ps
                        ats = (t + 1) * noc_ps
                        if m[FD_DEST] != tl:
                            # tree stage done: combine with a waiting entry
                            # or queue a fresh injection to the next stage
                            s = cq_find_merge(ctx, tl, ch, m[FD_DEST],
                                              m[FD_KEY])
                            if s >= 0:
                                combine_op(ctx.chancomb[ch],
                                           ctx.cq[tl, ch, s, FD_P0:],
                                           m[FD_P0:])
                                if ats > ctx.cq[tl, ch, s, FD_TS]:
                                    ctx.cq[tl, ch, s, FD_TS] = ats
                                ctx.ctr[tl, CT_MERGE] += 1
                                ctx.ctr_col[c, ch, CC_MERGE] += 1
                            else:
                                m[FD_RT] = next_waypoint(ctx, tl, m[FD_DEST])
                                m[FD_TS] = ats
                                cq_push(ctx, tl, ch, m)
                                ctx.cqtot[tl] += 1
                                ctx.ctr[tl, CT_EJ] += 1
                                ctx.ctr_col[c, ch, CC_EJ] += 1
                        else:
                            iq_insert(ctx, tl, ch, m, ats, t)
                            ctx.ctr[tl, CT_EJ] += 1
                            ctx.ctr_col[c, ch, CC_EJ] += 1
                        if ats // noc_ps > lastact:
                            lastact = ats // noc_ps
                        continue
                    coord = c if (od == D_E or od == D_W or od == D_XE or od == D_XW) else y
                    lat = ctx.latm[od, coord]
                    bc = ctx.bcm[od, coord]
                    ebit = ctx.ebitm[od, coord]
                    ser = ceil_div(words * flitb, ebit)
                    ctx.obusy[tl, opt] = t_ps + ser * noc_ps
                    ats = t_ps + lat
                    ctx.ctr[tl, CT_HOP] += 1
                    ctx.ctr[tl, CT_FLIT_HOP] += words
                    if od >= D_XE:
                        ctx.ctr[tl, CT_FLIT_HOP_X] += words
                    ctx.ctr_col[c, ch, CC_HOP] += 1
                    ctx.ctr_col[c, ch, CC_FLIT_HOP] += words
                    if bc == 1:
                        ctx.ctr[tl, CT_HOP_CHIP] += 1
                        ctx.ctr_col[c, ch, CC_HOP_CHIP] += 1
                        ctx.ctr[tl, CT_XBIT_CHIP] += words * flitb
                    elif bc == 2:
                        ctx.ctr[tl, CT_HOP_PKG] += 1
                        ctx.ctr_col[c, ch, CC_HOP_PKG] += 1
                        ctx.ctr[tl, CT_XBIT_PKG] += words * flitb
                    elif bc == 3:
                        ctx.ctr[tl, CT_HOP_NODE] += 1
                        ctx.ctr_col[c, ch, CC_HOP_NODE] += 1
                        ctx.ctr[tl, CT_XBIT_NODE] += words * flitb
                    if ats // noc_ps > lastact:
                        lastact = ats // noc_ps
                    if od == D_N or od == D_S or od == D_XN or od == D_XS:
                        step = 1 if (od == D_N or od == D_S) else ctx.cfgi[CI_STRIDE]
                        sgn = 1 if (od == D_N or od == D_XN) else -1
                        nh = ctx.cfgi[CI_NODE_H]
                        ny = wrap_coord(y + sgn * step, (y // nh) * nh, nh,
                                        ctx.cfgi[CI_TOPO] == 1)
                        dtl = ny * W + c
                        dpt = net * NP + _DIR_TO_INPORT[od]
                        rbuf_insert(ctx, dtl, dpt, ch, m, ats, -1,
                                    t if ny > y else t + 1)
                    else:
                        if od == D_E:
                            rid = 4 * c + R_E
                        elif od == D_W:
                            rid = 4 * c + R_W
                        elif od == D_XE:
                            rid = 4 * c + R_XE
                        else:
                            rid = 4 * c + R_XW
                        wr = ctx.ring_wr[rid]
                        slot = wr % RCAP
                        for f in range(FLD):
                            ctx.ring[rid, slot, f] = m[f]
                        ctx.ring[rid, slot, FD_TS] = ats
                        ctx.ring[rid, slot, FD_ROW] = y
                        ctx.ring_wr[rid] = wr + 1
                        ctx.cred_sent[rid, y, ch] += 1

            # schedule the next visit. Anything that moved keeps the router
            # hot one more cycle; otherwise it sleeps until the earliest
            # known event, trusting pokes for space and credit changes
            if moved:
                nwake = t + 1
            ctx.rwake[tl] = nwake
            ctx.rvis[tl] = t + 1
            if ctx.rbuft[tl] > 0:
                ctx.rsract[tl] = 1
            else:
                ctx.rsract[tl] = 0
                ctx.rbnz[tl] = WAKE_FAR
    ctx.lastact[w] = lastact
