"""Task execution and the parallel simulation driver.

Each cycle has two phases. The execution phase runs task bodies on PUs
whose clock has not passed the cycle boundary; bodies are atomic, their
emissions are staged per PU and drained into the local input queue or the
outbound channel queues, blocking the PU while queues are full. The router
phase then moves messages one switch step.

Workers own contiguous column ranges and synchronize through published
per-worker clocks: a worker may simulate cycle t once every interacting
worker has finished t-1. All cross-column effects ride timestamped rings
(see noc.py), so results are identical for any worker count.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .arch import MachineConfig, ConfigError, SPM_SCRATCHPAD
from .core import (
    Ctx, build_ctx, sched_yield, ceil_div, iq_pop, cq_push,
    FD_RT, FD_DEST, FD_CHAN, FD_WORDS, FD_TS, FD_KEY, FD_ROW, FD_P0, FLD,
    TID_INIT, TID_EPOCH,
    CI_W, CI_H, CI_NC, CI_P, CI_NOC_PS, CI_PU_PS, CI_TSU, CI_TSU_THR,
    CI_STCAP, CI_CACHE,
    CT_STALL_BP, CT_PUACT_PS, CT_INSTR_INT, CT_TASKS,
    EN_ACC, EN_ERR, EN_ERRA, EN_ERRB, EN_FRONTIER,
    ERR_NONE, ERR_REMOTE, ERR_ADDR, ERR_STAGE,
    GM_EPOCH, GM_KERNEL, GM_BARRIER_PS, WAKE_FAR,
)
from .noc import router_phase
from .apps import app_body


class SimulationError(RuntimeError):
    """A task body hit a hard error (remote scratchpad access etc.)."""


class StuckError(RuntimeError):
    """No quiescence and no progress: the machine is wedged."""


# ------------------------------------------------------------------ exec jit

@njit(cache=True, nogil=True)
def drain_stage(ctx, w, tl, p, t):
    """Move staged emissions into the channel queues. Local-destination
    traffic loops through the router and ejects like any other message,
    so a single budget read of cq free space bounds every emission and a
    task can never wedge itself against its own input queue. Stops at the
    first full queue; the PU stays blocked until the stage is empty."""
    r = ctx.stager[tl, p]
    n = ctx.stagen[tl, p]
    noc_ps = ctx.cfgi[CI_NOC_PS]
    while r < n:
        m = ctx.stage[tl, p, r]
        ch = m[FD_CHAN]
        if ctx.cqn[tl, ch] >= ctx.qcap[1, ch]:
            break
        cq_push(ctx, tl, ch, m)
        ctx.cqtot[tl] += 1
        wk = ceil_div(m[FD_TS], noc_ps)
        if wk < t:
            wk = t
        if wk < ctx.rwake[tl]:
            ctx.rwake[tl] = wk
        r += 1
    if r >= n:
        ctx.stager[tl, p] = 0
        ctx.stagen[tl, p] = 0
    else:
        ctx.stager[tl, p] = r


@njit(cache=True, nogil=True)
def tsu_pick(ctx, tl, t_ps):
    """Choose the next input queue to serve; head-of-queue readiness only."""
    nc = ctx.cfgi[CI_NC]
    pol = ctx.cfgi[CI_TSU]
    if pol == 1:
        for i in range(nc):
            ch = ctx.tsu_prio[i]
            if ctx.iqn[tl, ch] > 0 and ctx.iq[tl, ch, ctx.iqh[tl, ch], FD_TS] <= t_ps:
                return ch
        return -1
    cur = ctx.tsu_cur[tl]
    first = -1
    for k in range(nc):
        ch = (cur + k) % nc
        if ctx.iqn[tl, ch] > 0 and ctx.iq[tl, ch, ctx.iqh[tl, ch], FD_TS] <= t_ps:
            if pol == 0:
                ctx.tsu_cur[tl] = (ch + 1) % nc
                return ch
            if first < 0:
                first = ch
            if ctx.iqn[tl, ch] >= ctx.cfgi[CI_TSU_THR]:
                ctx.tsu_cur[tl] = (ch + 1) % nc
                return ch
    if first >= 0:
        ctx.tsu_cur[tl] = (first + 1) % nc
    return first


@njit(cache=True, nogil=True)
def exec_phase(ctx, w, c0, c1, t, local_epochs):
    noc_ps = ctx.cfgi[CI_NOC_PS]
    pu_ps = ctx.cfgi[CI_PU_PS]
    t_ps = t * noc_ps
    W = ctx.cfgi[CI_W]
    H = ctx.cfgi[CI_H]
    P = ctx.cfgi[CI_P]
    NC = ctx.cfgi[CI_NC]
    for c in range(c0, c1):
        for y in range(H):
            tl = y * W + c
            if ctx.eng[tl, EN_ERR] != ERR_NONE:
                continue
            if ctx.ewake[tl] > t:
                continue
            # bill stage-blocked stalls for the cycles slept through; the
            # blocked-PU set cannot change while asleep, queue space only
            # appears through router pops which reschedule this tile
            slept = t - ctx.evis[tl]
            if slept > 0 and ctx.estall[tl] != 0:
                ctx.ctr[tl, CT_STALL_BP] += ctx.estall[tl] * slept
            for p in range(P):
                if ctx.stagen[tl, p] > 0:
                    drain_stage(ctx, w, tl, p, t)
            if (ctx.iqtot[tl] == 0 and ctx.init_pend[tl] == 0
                    and ctx.epoch_pend[tl] == 0
                    and not (local_epochs and ctx.eng[tl, EN_FRONTIER] != 0)):
                ctx.estall[tl] = 0
                ctx.evis[tl] = t + 1
                ctx.ewake[tl] = WAKE_FAR
                continue
            for p in range(P):
                if ctx.stagen[tl, p] > 0:
                    ctx.ctr[tl, CT_STALL_BP] += 1
                    continue
                while ctx.puclk[tl, p] <= t_ps:
                    chan = np.int64(-3)
                    start = ctx.puclk[tl, p]
                    msg = ctx.pbuf[tl, p]
                    if ctx.init_pend[tl] != 0:
                        ctx.init_pend[tl] = 0
                        chan = TID_INIT
                        for f in range(FLD):
                            msg[f] = 0
                        if ctx.gm[GM_BARRIER_PS] > start:
                            start = ctx.gm[GM_BARRIER_PS]
                    elif ctx.epoch_pend[tl] != 0:
                        ctx.epoch_pend[tl] = 0
                        chan = TID_EPOCH
                        for f in range(FLD):
                            msg[f] = 0
                        if ctx.gm[GM_BARRIER_PS] > start:
                            start = ctx.gm[GM_BARRIER_PS]
                    else:
                        ch = tsu_pick(ctx, tl, t_ps)
                        if ch >= 0:
                            iq_pop(ctx, tl, ch, msg)
                            # freed input-queue space can unblock this
                            # cycle's ejections
                            if ctx.rwake[tl] > t:
                                ctx.rwake[tl] = t
                            chan = ch
                            if msg[FD_TS] > start:
                                start = msg[FD_TS]
                        elif (local_epochs and ctx.eng[tl, EN_FRONTIER] != 0
                              and ctx.iqtot[tl] == 0 and ctx.cqtot[tl] == 0):
                            # tile-local barrier: idle tile advances its epoch
                            ctx.eng[tl, EN_FRONTIER] = 0
                            chan = TID_EPOCH
                            for f in range(FLD):
                                msg[f] = 0
                        else:
                            break
                    ctx.eng[tl, EN_ACC] = 0
                    app_body(ctx, tl, p, chan, msg, start)
                    ctx.ctr[tl, CT_TASKS] += 1
                    delay = ctx.eng[tl, EN_ACC]
                    if delay == 0 and ctx.stagen[tl, p] > 0:
                        delay = pu_ps   # an emitting task occupies >= 1 cycle
                    end = start + delay
                    ctx.puclk[tl, p] = end
                    ctx.ctr[tl, CT_PUACT_PS] += delay
                    ec = ceil_div(end, noc_ps)
                    if ec > ctx.lastact[w]:
                        ctx.lastact[w] = ec
                    if ctx.stagen[tl, p] > 0:
                        drain_stage(ctx, w, tl, p, t)
                        if ctx.stagen[tl, p] > 0:
                            break
                    if ctx.eng[tl, EN_ERR] != ERR_NONE:
                        break
                if ctx.eng[tl, EN_ERR] != ERR_NONE:
                    break

            # schedule the next visit: busy PUs and waiting heads have known
            # times, wedged stages wait for a channel-queue space poke
            nwake = WAKE_FAR
            nst = 0
            if (ctx.iqtot[tl] != 0 or ctx.init_pend[tl] != 0
                    or ctx.epoch_pend[tl] != 0
                    or (local_epochs and ctx.eng[tl, EN_FRONTIER] != 0)):
                for p in range(P):
                    if ctx.stagen[tl, p] > 0:
                        nst += 1
                    else:
                        pc = ctx.puclk[tl, p]
                        if pc > t_ps:
                            wk = ceil_div(pc, noc_ps)
                            if wk < nwake:
                                nwake = wk
                if nst < P:
                    for chq in range(NC):
                        if ctx.iqn[tl, chq] > 0:
                            hts = ctx.iq[tl, chq, ctx.iqh[tl, chq], FD_TS]
                            if hts > t_ps:
                                wk = ceil_div(hts, noc_ps)
                                if wk < nwake:
                                    nwake = wk
            ctx.estall[tl] = nst
            ctx.evis[tl] = t + 1
            ctx.ewake[tl] = nwake


@njit(cache=True, nogil=True)
def worker_round(ctx, w, c0, c1, t0, t1, nbrs, local_epochs):
    """Simulate cycles [t0, t1) for columns [c0, c1)."""
    solo = nbrs.shape[0] == 0
    for t in range(t0, t1):
        for i in range(nbrs.shape[0]):
            nb = nbrs[i]
            while ctx.clocks[nb] < t - 1:
                sched_yield()
        exec_phase(ctx, w, c0, c1, t, local_epochs)
        router_phase(ctx, w, c0, c1, t)
        if not solo:
            sched_yield()   # publish everything before the clock store
        ctx.clocks[w] = t


# --------------------------------------------------------------- partitions

def partition_columns(cfg: MachineConfig, workers: int) -> list[tuple[int, int]]:
    """Contiguous column ranges per worker. In cache mode partitions align
    to chiplet columns so the DRAM channel visit order is partition
    independent."""
    W = cfg.grid_w
    workers = max(1, min(workers, W))
    if cfg.spm_mode != SPM_SCRATCHPAD:
        ncc = cfg.chiplet_cols
        workers = min(workers, ncc)
        while ncc % workers != 0:
            workers -= 1
        per = ncc // workers
        cw = cfg.chiplet_w
        return [(i * per * cw, (i + 1) * per * cw) for i in range(workers)]
    base, extra = divmod(W, workers)
    parts = []
    c = 0
    for i in range(workers):
        n = base + (1 if i < extra else 0)
        parts.append((c, c + n))
        c += n
    return parts


def worker_neighbors(ctx, parts) -> list[np.ndarray]:
    """Workers whose columns exchange ring traffic with each worker's."""
    owner = {}
    for w, (a, b) in enumerate(parts):
        for c in range(a, b):
            owner[c] = w
    W = ctx.cfgi[CI_W]
    out = []
    for w, (a, b) in enumerate(parts):
        s = set()
        for c in range(a, b):
            for i in range(ctx.rin.shape[1]):
                rid = ctx.rin[c, i]
                if rid >= 0:
                    s.add(owner[rid // 4])
        for c2 in range(W):
            if owner[c2] == w:
                continue
            for i in range(ctx.rin.shape[1]):
                rid = ctx.rin[c2, i]
                if rid >= 0 and a <= rid // 4 < b:
                    s.add(owner[c2])
        s.discard(w)
        out.append(np.array(sorted(s), dtype=np.int64))
    return out


# ------------------------------------------------------------------- driver

@dataclass
class Frame:
    """Counter snapshot at a frame boundary."""
    index: int
    cycle: int
    ctr: np.ndarray        # per-tile counter deltas for this frame
    iqn: np.ndarray        # IQ depths at the boundary
    cqn: np.ndarray


@dataclass
class RunResult:
    cfg: MachineConfig
    ctx: Ctx
    runtime_cycles: int
    frames: list
    ctr_chan: np.ndarray       # per-channel totals, summed over columns
    wall_seconds: float
    workers: int
    epochs: int
    kernels: int
    app_name: str = ""
    dataset: str = ""
    metrics: dict = field(default_factory=dict)
    frame_cycles: int = 0


_ERRNAMES = {
    ERR_REMOTE: "remote scratchpad access",
    ERR_ADDR: "address out of range",
    ERR_STAGE: "staging buffer overflow",
}


def _check_errors(ctx):
    bad = np.nonzero(ctx.eng[:, EN_ERR])[0]
    if len(bad):
        tl = int(bad[0])
        code = int(ctx.eng[tl, EN_ERR])
        a = int(ctx.eng[tl, EN_ERRA])
        raise SimulationError(
            f"tile {tl}: {_ERRNAMES.get(code, f'error {code}')} (addr={a:#x})")


def _quiescent(ctx, local_epochs):
    if int(ctx.iqtot.sum()) or int(ctx.cqtot.sum()) or int(ctx.rbuft.sum()):
        return False
    if int(ctx.stagen.sum()) or int(ctx.init_pend.sum()) or int(ctx.epoch_pend.sum()):
        return False
    if not np.array_equal(ctx.ring_wr, ctx.ring_rd):
        return False
    if local_epochs and int(np.count_nonzero(ctx.eng[:, EN_FRONTIER])):
        return False
    return True


def _progress_sig(ctx):
    return (int(ctx.iqtot.sum()), int(ctx.cqtot.sum()), int(ctx.rbuft.sum()),
            int(ctx.stagen.sum()), int(ctx.ring_wr.sum()), int(ctx.ring_rd.sum()),
            int(ctx.lastact.max()), int(ctx.puclk.sum()), int(ctx.ctr.sum()))


def _stuck_report(ctx) -> str:
    lines = ["no progress with work pending; deepest queues:"]
    depth = ctx.iqn.sum(axis=1) + ctx.cqn.sum(axis=1) + ctx.rbuft
    order = np.argsort(depth)[::-1][:8]
    for tl in order:
        if depth[tl] == 0:
            break
        lines.append(
            f"  tile {int(tl)}: iq={int(ctx.iqn[tl].sum())} "
            f"cq={int(ctx.cqn[tl].sum())} router={int(ctx.rbuft[tl])} "
            f"staged={int(ctx.stagen[tl].sum())}")
    return "\n".join(lines)


def run_app(cfg: MachineConfig, app, dataset=None, workers: int = 1,
            frame_interval_us: float | None = None,
            max_cycles: int = 1 << 40) -> RunResult:
    """Simulate ``app`` on the machine described by ``cfg``."""
    t_wall = time.time()
    chan_words = [c.words for c in app.channels]
    chan_comb = [c.combine for c in app.channels]
    plan = app.plan(cfg, dataset)
    parts_probe = partition_columns(cfg, workers)
    nw = len(parts_probe)
    ctx = build_ctx(cfg, len(app.channels), chan_words, chan_comb,
                    iq_caps=plan.get("iq_caps"), cq_caps=plan.get("cq_caps"),
                    mem_bytes=plan.get("mem_bytes"),
                    n_arrays=plan.get("n_arrays", 16), n_workers=nw)
    app.setup(ctx, cfg, dataset)

    parts = parts_probe
    nbrs = worker_neighbors(ctx, parts)
    local_epochs = app.epoch_mode == "local"
    noc_ps = ctx.cfgi[CI_NOC_PS]
    if frame_interval_us is None:
        frame_interval_us = cfg.frame_interval_us
    frame_cycles = max(1, int(round(frame_interval_us * 1e6 / noc_ps)))

    ctx.init_pend[:] = 1
    ctx.clocks[:] = -1
    diam = cfg.network_diameter()

    frames: list[Frame] = []
    prev_ctr = ctx.ctr.copy()
    epochs_done = 0
    kernel = 0
    t = 0
    chunk = 4096
    runtime = 0
    sig = None
    stuck_rounds = 0
    pool = ThreadPoolExecutor(max_workers=nw) if nw > 1 else None
    try:
        while True:
            next_frame = (len(frames) + 1) * frame_cycles
            t1 = min(next_frame, t + chunk)
            if nw == 1:
                a, b = parts[0]
                worker_round(ctx, 0, a, b, t, t1, nbrs[0], local_epochs)
            else:
                futs = [pool.submit(worker_round, ctx, w, parts[w][0],
                                    parts[w][1], t, t1, nbrs[w], local_epochs)
                        for w in range(nw)]
                for f in futs:
                    f.result()
            t = t1
            _check_errors(ctx)
            if t == next_frame:
                frames.append(Frame(len(frames), t, ctx.ctr - prev_ctr,
                                    ctx.iqn.copy(), ctx.cqn.copy()))
                prev_ctr = ctx.ctr.copy()

            if _quiescent(ctx, local_epochs):
                stuck_rounds = 0
                barrier = int(ctx.lastact.max()) + 2 * diam
                want_epoch = (app.epoch_mode == "global"
                              and int(np.count_nonzero(ctx.eng[:, EN_FRONTIER]))
                              and (app.max_epochs == 0 or epochs_done < app.max_epochs))
                if want_epoch:
                    epochs_done += 1
                    ctx.gm[GM_EPOCH] = epochs_done
                    ctx.eng[:, EN_FRONTIER] = 0
                    ctx.epoch_pend[:] = 1
                elif kernel + 1 < app.n_kernels:
                    kernel += 1
                    ctx.gm[GM_KERNEL] = kernel
                    ctx.gm[GM_EPOCH] = 0
                    ctx.init_pend[:] = 1
                else:
                    runtime = barrier
                    break
                ctx.gm[GM_BARRIER_PS] = barrier * noc_ps
                t = barrier
                ctx.clocks[:] = t - 1
                # every tile re-evaluates at the barrier; nothing is owed
                # from the quiescent gap, so the accounting restarts here
                ctx.rwake[:] = t
                ctx.ewake[:] = t
                ctx.rvis[:] = t
                ctx.evis[:] = t
                # emit any frame boundaries crossed by the jump
                while (len(frames) + 1) * frame_cycles <= t:
                    frames.append(Frame(len(frames),
                                        (len(frames) + 1) * frame_cycles,
                                        ctx.ctr - prev_ctr,
                                        ctx.iqn.copy(), ctx.cqn.copy()))
                    prev_ctr = ctx.ctr.copy()
            else:
                s = _progress_sig(ctx)
                if s == sig and int(ctx.puclk.max()) <= t * noc_ps:
                    stuck_rounds += 1
                    if stuck_rounds >= 2:
                        raise StuckError(_stuck_report(ctx))
                else:
                    stuck_rounds = 0
                sig = s
            if t > max_cycles:
                raise StuckError(f"exceeded max_cycles={max_cycles}")
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)

    # drop frames emitted past the true runtime while the quiescent tail
    # was being detected, then close the last partial frame so counter
    # totals always match the frame sums
    while frames and frames[-1].cycle > runtime:
        prev_ctr -= frames.pop().ctr
    if np.any(ctx.ctr != prev_ctr) or not frames:
        frames.append(Frame(len(frames), runtime, ctx.ctr - prev_ctr,
                            ctx.iqn.copy(), ctx.cqn.copy()))

    res = RunResult(
        cfg=cfg, ctx=ctx, runtime_cycles=runtime, frames=frames,
        ctr_chan=ctx.ctr_col.sum(axis=0), wall_seconds=time.time() - t_wall,
        workers=nw, epochs=epochs_done, kernels=kernel + 1,
        app_name=app.name, dataset=getattr(dataset, "name", ""),
        frame_cycles=frame_cycles)
    res.metrics = app.finalize(ctx, cfg, dataset, res)
    return res
