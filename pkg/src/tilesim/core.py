"""Shared simulation state: array layout, constants and queue primitives.

All mutable simulation state lives in flat numpy arrays bundled into a
``Ctx`` record so the compiled kernels (router phase, execution phase,
memory model) can share it. The record is a structref: compiled code
passes a single pointer between functions instead of marshalling every
array at each call boundary, which matters because the hot loops cross
function boundaries for every message moved. The same numpy arrays are
also attached as plain attributes for host-side code.

Workers own disjoint column ranges; every interaction between columns
goes through timestamped rings with credit flow control, which makes the
state evolution independent of how columns are grouped onto workers.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, types
from numba.experimental import structref

from .arch import MachineConfig, ConfigError, TORUS, SPM_SCRATCHPAD, SPM_CACHE_ASSOC

# opaque call used in spin loops so the compiler cannot elide re-reads,
# and so blocked workers yield the CPU to the ones they wait for
sched_yield = types.ExternalFunction("sched_yield", types.intc())

# ----------------------------------------------------------------- constants

# message record fields
FD_RT = 0      # current routing target tile (waypoint or destination)
FD_DEST = 1    # final destination tile
FD_CHAN = 2    # logical channel == task id == input queue id
FD_WORDS = 3   # words on the wire (includes header word unless disabled)
FD_TS = 4      # timestamp, picoseconds
FD_KEY = 5     # combine key (< 0: not combinable)
FD_ROW = 6     # arrival row while in a boundary ring
FD_P0 = 7      # first payload word
PAYW = 8
FLD = FD_P0 + PAYW

# router ports (per physical NoC)
P_PU, P_E, P_W, P_N, P_S = 0, 1, 2, 3, 4
P_XE, P_XW, P_XN, P_XS = 5, 6, 7, 8

# move directions (rows of the latency/boundary tables)
D_E, D_W, D_N, D_S, D_XE, D_XW, D_XN, D_XS = 0, 1, 2, 3, 4, 5, 6, 7

# boundary ring classes (indexed by sending column)
R_E, R_W, R_XE, R_XW = 0, 1, 2, 3

# special task ids
TID_INIT = -1
TID_EPOCH = -2

# per-tile counters
(CT_INSTR_INT, CT_INSTR_FP, CT_INSTR_BR, CT_INSTR_MEM,
 CT_SRAM_RB, CT_SRAM_WB, CT_TAG_R, CT_Q_R, CT_Q_W,
 CT_HOP, CT_FLIT_HOP, CT_HOP_CHIP, CT_HOP_PKG, CT_HOP_NODE,
 CT_STALL_BP, CT_STALL_CONT,
 CT_MEM_HIT, CT_MEM_MISS, CT_MEM_WB, CT_PF_ISS, CT_PF_USE,
 CT_DRAM_RB, CT_DRAM_WB,
 CT_INJ, CT_EJ, CT_MERGE, CT_MERGE_IQ,
 CT_RACT, CT_PUACT_PS,
 CT_XBIT_CHIP, CT_XBIT_PKG, CT_XBIT_NODE,
 CT_FLIT_HOP_X, CT_TASKS) = range(34)
CT_N = 34

CT_NAMES = [
    "instr.int", "instr.fp", "instr.branch", "instr.mem",
    "sram.read_bits", "sram.write_bits", "sram.tag_reads",
    "queue.reads", "queue.writes",
    "hops.noc", "flit_hops", "hops.chiplet", "hops.package", "hops.node",
    "stall.backpressure", "stall.contention",
    "mem.hits", "mem.misses", "mem.writebacks",
    "mem.prefetch.issued", "mem.prefetch.useful",
    "dram.read_bits", "dram.write_bits",
    "msgs.injected", "msgs.ejected", "msgs.merged", "msgs.merged.endpoint",
    "act.router", "act.pu_ps",
    "xbits.chiplet", "xbits.package", "xbits.node",
    "flit_hops.express", "tasks",
]

# per-channel counters (kept per column to stay single-writer, summed later)
(CC_INJ, CC_EJ, CC_MERGE, CC_MERGE_IQ, CC_HOP, CC_FLIT_HOP,
 CC_HOP_CHIP, CC_HOP_PKG, CC_HOP_NODE, CC_STALL_BP, CC_STALL_CONT) = range(11)
CC_N = 11
CC_NAMES = ["msgs.injected", "msgs.ejected", "msgs.merged",
            "msgs.merged.endpoint", "hops.noc", "flit_hops",
            "hops.chiplet", "hops.package", "hops.node",
            "stall.backpressure", "stall.contention"]

# engine scratch per tile
EN_ACC = 0       # latency accumulated by the task body, ps
EN_ERR = 1       # first error code raised by a task body
EN_ERRA = 2
EN_ERRB = 3
EN_FRONTIER = 4  # app flag: local work pending for the next epoch
EN_APP0 = 5      # eight app scratch slots
EN_N = EN_APP0 + 8

ERR_NONE = 0
ERR_REMOTE = 1    # scratchpad access outside the tile's address slice
ERR_ADDR = 2      # address outside the machine address space
ERR_STAGE = 3     # task staged more emissions than the staging buffer holds

# global mutable scalars
GM_EPOCH = 0
GM_KERNEL = 1
GM_BARRIER_PS = 2
GM_N = 3

# scalar config ints (ctx.cfgi)
(CI_W, CI_H, CI_T, CI_NP, CI_NETS, CI_PT, CI_NC, CI_SLOTS, CI_P,
 CI_STRIDE, CI_TOPO, CI_NODE_W, CI_NODE_H, CI_CHIP_W, CI_CHIP_H,
 CI_RT_DEG, CI_NOC_PS, CI_PU_PS, CI_SRAM_PS, CI_FLITB,
 CI_ARB, CI_TSU, CI_TSU_THR,
 CI_SETS, CI_WAYS, CI_LINE_B, CI_CACHE, CI_PF,
 CI_NCHAN, CI_CH_PER_CHIP, CI_DRAM_RT_PS, CI_SLICE_B,
 CI_RCAP, CI_STCAP, CI_IQMAX, CI_CQMAX, CI_DRAM_SLOT_PS) = range(37)
CI_N = 37

# "never" for the wake scheduler: a visit cycle no run can reach
WAKE_FAR = 1 << 60


CtxFields = [
    "cfgi", "cfgf",
    # router state
    "rbuf", "rbufn", "rbufh", "rbuft", "obusy", "ibusy", "rr_out", "rr_cq",
    "latm", "bcm", "ebitm",
    # boundary rings and credits
    "ring", "ring_wr", "ring_rd", "rin", "rin_port",
    "cred_sent", "cred_ack", "cred_freed", "cred_ev", "cred_cap",
    # queues
    "iq", "iqn", "iqh", "iqtot", "iqpf", "cq", "cqn", "cqh", "cqtot", "qcap",
    "chanw", "chancomb", "tsu_cur", "tsu_prio",
    # execution
    "puclk", "stage", "stagen", "stager", "pbuf",
    "init_pend", "epoch_pend", "eng", "gm", "ag",
    # memory
    "ctag", "cmeta", "clru", "cready", "dramY", "busps",
    "mem32", "mem64", "memf32", "memf64",
    "lay_base", "lay_start", "lay_log2",
    # counters
    "ctr", "ctr_col", "ctr_dram",
    # wake scheduling: per-tile next-visit cycles plus the frozen stall
    # patterns that let slept-through cycles be billed retroactively
    "rwake", "ract", "rvis", "rsbp", "rscont", "rsract", "rbnz",
    "ewake", "evis", "estall",
    # worker coordination
    "clocks", "lastact", "quiet",
]
@structref.register
class CtxType(types.StructRef):
    pass


class Ctx(structref.StructRefProxy):
    """Simulation state record. Compiled code receives it by reference;
    host code reads the same arrays through the mirrored attributes."""

    def __new__(cls, *args):
        return structref.StructRefProxy.__new__(cls, *args)


structref.define_proxy(Ctx, CtxType, CtxFields)


def _make_ctx(**kw):
    ctx = Ctx(*[kw[f] for f in CtxFields])
    for f in CtxFields:
        setattr(ctx, f, kw[f])
    return ctx


# ------------------------------------------------------------ state building

def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _boundary_class(cfg: MachineConfig, a: int, b: int, vertical: bool) -> int:
    """0 intra-chiplet, 1 chiplet, 2 package, 3 node boundary between
    adjacent (or wrap-linked) rows/columns a and b."""
    if vertical:
        per_chip, per_pkg, per_node = cfg.tiles_y, cfg.tiles_y * cfg.chiplets_y, cfg.grid_h // cfg.nodes_y
    else:
        per_chip, per_pkg, per_node = cfg.tiles_x, cfg.tiles_x * cfg.chiplets_x, cfg.grid_w // cfg.nodes_x
    if a // per_node != b // per_node:
        return 3
    if a // per_pkg != b // per_pkg:
        return 2
    if a // per_chip != b // per_chip:
        return 1
    return 0


def _hop_ps(cfg: MachineConfig, bclass: int, span: int) -> int:
    """Latency of one hop in ps: router traversal + wire, plus boundary cost."""
    p = cfg.params
    wire_mm = p.tile_pitch_mm * span * (2.0 if cfg.noc_topology == TORUS else 1.0)
    ps = p.router_ps + p.noc_wire_ps_mm * wire_mm
    if bclass == 1:
        ps += p.d2d_ns * 1000.0
    elif bclass >= 2:
        ps += p.io_die_ns * 1000.0
    noc_ps = round(1000.0 / cfg.freq_op_noc)
    return _ceil_div(int(math.ceil(ps)), noc_ps) * noc_ps


def _link_bits(cfg: MachineConfig, bclass: int) -> int:
    if bclass == 0:
        return cfg.noc_width_bits
    if bclass in (1, 2):
        return cfg.inter_chiplet_link_bits
    return max(1, cfg.inter_chiplet_link_bits // cfg.inter_node_mux_factor)


def queue_entry_bits(cfg: MachineConfig, words: int) -> int:
    return words * cfg.noc_width_bits


def queue_reserved_bytes(cfg: MachineConfig, chan_words: np.ndarray,
                         iq_caps: np.ndarray, cq_caps: np.ndarray) -> int:
    bits = 0
    for c in range(len(chan_words)):
        bits += int(chan_words[c]) * cfg.noc_width_bits * (int(iq_caps[c]) + int(cq_caps[c]))
    return bits // 8


def cache_geometry(cfg: MachineConfig, queue_bytes: int) -> tuple[int, int, int]:
    """(sets, ways, lines). Tags (32 bits/line modeled) and queues take SPM space."""
    ways = 1 if cfg.spm_mode != SPM_CACHE_ASSOC else cfg.cache_ways
    line_b = cfg.cacheline_bits // 8
    avail = cfg.spm_bytes - queue_bytes
    if avail <= 0:
        raise ConfigError(
            f"queue reservations ({queue_bytes} B) exceed the {cfg.spm_bytes} B SPM")
    lines = avail // (line_b + 4)
    sets = lines // ways
    if sets < 1:
        raise ConfigError("SPM too small for even one cache line after queue reservations")
    sets = 1 << (sets.bit_length() - 1)   # power of two for the index function
    return sets, ways, sets * ways


def build_ctx(cfg: MachineConfig, n_channels: int, chan_words, chan_comb,
              iq_caps=None, cq_caps=None, mem_bytes: int | None = None,
              n_arrays: int = 16, n_workers: int = 1) -> Ctx:
    """Allocate all state arrays for one run."""
    W, H, T = cfg.grid_w, cfg.grid_h, cfg.n_tiles
    NETS = cfg.num_physical_nocs
    NP = 9 if cfg.extra_ports == "ruche" else 5
    PT = NP * NETS
    NC = n_channels
    SLOTS = cfg.buffer_slots_per_port
    P = cfg.pus_per_tile
    M = max(W, H)

    chan_words = np.asarray(chan_words, dtype=np.int64)
    chan_comb = np.asarray(chan_comb, dtype=np.int64)
    if chan_words.shape != (NC,) or chan_comb.shape != (NC,):
        raise ConfigError("channel table shape mismatch")
    if not cfg.no_header:
        wire_words = chan_words + 1
    else:
        wire_words = chan_words.copy()
    if wire_words.max(initial=1) > PAYW + 1:
        raise ConfigError(f"channel payload exceeds {PAYW} words")

    # app-requested capacities are the base; config overrides win on top
    if iq_caps is not None:
        iq_arr = np.asarray(iq_caps, dtype=np.int64).copy()
    else:
        iq_arr = np.full(NC, cfg.iq_capacity_default, dtype=np.int64)
    if cq_caps is not None:
        cq_arr = np.asarray(cq_caps, dtype=np.int64).copy()
    else:
        cq_arr = np.full(NC, cfg.cq_capacity_default, dtype=np.int64)
    for c, v in cfg.iq_capacity.items():
        if not 0 <= c < NC:
            raise ConfigError(f"queue.iq.{c}: no such channel")
        iq_arr[c] = v
    for c, v in cfg.cq_capacity.items():
        if not 0 <= c < NC:
            raise ConfigError(f"queue.cq.{c}: no such channel")
        cq_arr[c] = v
    IQMAX, CQMAX = int(iq_arr.max(initial=1)), int(cq_arr.max(initial=1))

    noc_ps = round(1000.0 / cfg.freq_op_noc)
    pu_ps = round(1000.0 / cfg.freq_op_pu)
    if noc_ps < 1 or pu_ps < 1:
        raise ConfigError("operating frequency too high: sub-picosecond cycle")

    from .memory import sram_latency_ns
    sram_ps = round(sram_latency_ns(cfg.spm_kib, cfg.params) * 1000.0)

    # hop latency / boundary class / link width tables per direction
    latm = np.ones((8, M), dtype=np.int64) * noc_ps
    bcm = np.zeros((8, M), dtype=np.int64)
    ebitm = np.full((8, M), cfg.noc_width_bits, dtype=np.int64)
    node_w, node_h = W // cfg.nodes_x, H // cfg.nodes_y
    stride = cfg.ruche_stride if cfg.extra_ports == "ruche" else 0
    torus = cfg.noc_topology == TORUS
    if torus and (node_w > 2 or node_h > 2) and SLOTS < 2:
        raise ConfigError("folded torus needs buffer_slots_per_port >= 2")

    def fill(axis_len, node_len, d_fwd, d_bwd, d_xf, d_xb, vertical):
        for a in range(axis_len):
            n0 = (a // node_len) * node_len
            # forward neighbor (+1), possibly wrap
            b = a + 1
            if b >= n0 + node_len:
                b = n0 if (torus and node_len > 2) else a + 1
            if b < axis_len:
                bc = _boundary_class(cfg, a, b, vertical)
                span = 1
                latm[d_fwd, a] = _hop_ps(cfg, bc, span)
                bcm[d_fwd, a] = bc
                ebitm[d_fwd, a] = _link_bits(cfg, bc)
            b = a - 1
            if b < n0:
                b = n0 + node_len - 1 if (torus and node_len > 2) else a - 1
            if b >= 0:
                bc = _boundary_class(cfg, a, b, vertical)
                latm[d_bwd, a] = _hop_ps(cfg, bc, 1)
                bcm[d_bwd, a] = bc
                ebitm[d_bwd, a] = _link_bits(cfg, bc)
            if stride:
                for d_x, sgn in ((d_xf, 1), (d_xb, -1)):
                    b = a + sgn * stride
                    if torus and node_len > 2 and not n0 <= b < n0 + node_len:
                        b = n0 + (b - n0) % node_len
                    latm[d_x, a] = _hop_ps(cfg, 0, stride)
                    bcm[d_x, a] = 0
                    ebitm[d_x, a] = cfg.noc_width_bits

    fill(W, node_w, D_E, D_W, D_XE, D_XW, False)
    fill(H, node_h, D_N, D_S, D_XN, D_XS, True)

    # boundary rings: id = 4*col + class; receivers precompute feeders
    NR = 4 * W
    RCAP = H * NC * SLOTS
    rin = np.full((W, 6), -1, dtype=np.int64)
    rin_port = np.full((W, 6), -1, dtype=np.int64)
    feeders: list[list[tuple[int, int]]] = [[] for _ in range(W)]
    for c in range(W):
        n0 = (c // node_w) * node_w
        dst = c + 1
        if dst >= n0 + node_w:
            dst = n0 if (torus and node_w > 2) else c + 1
        if 0 <= dst < W:
            feeders[dst].append((4 * c + R_E, P_W))
        dst = c - 1
        if dst < n0:
            dst = n0 + node_w - 1 if (torus and node_w > 2) else c - 1
        if 0 <= dst < W:
            feeders[dst].append((4 * c + R_W, P_E))
        if stride:
            cw = cfg.chiplet_w
            for cls, sgn, prt in ((R_XE, 1, P_XW), (R_XW, -1, P_XE)):
                dst = c + sgn * stride
                if torus and node_w > 2 and not n0 <= dst < n0 + node_w:
                    dst = n0 + (dst - n0) % node_w
                if 0 <= dst < W and dst // cw == c // cw:
                    feeders[dst].append((4 * c + cls, prt))
    cred_cap = np.full(NR, SLOTS, dtype=np.int64)
    for c in range(W):
        per_port: dict[int, list[int]] = {}
        for rid, prt in feeders[c]:
            per_port.setdefault(prt, []).append(rid)
        i = 0
        for prt, rids in sorted(per_port.items()):
            share = max(1, SLOTS // len(rids))
            if torus and len(rids) > 1 and share < 2:
                raise ConfigError(
                    "torus with shared boundary ports needs buffer_slots_per_port >= 4")
            for rid in sorted(rids):
                rin[c, i] = rid
                rin_port[c, i] = prt
                cred_cap[rid] = share if len(rids) > 1 else SLOTS
                i += 1

    # memory geometry
    cache_on = cfg.spm_mode != SPM_SCRATCHPAD
    qbytes = queue_reserved_bytes(cfg, wire_words, iq_arr, cq_arr)
    if cache_on:
        sets, ways, lines = cache_geometry(cfg, qbytes)
    else:
        sets, ways = 1, 1
    line_b = cfg.cacheline_bits // 8
    ch_per_chip = cfg.dram.channels
    nchan = max(1, ch_per_chip * cfg.n_chiplets) if cache_on else 1

    # memory bus: wire delay to the chiplet's west-edge controller
    busps = np.zeros(T, dtype=np.int64)
    if cache_on:
        p = cfg.params
        for t in range(T):
            x = t % W
            dist = x - (x // cfg.chiplet_w) * cfg.chiplet_w
            busps[t] = round(p.noc_wire_ps_mm * p.tile_pitch_mm * dist)
    dram_rt_ps = round(cfg.params.dram_latency_ns * 1000.0)

    # address space: T equal slices; physical backing sized to what is used
    if mem_bytes is None:
        usable = ((cfg.spm_bytes - qbytes) // line_b) * line_b
        mem_bytes = usable * T if not cache_on else 64 * 1024 * T
    slice_b = _ceil_div(_ceil_div(mem_bytes, T), line_b) * line_b
    if not cache_on and slice_b > cfg.spm_bytes - qbytes:
        raise ConfigError(
            f"per-tile slice of {slice_b} B exceeds the "
            f"{cfg.spm_bytes - qbytes} B of SPM left after queue reservations")
    if cache_on and slice_b * T > cfg.total_mem_bytes:
        raise ConfigError("memory footprint exceeds total DRAM capacity")
    mem = np.zeros(slice_b * T, dtype=np.uint8)

    STCAP = 256
    NW = max(1, n_workers)

    cfgi = np.zeros(CI_N, dtype=np.int64)
    cfgi[CI_W], cfgi[CI_H], cfgi[CI_T] = W, H, T
    cfgi[CI_NP], cfgi[CI_NETS], cfgi[CI_PT] = NP, NETS, PT
    cfgi[CI_NC], cfgi[CI_SLOTS], cfgi[CI_P] = NC, SLOTS, P
    cfgi[CI_STRIDE], cfgi[CI_TOPO] = stride, 1 if torus else 0
    cfgi[CI_NODE_W], cfgi[CI_NODE_H] = node_w, node_h
    cfgi[CI_CHIP_W], cfgi[CI_CHIP_H] = cfg.chiplet_w, cfg.chiplet_h
    cfgi[CI_RT_DEG] = cfg.reduction_tree_degree
    cfgi[CI_NOC_PS], cfgi[CI_PU_PS], cfgi[CI_SRAM_PS] = noc_ps, pu_ps, sram_ps
    cfgi[CI_FLITB] = cfg.noc_width_bits
    cfgi[CI_ARB] = 0 if cfg.arbitration == "round_robin" else 1
    cfgi[CI_TSU] = {"round_robin": 0, "priority": 1, "occupancy": 2}[cfg.tsu_policy]
    cfgi[CI_TSU_THR] = cfg.tsu_occupancy_threshold
    cfgi[CI_SETS], cfgi[CI_WAYS], cfgi[CI_LINE_B] = sets, ways, line_b
    cfgi[CI_CACHE] = 1 if cache_on else 0
    cfgi[CI_PF] = {"none": 0, "next_line": 1, "pointer_indirect": 2}[cfg.prefetch]
    cfgi[CI_NCHAN], cfgi[CI_CH_PER_CHIP] = nchan, max(1, ch_per_chip)
    cfgi[CI_DRAM_RT_PS] = dram_rt_ps
    cfgi[CI_DRAM_SLOT_PS] = (
        round(line_b / cfg.dram.channel_bw_gbs * 1000.0) if cache_on else 1)
    cfgi[CI_SLICE_B] = slice_b
    cfgi[CI_RCAP], cfgi[CI_STCAP] = RCAP, STCAP
    cfgi[CI_IQMAX], cfgi[CI_CQMAX] = IQMAX, CQMAX

    cfgf = np.zeros(4, dtype=np.float64)

    prio = np.arange(NC, dtype=np.int64)
    if cfg.tsu_priority:
        if sorted(cfg.tsu_priority) != list(range(NC)):
            raise ConfigError("tsu_priority must be a permutation of the channel ids")
        prio = np.array(cfg.tsu_priority, dtype=np.int64)

    return _make_ctx(
        cfgi=cfgi, cfgf=cfgf,
        rbuf=np.zeros((T, PT, NC, SLOTS, FLD), dtype=np.int64),
        rbufn=np.zeros((T, PT, NC), dtype=np.int64),
        rbufh=np.zeros((T, PT, NC), dtype=np.int64),
        rbuft=np.zeros(T, dtype=np.int64),
        obusy=np.zeros((T, PT), dtype=np.int64),
        ibusy=np.zeros((T, NETS), dtype=np.int64),
        rr_out=np.zeros((T, PT), dtype=np.int64),
        rr_cq=np.zeros((T, NETS), dtype=np.int64),
        latm=latm, bcm=bcm, ebitm=ebitm,
        ring=np.zeros((NR, RCAP, FLD), dtype=np.int64),
        ring_wr=np.zeros(NR, dtype=np.int64),
        ring_rd=np.zeros(NR, dtype=np.int64),
        rin=rin, rin_port=rin_port,
        cred_sent=np.zeros((NR, H, NC), dtype=np.int64),
        cred_ack=np.zeros((NR, H, NC), dtype=np.int64),
        cred_freed=np.zeros((NR, H, NC), dtype=np.int64),
        cred_ev=np.zeros((NR, H, NC, SLOTS), dtype=np.int64),
        cred_cap=cred_cap,
        iq=np.zeros((T, NC, IQMAX, FLD), dtype=np.int64),
        iqn=np.zeros((T, NC), dtype=np.int64),
        iqh=np.zeros((T, NC), dtype=np.int64),
        iqtot=np.zeros(T, dtype=np.int64),
        iqpf=np.zeros((T, NC), dtype=np.int64),
        cq=np.zeros((T, NC, CQMAX, FLD), dtype=np.int64),
        cqn=np.zeros((T, NC), dtype=np.int64),
        cqh=np.zeros((T, NC), dtype=np.int64),
        cqtot=np.zeros(T, dtype=np.int64),
        qcap=np.stack([iq_arr, cq_arr]),
        chanw=wire_words, chancomb=chan_comb,
        tsu_cur=np.zeros(T, dtype=np.int64),
        tsu_prio=prio,
        puclk=np.zeros((T, P), dtype=np.int64),
        stage=np.zeros((T, P, STCAP, FLD), dtype=np.int64),
        stagen=np.zeros((T, P), dtype=np.int64),
        stager=np.zeros((T, P), dtype=np.int64),
        pbuf=np.zeros((T, P, FLD), dtype=np.int64),
        init_pend=np.zeros(T, dtype=np.int64),
        epoch_pend=np.zeros(T, dtype=np.int64),
        eng=np.zeros((T, EN_N), dtype=np.int64),
        gm=np.zeros(GM_N, dtype=np.int64),
        ag=np.zeros(32, dtype=np.int64),
        ctag=np.full((T, sets, ways), -1, dtype=np.int64),
        cmeta=np.zeros((T, sets, ways), dtype=np.int64),
        clru=np.zeros((T, sets, ways), dtype=np.int64),
        cready=np.zeros((T, sets, ways), dtype=np.int64),
        dramY=np.zeros(nchan, dtype=np.int64),
        busps=busps,
        mem32=mem.view(np.int32), mem64=mem.view(np.int64),
        memf32=mem.view(np.float32), memf64=mem.view(np.float64),
        lay_base=np.zeros((n_arrays, T), dtype=np.int64),
        lay_start=np.zeros((n_arrays, T + 1), dtype=np.int64),
        lay_log2=np.zeros(n_arrays, dtype=np.int64),
        ctr=np.zeros((T, CT_N), dtype=np.int64),
        ctr_col=np.zeros((W, NC, CC_N), dtype=np.int64),
        ctr_dram=np.zeros(nchan, dtype=np.int64),
        rwake=np.zeros(T, dtype=np.int64),
        ract=np.zeros((T, 2), dtype=np.uint8),
        rvis=np.zeros(T, dtype=np.int64),
        rsbp=np.zeros((T, NC), dtype=np.int64),
        rscont=np.zeros((T, NC), dtype=np.int64),
        rsract=np.zeros(T, dtype=np.uint8),
        rbnz=np.full(T, WAKE_FAR, dtype=np.int64),
        ewake=np.zeros(T, dtype=np.int64),
        evis=np.zeros(T, dtype=np.int64),
        estall=np.zeros(T, dtype=np.int64),
        clocks=np.full(NW, -1, dtype=np.int64),
        lastact=np.zeros(NW, dtype=np.int64),
        quiet=np.zeros(NW, dtype=np.int64),
    )


# ------------------------------------------------------------ jit primitives

@njit(cache=True, nogil=True, inline="always")
def ceil_div(a, b):
    return -(-a // b)


@njit(cache=True, nogil=True)
def iq_push(ctx, t, chan, msg, col):
    """Append into an input queue; caller checked capacity. Tries combining
    with queued entries first (same final destination and key)."""
    if ctx.chancomb[chan] != 0 and msg[FD_KEY] >= 0:
        n = ctx.iqn[t, chan]
        h = ctx.iqh[t, chan]
        cap = ctx.iq.shape[2]
        for k in range(n):
            s = (h + k) % cap
            if (ctx.iq[t, chan, s, FD_KEY] == msg[FD_KEY]
                    and ctx.iq[t, chan, s, FD_DEST] == msg[FD_DEST]):
                return s  # combinable slot found; caller merges payloads
    n = ctx.iqn[t, chan]
    s = (ctx.iqh[t, chan] + n) % ctx.iq.shape[2]
    for f in range(FLD):
        ctx.iq[t, chan, s, f] = msg[f]
    ctx.iqn[t, chan] = n + 1
    ctx.iqtot[t] += 1
    ctx.ctr[t, CT_Q_W] += 1
    ctx.ctr[t, CT_SRAM_WB] += ctx.chanw[chan] * ctx.cfgi[CI_FLITB]
    return -1


@njit(cache=True, nogil=True)
def iq_pop(ctx, t, chan, out):
    h = ctx.iqh[t, chan]
    for f in range(FLD):
        out[f] = ctx.iq[t, chan, h, f]
    ctx.iqh[t, chan] = (h + 1) % ctx.iq.shape[2]
    ctx.iqn[t, chan] -= 1
    ctx.iqtot[t] -= 1
    if ctx.iqpf[t, chan] > 0:
        ctx.iqpf[t, chan] -= 1
    ctx.ctr[t, CT_Q_R] += 1
    ctx.ctr[t, CT_SRAM_RB] += ctx.chanw[chan] * ctx.cfgi[CI_FLITB]


@njit(cache=True, nogil=True)
def cq_push(ctx, t, chan, msg):
    n = ctx.cqn[t, chan]
    s = (ctx.cqh[t, chan] + n) % ctx.cq.shape[2]
    for f in range(FLD):
        ctx.cq[t, chan, s, f] = msg[f]
    ctx.cqn[t, chan] = n + 1
    ctx.ctr[t, CT_Q_W] += 1
    ctx.ctr[t, CT_SRAM_WB] += ctx.chanw[chan] * ctx.cfgi[CI_FLITB]
