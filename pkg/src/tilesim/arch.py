"""Machine configuration: the modeled hierarchy, its global grid and address map.

A machine is a grid of tiles grouped into chiplets, packages and nodes.
Width multiplies through the hierarchy: a config with tiles_x=8 and
chiplets_x=2 has a 16-tile-wide global grid. Topology (mesh or folded
torus) applies to the whole grid up to the node level; across nodes the
fabric is always a mesh.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .params import ModelParams, PARAM_NAMES


class ConfigError(ValueError):
    pass


MESH = "mesh2d"
TORUS = "folded_torus2d"
SPM_SCRATCHPAD = "scratchpad"
SPM_CACHE_DIRECT = "cache_direct"
SPM_CACHE_ASSOC = "cache_assoc"
INTEG_25D = "interposer_2_5d"
INTEG_3D = "stacked_3d"


@dataclass
class DramConfig:
    channels: int = 0           # channels per DRAM-paired chiplet; 0 = no DRAM
    channel_bw_gbs: float = 64.0
    capacity_gb: float = 8.0    # per device (one device per chiplet when channels > 0)
    integration: str = INTEG_25D


@dataclass
class MachineConfig:
    # --- grid hierarchy (x is width, y is height; totals multiply) ---
    tiles_x: int = 8            # tiles per chiplet
    tiles_y: int = 8
    chiplets_x: int = 1
    chiplets_y: int = 1
    packages_x: int = 1
    packages_y: int = 1
    nodes_x: int = 1
    nodes_y: int = 1

    # --- tile ---
    pus_per_tile: int = 1
    spm_kib: int = 256          # SPM capacity per tile
    spm_mode: str = SPM_SCRATCHPAD
    cache_ways: int = 2         # only for cache_assoc
    cacheline_bits: int = 512

    # --- NoC ---
    noc_topology: str = MESH
    noc_width_bits: int = 64    # flit width
    extra_ports: str = "none"   # "none" or "ruche"
    ruche_stride: int = 4       # express-channel hop distance when extra_ports = ruche
    reduction_tree_degree: int = 0   # 0/1 = off; >=2 routes combinable traffic via waypoints
    num_physical_nocs: int = 1
    buffer_slots_per_port: int = 4   # per logical channel
    arbitration: str = "round_robin"  # or "static"

    # --- boundary links ---
    inter_chiplet_link_bits: int = 64   # width of one cross-chiplet link
    inter_node_mux_factor: int = 1      # edge tiles sharing one cross-node link

    # --- DRAM ---
    dram: DramConfig = field(default_factory=DramConfig)

    # --- frequencies (GHz) ---
    freq_target_pu: float = 1.0   # design target (area scaling)
    freq_op_pu: float = 1.0       # operating point (timing, voltage)
    freq_target_noc: float = 1.0
    freq_op_noc: float = 1.0

    # --- engine ---
    tsu_policy: str = "round_robin"   # round_robin | priority | occupancy
    tsu_priority: tuple = ()          # channel order for the priority policy
    tsu_occupancy_threshold: int = 4
    iq_capacity_default: int = 64     # message slots per input queue
    cq_capacity_default: int = 32     # message slots per channel queue
    iq_capacity: dict = field(default_factory=dict)   # per-channel overrides {chan: slots}
    cq_capacity: dict = field(default_factory=dict)
    prefetch: str = "none"            # none | next_line | pointer_indirect
    frame_interval_us: float = 100.0
    no_header: bool = False           # do not count a header word per message

    params: ModelParams = field(default_factory=ModelParams)

    # ------------------------------------------------------------------ grid

    @property
    def grid_w(self) -> int:
        return self.tiles_x * self.chiplets_x * self.packages_x * self.nodes_x

    @property
    def grid_h(self) -> int:
        return self.tiles_y * self.chiplets_y * self.packages_y * self.nodes_y

    @property
    def n_tiles(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def chiplet_w(self) -> int:
        return self.tiles_x

    @property
    def chiplet_h(self) -> int:
        return self.tiles_y

    @property
    def n_chiplets(self) -> int:
        return (self.chiplets_x * self.packages_x * self.nodes_x
                * self.chiplets_y * self.packages_y * self.nodes_y)

    @property
    def chiplet_cols(self) -> int:
        return self.chiplets_x * self.packages_x * self.nodes_x

    def tile_id(self, x: int, y: int) -> int:
        return y * self.grid_w + x

    def tile_xy(self, t: int) -> tuple[int, int]:
        return t % self.grid_w, t // self.grid_w

    # --------------------------------------------------------------- address

    @property
    def spm_bytes(self) -> int:
        return self.spm_kib * 1024

    @property
    def total_mem_bytes(self) -> int:
        """Total DUT address space: SPMs in scratchpad mode, DRAM in cache mode."""
        if self.spm_mode == SPM_SCRATCHPAD:
            return self.n_tiles * self.spm_bytes
        return int(self.dram.capacity_gb * (1 << 30)) * self.n_chiplets

    @property
    def tile_slice_bytes(self) -> int:
        total = self.total_mem_bytes
        if total % self.n_tiles != 0:
            raise ConfigError("address space does not divide evenly across tiles")
        return total // self.n_tiles

    def tile_of_address(self, addr: int) -> int:
        """Owner tile of a byte address. Contiguous equal slices, row-major tiles."""
        if addr < 0 or addr >= self.total_mem_bytes:
            raise ConfigError(f"address {addr:#x} outside the {self.total_mem_bytes:#x}-byte address space")
        return addr // self.tile_slice_bytes

    # -------------------------------------------------------------- topology

    def network_diameter(self) -> int:
        """Longest shortest path between any two routers, in hops.

        Closed form for single-node mesh/torus grids without express links;
        otherwise an explicit BFS over the router graph.
        """
        w, h = self.grid_w, self.grid_h
        single = self.nodes_x == 1 and self.nodes_y == 1
        if single and self.extra_ports == "none":
            if self.noc_topology == MESH:
                return (w - 1) + (h - 1)
            return w // 2 + h // 2
        return int(_bfs_diameter(self))

    def validate(self) -> None:
        p = self.params
        for name, v in (("tiles_x", self.tiles_x), ("tiles_y", self.tiles_y),
                        ("chiplets_x", self.chiplets_x), ("chiplets_y", self.chiplets_y),
                        ("packages_x", self.packages_x), ("packages_y", self.packages_y),
                        ("nodes_x", self.nodes_x), ("nodes_y", self.nodes_y),
                        ("pus_per_tile", self.pus_per_tile), ("spm_kib", self.spm_kib),
                        ("buffer_slots_per_port", self.buffer_slots_per_port)):
            if v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        if self.noc_topology not in (MESH, TORUS):
            raise ConfigError(f"unknown noc_topology: {self.noc_topology}")
        if self.spm_mode not in (SPM_SCRATCHPAD, SPM_CACHE_DIRECT, SPM_CACHE_ASSOC):
            raise ConfigError(f"unknown spm_mode: {self.spm_mode}")
        if self.spm_mode != SPM_SCRATCHPAD and self.dram.channels < 1:
            raise ConfigError("cache modes require a DRAM config (dram.channels >= 1)")
        if self.spm_mode == SPM_CACHE_ASSOC and self.cache_ways < 2:
            raise ConfigError("cache_assoc requires cache_ways >= 2")
        if not 1 <= self.num_physical_nocs <= 3:
            raise ConfigError("num_physical_nocs must be in [1, 3]")
        if self.extra_ports not in ("none", "ruche"):
            raise ConfigError(f"unknown extra_ports: {self.extra_ports}")
        if self.extra_ports == "ruche" and self.ruche_stride < 2:
            raise ConfigError("ruche_stride must be >= 2")
        if self.dram.integration not in (INTEG_25D, INTEG_3D):
            raise ConfigError(f"unknown dram.integration: {self.dram.integration}")
        if self.tsu_policy not in ("round_robin", "priority", "occupancy"):
            raise ConfigError(f"unknown tsu_policy: {self.tsu_policy}")
        if self.arbitration not in ("round_robin", "static"):
            raise ConfigError(f"unknown arbitration: {self.arbitration}")
        if self.prefetch not in ("none", "next_line", "pointer_indirect"):
            raise ConfigError(f"unknown prefetch: {self.prefetch}")
        if self.cacheline_bits % self.noc_width_bits != 0:
            raise ConfigError("cacheline_bits must be a multiple of noc_width_bits")
        for f in (self.freq_target_pu, self.freq_op_pu, self.freq_target_noc, self.freq_op_noc):
            if f <= 0:
                raise ConfigError("frequencies must be positive")
        if p.process_node_nm <= 0:
            raise ConfigError("process_node_nm must be positive")

    # ----------------------------------------------------------- (de)serialize

    def checksum(self) -> int:
        digest = hashlib.sha256(serialize_config(self).encode()).hexdigest()
        return int(digest[:15], 16)


# key -> (getter, setter-path) tables for the flat "key = value" format
_BOOLS = {"no_header"}
_DRAM_KEYS = {"channels": int, "channel_bw_gbs": float, "capacity_gb": float, "integration": str}


def _scalar_fields(cfg: MachineConfig) -> dict:
    out = {}
    for f in fields(cfg):
        if f.name in ("dram", "params", "iq_capacity", "cq_capacity", "tsu_priority"):
            continue
        out[f.name] = getattr(cfg, f.name)
    return out


def parse_config(text: str, base: MachineConfig | None = None) -> MachineConfig:
    """Parse the flat ``key = value`` config format.

    '#' starts a comment. Dotted keys address subsections (dram.channels,
    params.sram_read_pj_bit, queue.iq.3). Unknown keys are a hard error.
    """
    cfg = replace(base) if base is not None else MachineConfig()
    cfg.dram = replace(cfg.dram)
    cfg.params = replace(cfg.params)
    cfg.iq_capacity = dict(cfg.iq_capacity)
    cfg.cq_capacity = dict(cfg.cq_capacity)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            apply_setting(cfg, key, val)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    cfg.validate()
    return cfg


def apply_setting(cfg: MachineConfig, key: str, val: str) -> None:
    """Apply one key=value override to a config in place."""
    scalars = _scalar_fields(cfg)
    if key in scalars:
        cur = scalars[key]
        if key in _BOOLS:
            if val.lower() not in ("0", "1", "true", "false"):
                raise ConfigError(f"{key} must be a boolean, got {val!r}")
            setattr(cfg, key, val.lower() in ("1", "true"))
        else:
            try:
                setattr(cfg, key, type(cur)(val))
            except ValueError:
                raise ConfigError(f"bad value for {key}: {val!r}")
        return
    if key == "tsu_priority":
        cfg.tsu_priority = tuple(int(s) for s in val.split(",") if s.strip() != "")
        return
    if key.startswith("dram."):
        sub = key[5:]
        if sub not in _DRAM_KEYS:
            raise ConfigError(f"unknown key: {key}")
        setattr(cfg.dram, sub, _DRAM_KEYS[sub](val))
        return
    if key.startswith("params."):
        sub = key[7:]
        if sub not in PARAM_NAMES:
            raise ConfigError(f"unknown key: {key}")
        cfg.params.override(sub, val)
        return
    if key.startswith("queue.iq.") or key.startswith("queue.cq."):
        which, _, chan = key[6:].partition(".")
        try:
            c = int(chan)
        except ValueError:
            raise ConfigError(f"bad channel in {key!r}")
        (cfg.iq_capacity if which == "iq" else cfg.cq_capacity)[c] = int(val)
        return
    raise ConfigError(f"unknown key: {key}")


def serialize_config(cfg: MachineConfig) -> str:
    """Canonical text form; parse(serialize(parse(t))) is a fixed point."""
    lines = []
    for name, v in sorted(_scalar_fields(cfg).items()):
        if name in _BOOLS:
            v = "true" if v else "false"
        lines.append(f"{name} = {v}")
    if cfg.tsu_priority:
        lines.append("tsu_priority = " + ",".join(str(c) for c in cfg.tsu_priority))
    for sub in sorted(_DRAM_KEYS):
        lines.append(f"dram.{sub} = {getattr(cfg.dram, sub)}")
    defaults = ModelParams()
    for name in PARAM_NAMES:
        v = getattr(cfg.params, name)
        if v != getattr(defaults, name):
            lines.append(f"params.{name} = {v}")
    for c in sorted(cfg.iq_capacity):
        lines.append(f"queue.iq.{c} = {cfg.iq_capacity[c]}")
    for c in sorted(cfg.cq_capacity):
        lines.append(f"queue.cq.{c} = {cfg.cq_capacity[c]}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- router graph

def router_neighbors(cfg: MachineConfig, t: int) -> list[int]:
    """Adjacent routers of tile t, including wrap and express links.

    Adjacent tiles always share a link (the inter-node fabric is a mesh).
    A torus adds node-local wrap links per row and column. Express links
    are chiplet-internal: both endpoints must sit on the same chiplet.
    """
    w, h = cfg.grid_w, cfg.grid_h
    x, y = t % w, t // w
    torus = cfg.noc_topology == TORUS
    node_w, node_h = w // cfg.nodes_x, h // cfg.nodes_y
    nx0, ny0 = (x // node_w) * node_w, (y // node_h) * node_h
    out = []
    for dx in (-1, 1):
        if 0 <= x + dx < w:
            out.append(y * w + x + dx)
    for dy in (-1, 1):
        if 0 <= y + dy < h:
            out.append((y + dy) * w + x)
    if torus and node_w > 2 and (x == nx0 or x == nx0 + node_w - 1):
        out.append(y * w + (nx0 if x != nx0 else nx0 + node_w - 1))
    if torus and node_h > 2 and (y == ny0 or y == ny0 + node_h - 1):
        out.append((ny0 if y != ny0 else ny0 + node_h - 1) * w + x)
    if cfg.extra_ports == "ruche":
        s = cfg.ruche_stride
        cw, ch = cfg.chiplet_w, cfg.chiplet_h
        for dx in (-s, s):
            x2 = x + dx
            if torus and node_w > 2 and not nx0 <= x2 < nx0 + node_w:
                x2 = nx0 + (x2 - nx0) % node_w
            if 0 <= x2 < w and x2 // cw == x // cw:
                out.append(y * w + x2)
        for dy in (-s, s):
            y2 = y + dy
            if torus and node_h > 2 and not ny0 <= y2 < ny0 + node_h:
                y2 = ny0 + (y2 - ny0) % node_h
            if 0 <= y2 < h and y2 // ch == y // ch:
                out.append(y2 * w + x)
    return sorted(set(out) - {t})


def _bfs_diameter(cfg: MachineConfig) -> int:
    n = cfg.n_tiles
    adj = [router_neighbors(cfg, t) for t in range(n)]
    diam = 0
    dist = np.empty(n, dtype=np.int32)
    for s in range(n):
        dist.fill(-1)
        dist[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                du = dist[u]
                for v in adj[u]:
                    if dist[v] < 0:
                        dist[v] = du + 1
                        nxt.append(v)
            frontier = nxt
        diam = max(diam, int(dist.max()))
    return diam
