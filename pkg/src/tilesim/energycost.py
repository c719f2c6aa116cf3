"""Energy, power, area, and dollar cost of the modeled machine.

Everything here is a pure function of the counters collected during a run,
the machine config, and the technology parameters. Nothing touches
simulation state, so the same reports can be recomputed later from the
counters file with altered parameters and no re-simulation. With unchanged
inputs the rendered output is byte-identical to the in-run reports.
"""
from __future__ import annotations

import math

from .arch import (
    MachineConfig, ConfigError, parse_config, apply_setting,
    INTEG_3D, SPM_SCRATCHPAD,
)
from .core import CT_NAMES, CC_NAMES
from .memory import sram_mux_factor

COUNTERS_FORMAT = "tilesim-counters-1"

# overridable config keys at post-processing time: operating points change
# voltage and wall seconds but never the simulated cycle counts
_PP_CFG_KEYS = ("freq_op_pu", "freq_op_noc")


# ------------------------------------------------------------ closed forms

def voltage(freq_ghz: float, node_nm: float, p=None) -> float:
    """Supply voltage at an operating frequency on a process node."""
    a, b, c = (0.06, 0.13, 0.06) if p is None else (p.volt_base, p.volt_freq,
                                                    p.volt_node)
    return a + b * freq_ghz + c * node_nm


def murphy_yield(die_area_mm2: float, defect_per_mm2: float) -> float:
    """Fraction of fabricated dies that work, Murphy's model."""
    da = defect_per_mm2 * die_area_mm2
    if da <= 0.0:
        return 1.0
    return ((1.0 - math.exp(-da)) / da) ** 2


def dies_per_wafer(die_w_mm: float, die_h_mm: float, p) -> int:
    """Whole dies on one wafer: axis-aligned grid of (die + scribe) pitches
    anchored at the wafer center, a die counting iff its full rectangle
    lies inside the usable disc."""
    r = p.wafer_mm / 2.0 - p.wafer_edge_loss_mm
    if die_w_mm > 2 * r or die_h_mm > 2 * r:
        return 0
    pw = die_w_mm + p.scribe_mm
    ph = die_h_mm + p.scribe_mm
    ni = int(math.ceil(r / pw)) + 1
    nj = int(math.ceil(r / ph)) + 1
    r2 = r * r
    count = 0
    for i in range(-ni, ni + 1):
        x0 = i * pw
        x1 = x0 + die_w_mm
        for j in range(-nj, nj + 1):
            y0 = j * ph
            y1 = y0 + die_h_mm
            # rectangle inside the disc iff all four corners are
            if (x0 * x0 + y0 * y0 <= r2 and x1 * x1 + y0 * y0 <= r2
                    and x0 * x0 + y1 * y1 <= r2 and x1 * x1 + y1 * y1 <= r2):
                count += 1
    return count


# ------------------------------------------------------------------- area

def _freq_area_scale(target_ghz: float, p) -> float:
    return 1.0 + p.freq_area_slope * (target_ghz - p.default_freq_ghz) / p.default_freq_ghz


def _phy_edges(cfg: MachineConfig):
    """(edge name, tiles along it, crossing links) for each chiplet edge
    that carries traffic to another chiplet anywhere in the system."""
    edges = []
    if cfg.chiplet_cols > 1:
        for name in ("east", "west"):
            edges.append((name, cfg.tiles_y, cfg.tiles_y))
    chip_rows = cfg.n_chiplets // cfg.chiplet_cols
    if chip_rows > 1:
        for name in ("north", "south"):
            edges.append((name, cfg.tiles_x, cfg.tiles_x))
    return edges


def compute_area(cfg: MachineConfig, p=None) -> dict:
    """Itemized silicon area. All per-chiplet items in mm2; the package and
    system totals add DRAM footprints and multiply out the hierarchy."""
    p = p or cfg.params
    t = cfg.tiles_x * cfg.tiles_y      # tiles on one chiplet die
    pu = t * cfg.pus_per_tile * p.pu_area_mm2 * _freq_area_scale(cfg.freq_target_pu, p)
    router = t * p.router_area_mm2 * _freq_area_scale(cfg.freq_target_noc, p) * cfg.num_physical_nocs

    sram_total = t * (cfg.spm_kib / 1024.0) / p.sram_density_mb_mm2
    tag_frac = 0.0
    if cfg.spm_mode != SPM_SCRATCHPAD:
        line_b = cfg.cacheline_bits // 8
        tag_frac = 4.0 / (line_b + 4)   # 32 tag+state bits per line live in SPM
    sram_tags = sram_total * tag_frac
    sram_data = sram_total - sram_tags

    # chiplet boundary PHY, provisioned identically on every die
    phy_bw_gbs = 0.0
    beachfront = []
    for name, tiles, links in _phy_edges(cfg):
        bw = links * cfg.inter_chiplet_link_bits * cfg.freq_op_noc * cfg.num_physical_nocs
        phy_bw_gbs += bw
        edge_mm = tiles * p.tile_pitch_mm
        need_gbit_mm = bw / edge_mm
        if need_gbit_mm > p.phy_mcm_gbit_mm:
            raise ConfigError(
                f"beachfront bandwidth on the {name} edge needs "
                f"{need_gbit_mm:.0f} Gbit/s/mm, PHY density allows "
                f"{p.phy_mcm_gbit_mm:.0f}")
        beachfront.append((name, need_gbit_mm))
    phy = phy_bw_gbs / p.phy_mcm_gbit_mm2

    memctrl = p.memctrl_area_mm2 if cfg.dram.channels > 0 else 0.0
    die = pu + router + sram_total + phy + memctrl
    side = math.sqrt(die)

    if cfg.dram.channels > 0:
        hbm = p.dram_mm2_per_device        # 3D stack: capacity does not grow it
        if cfg.dram.integration == INTEG_3D:
            footprint = max(die, hbm)
        else:
            footprint = die + hbm
    else:
        hbm = 0.0
        footprint = die
    chiplets_per_pkg = cfg.chiplets_x * cfg.chiplets_y
    n_pkgs = (cfg.packages_x * cfg.packages_y * cfg.nodes_x * cfg.nodes_y)
    package = footprint * chiplets_per_pkg
    return {
        "items": {
            "pu": pu, "router": router, "sram.data": sram_data,
            "sram.tags": sram_tags, "phy": phy, "memctrl": memctrl,
        },
        "die_mm2": die, "die_side_mm": side,
        "hbm_mm2": hbm, "footprint_mm2": footprint,
        "package_mm2": package, "system_mm2": package * n_pkgs,
        "beachfront_gbit_mm": dict(beachfront),
        "phy_bw_gbs": phy_bw_gbs,
    }


# ----------------------------------------------------------------- energy

def runtime_seconds(meta: dict, cfg: MachineConfig) -> dict:
    """Wall seconds per frequency domain; the engine keeps domains in step,
    so the run takes the slowest domain's time."""
    noc_s = meta["runtime_cycles.noc"] / (cfg.freq_op_noc * 1e9)
    pu_s = meta["runtime_cycles.pu"] / (cfg.freq_op_pu * 1e9)
    return {"noc": noc_s, "pu": pu_s, "total": max(noc_s, pu_s)}


def compute_energy(counters: dict, meta: dict, cfg: MachineConfig,
                   p=None, area: dict | None = None) -> dict:
    p = p or cfg.params
    area = area or compute_area(cfg, p)
    c = counters
    pj = 1e-12
    v0 = voltage(p.default_freq_ghz, p.process_node_nm, p)
    vr_pu = (voltage(cfg.freq_op_pu, p.process_node_nm, p) / v0) ** 2
    vr_noc = (voltage(cfg.freq_op_noc, p.process_node_nm, p) / v0) ** 2
    secs = runtime_seconds(meta, cfg)
    wid = cfg.noc_width_bits
    mux = sram_mux_factor(cfg.spm_kib, p)

    flit_plain = c["flit_hops"] - c["flit_hops.express"]
    wire_mm = (flit_plain + c["flit_hops.express"] * cfg.ruche_stride) * p.tile_pitch_mm
    d2d_pj = (p.d2d_stacked_pj_bit if cfg.dram.integration == INTEG_3D
              else p.d2d_pj_bit)

    n_dev = cfg.n_chiplets if cfg.dram.channels > 0 else 0
    cap_bits = n_dev * cfg.dram.capacity_gb * (1 << 30) * 8
    refresh_periods = secs["total"] / (p.dram_refresh_ms * 1e-3)

    banks = max(1, -(-cfg.spm_kib // p.sram_base_kib))

    items = {
        "pu.int": c["instr.int"] * p.pu_int_pj * vr_pu * pj,
        "pu.fp": c["instr.fp"] * p.pu_fp_pj * vr_pu * pj,
        "pu.branch": c["instr.branch"] * p.pu_branch_pj * vr_pu * pj,
        "pu.mem": c["instr.mem"] * p.pu_mem_pj * vr_pu * pj,
        "sram.read": c["sram.read_bits"] * p.sram_read_pj_bit * mux * pj,
        "sram.write": c["sram.write_bits"] * p.sram_write_pj_bit * mux * pj,
        "sram.tags": c["sram.tag_reads"] * p.sram_tag_pj * pj,
        "sram.static": (p.sram_static_mw_per_bank * 1e-3 * banks
                        * cfg.n_tiles * secs["total"]),
        "noc.router": c["flit_hops"] * wid * p.router_pj_bit * vr_noc * pj,
        "noc.wire": wire_mm * wid * p.noc_wire_pj_bit_mm * vr_noc * pj,
        "d2d": c["xbits.chiplet"] * d2d_pj * pj,
        "off_package": (c["xbits.package"] + c["xbits.node"])
                       * p.off_package_pj_bit * pj,
        "dram.rw": (c["dram.read_bits"] + c["dram.write_bits"])
                   * p.dram_pj_bit * pj,
        "dram.refresh": cap_bits * p.dram_refresh_pj_bit * pj * refresh_periods,
    }
    total = 0.0
    for v in items.values():
        total += v
    power = total / secs["total"] if secs["total"] > 0 else 0.0
    return {
        "items": items, "total_j": total,
        "runtime_s": secs,
        "avg_power_w": power,
        "power_density_w_mm2": power / area["system_mm2"],
    }


# ------------------------------------------------------------------- cost

def _die_price(area_mm2: float, p) -> float:
    """Price of one good compute die of the given (square) size."""
    side = math.sqrt(area_mm2)
    n = dies_per_wafer(side, side, p)
    if n == 0:
        raise ConfigError(f"die of {area_mm2:.0f} mm2 does not fit the wafer")
    good = n * murphy_yield(area_mm2, p.defect_per_mm2)
    return p.wafer_usd / good


def compute_cost(cfg: MachineConfig, p=None, area: dict | None = None) -> dict:
    p = p or cfg.params
    area = area or compute_area(cfg, p)
    die_cost = _die_price(area["die_mm2"], p)
    n_chip = cfg.n_chiplets
    n_pkgs = cfg.packages_x * cfg.packages_y * cfg.nodes_x * cfg.nodes_y

    paired = n_chip if cfg.dram.channels > 0 else 0
    interposer = 0.0
    if paired and cfg.dram.integration != INTEG_3D:
        interposer = paired * p.interposer_frac * die_cost

    substrate = n_pkgs * p.substrate_frac * _die_price(area["package_mm2"], p)
    dies = n_chip * die_cost
    bonding = p.bonding_frac * (dies + interposer + substrate)
    hbm = paired * cfg.dram.capacity_gb * p.hbm_usd_per_gb
    items = {
        "compute_dies": dies, "interposers": interposer,
        "substrates": substrate, "bonding": bonding, "hbm": hbm,
    }
    total = 0.0
    for v in items.values():
        total += v
    return {"items": items, "total_usd": total, "die_usd": die_cost,
            "dies_per_wafer": dies_per_wafer(area["die_side_mm"],
                                             area["die_side_mm"], p),
            "die_yield": murphy_yield(area["die_mm2"], p.defect_per_mm2)}


# ---------------------------------------------------------------- reports

def build_reports(counters: dict, meta: dict, cfg: MachineConfig,
                  p=None) -> dict:
    p = p or cfg.params
    area = compute_area(cfg, p)
    energy = compute_energy(counters, meta, cfg, p, area)
    cost = compute_cost(cfg, p, area)
    return {"area": area, "energy": energy, "cost": cost}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_reports(reports: dict, meta: dict) -> str:
    """Human-readable tables plus a machine-readable key-value block.
    Deterministic: fixed item order, full-precision floats."""
    area, energy, cost = reports["area"], reports["energy"], reports["cost"]
    out = []
    out.append("== run ==")
    for k in ("app", "dataset", "grid_w", "grid_h", "workers"):
        out.append(f"  {k:<22} {meta.get(k, '')}")
    out.append(f"  {'runtime_cycles.noc':<22} {meta['runtime_cycles.noc']}")
    out.append(f"  {'runtime_us':<22} {energy['runtime_s']['total'] * 1e6:.3f}")
    out.append("== area (mm2) ==")
    for k, v in area["items"].items():
        out.append(f"  {k:<22} {v:12.4f}")
    out.append(f"  {'die total':<22} {area['die_mm2']:12.4f}")
    out.append(f"  {'package':<22} {area['package_mm2']:12.4f}")
    out.append(f"  {'system':<22} {area['system_mm2']:12.4f}")
    out.append("== energy (J) ==")
    for k, v in energy["items"].items():
        out.append(f"  {k:<22} {v:12.6e}")
    out.append(f"  {'total':<22} {energy['total_j']:12.6e}")
    out.append(f"  {'avg power (W)':<22} {energy['avg_power_w']:12.6e}")
    out.append(f"  {'power density (W/mm2)':<22} {energy['power_density_w_mm2']:12.6e}")
    out.append("== cost (USD) ==")
    for k, v in cost["items"].items():
        out.append(f"  {k:<22} {v:12.2f}")
    out.append(f"  {'total':<22} {cost['total_usd']:12.2f}")
    out.append(f"  {'per compute die':<22} {cost['die_usd']:12.2f}")
    out.append("== values ==")
    kv = {}
    for k, v in area["items"].items():
        kv[f"area.{k}"] = v
    kv["area.die_mm2"] = area["die_mm2"]
    kv["area.package_mm2"] = area["package_mm2"]
    kv["area.system_mm2"] = area["system_mm2"]
    for k, v in energy["items"].items():
        kv[f"energy.{k}"] = v
    kv["energy.total_j"] = energy["total_j"]
    kv["energy.avg_power_w"] = energy["avg_power_w"]
    kv["energy.power_density_w_mm2"] = energy["power_density_w_mm2"]
    kv["runtime.s.noc"] = energy["runtime_s"]["noc"]
    kv["runtime.s.pu"] = energy["runtime_s"]["pu"]
    kv["runtime.s.total"] = energy["runtime_s"]["total"]
    for k, v in cost["items"].items():
        kv[f"cost.{k}"] = v
    kv["cost.total_usd"] = cost["total_usd"]
    kv["cost.die_usd"] = cost["die_usd"]
    kv["cost.dies_per_wafer"] = cost["dies_per_wafer"]
    kv["cost.die_yield"] = cost["die_yield"]
    for k, v in kv.items():
        out.append(f"{k} = {_fmt(v)}")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------- counters file

def counters_to_text(meta: dict, counters: dict) -> str:
    lines = [f"meta.format = {COUNTERS_FORMAT}"]
    for k, v in meta.items():
        lines.append(f"meta.{k} = {v}")
    for k in sorted(counters):
        lines.append(f"{k} = {counters[k]}")
    return "\n".join(lines) + "\n"


def parse_counters(text: str) -> tuple[dict, dict]:
    meta, counters = {}, {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        key, _, val = ln.partition("=")
        key = key.strip()
        val = val.strip()
        try:
            val = int(val)
        except ValueError:
            pass
        if key.startswith("meta."):
            meta[key[5:]] = val
        else:
            counters[key] = val
    if meta.get("format") != COUNTERS_FORMAT:
        raise ConfigError(f"not a counters file (format={meta.get('format')!r})")
    return meta, counters


def postprocess(counters_path: str, config_path: str,
                overrides=()) -> tuple[dict, str]:
    """Recompute all reports from a finished run's artifacts. ``overrides``
    are ``key=value`` strings naming technology parameters or operating
    frequencies; anything else is rejected."""
    with open(counters_path) as f:
        meta, counters = parse_counters(f.read())
    with open(config_path) as f:
        cfg = parse_config(f.read())
    if int(meta.get("config_checksum", -1)) != cfg.checksum():
        raise ConfigError(
            "counters file was produced with a different config "
            f"(checksum {meta.get('config_checksum')} != {cfg.checksum()})")
    for ov in overrides:
        key, _, val = ov.partition("=")
        key = key.strip()
        if not _:
            raise ConfigError(f"override must be key=value: {ov!r}")
        if key in _PP_CFG_KEYS:
            apply_setting(cfg, key, val.strip())
        else:
            try:
                cfg.params.override(key, val.strip())
            except KeyError as e:
                raise ConfigError(str(e)) from None
    reports = build_reports(counters, meta, cfg)
    return reports, render_reports(reports, meta)
