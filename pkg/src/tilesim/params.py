"""Technology and cost model parameters.

All values describe the modeled hardware, not the simulator itself. The
defaults target a 7 nm process with HBM2E memory and can be overridden per
run from config files or --set flags (keys under ``params.``).
"""
from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class ModelParams:
    # --- process / frequency ---
    process_node_nm: float = 7.0        # process node, nm (enters the voltage formula)
    default_freq_ghz: float = 1.0       # frequency the base energies were characterized at

    # --- SRAM (scratchpad / cache data+tag store) ---
    sram_density_mb_mm2: float = 3.5    # MB per mm2
    sram_read_pj_bit: float = 0.18
    sram_write_pj_bit: float = 0.28
    sram_tag_pj: float = 6.3            # per tag-store read
    sram_base_ns: float = 0.82          # access latency up to the base bank size
    sram_base_kib: int = 512            # bank size at the base latency
    sram_step_ns: float = 1.0           # latency added per quadrupling past the base
    sram_mux_step: float = 1.5          # mux-tree energy factor per doubling past the base
    sram_static_mw_per_bank: float = 0.12  # leakage per active bank (estimate)

    # --- DRAM (HBM2E) ---
    dram_gb_per_device: float = 8.0
    dram_mm2_per_device: float = 110.0
    dram_channels_per_device: int = 8
    dram_gbs_per_channel: float = 64.0
    dram_latency_ns: float = 50.0
    dram_pj_bit: float = 3.7
    dram_refresh_ms: float = 32.0       # refresh period
    dram_refresh_pj_bit: float = 0.22   # per refreshed bit per period

    # --- off-tile interconnect ---
    phy_mcm_gbit_mm2: float = 690.0     # MCM PHY areal density
    phy_mcm_gbit_mm: float = 880.0      # MCM PHY beachfront density
    phy_interposer_gbit_mm2: float = 1070.0
    phy_interposer_gbit_mm: float = 1780.0
    d2d_ns: float = 4.0                 # die-to-die crossing latency
    d2d_pj_bit: float = 0.55
    d2d_stacked_pj_bit: float = 0.25    # shorter vertical wires in 3D stacking (estimate)
    noc_wire_ps_mm: float = 50.0
    noc_wire_pj_bit_mm: float = 0.15
    router_ps: float = 500.0            # router traversal
    router_pj_bit: float = 0.1
    io_die_ns: float = 20.0             # package/node boundary crossing latency
    off_package_pj_bit: float = 1.17
    tile_pitch_mm: float = 1.0          # wire length of one tile hop (estimate)

    # --- PU (per-instruction energies and base areas; estimates) ---
    # The per-class energy table below is a placeholder set: representative
    # numbers for a small in-order core at 7 nm, not characterized silicon.
    pu_int_pj: float = 0.9
    pu_fp_pj: float = 1.6
    pu_branch_pj: float = 0.7
    pu_mem_pj: float = 1.1              # load/store issue, excluding SRAM/DRAM
    pu_area_mm2: float = 0.02           # base PU area at 1 GHz target (estimate)
    router_area_mm2: float = 0.015      # base router area at 1 GHz target (estimate)
    memctrl_area_mm2: float = 0.5       # per DRAM-paired chiplet (estimate)
    freq_area_slope: float = 0.5        # area grows by this fraction of the target-frequency increase

    # --- voltage model: v = a + b*freq_ghz + c*node_nm ---
    volt_base: float = 0.06
    volt_freq: float = 0.13
    volt_node: float = 0.06

    # --- manufacturing cost ---
    wafer_mm: float = 300.0
    wafer_edge_loss_mm: float = 4.0
    scribe_mm: float = 0.2
    defect_per_mm2: float = 0.07
    wafer_usd: float = 6047.0
    interposer_frac: float = 0.20       # of a compute die's price, per DRAM-paired chiplet
    substrate_frac: float = 0.10        # of an equal-sized compute die's price
    bonding_frac: float = 0.05          # overhead on the package component subtotal
    hbm_usd_per_gb: float = 7.5

    def override(self, key: str, value: str) -> None:
        """Set one parameter from its string form. Unknown keys are an error."""
        for f in fields(self):
            if f.name == key:
                cur = getattr(self, key)
                setattr(self, key, type(cur)(value))
                return
        raise KeyError(f"unknown model parameter: {key}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PARAM_NAMES = tuple(f.name for f in fields(ModelParams))
