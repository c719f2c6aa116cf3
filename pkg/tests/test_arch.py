"""Configuration, address-map and topology tests.

Diameter expectations are frozen from an independent all-pairs BFS oracle
over the router adjacency graph (the closed forms must agree with it).
"""
import pytest
from hypothesis import given, settings, strategies as st

from tilesim.arch import (
    MachineConfig, ConfigError, parse_config, serialize_config, apply_setting,
    router_neighbors, _bfs_diameter, MESH, TORUS,
)


def cfg(**kw) -> MachineConfig:
    c = MachineConfig(**kw)
    c.validate()
    return c


# ------------------------------------------------------------------ parsing

SAMPLE = """
# an 8x8 single-chiplet grid on a torus
tiles_x = 8
tiles_y = 8            # height
noc_topology = folded_torus2d
spm_kib = 128
dram.channels = 0
params.sram_read_pj_bit = 0.2
queue.iq.1 = 16
"""


def test_parse_basics():
    c = parse_config(SAMPLE)
    assert c.tiles_x == 8 and c.tiles_y == 8
    assert c.noc_topology == TORUS
    assert c.spm_kib == 128
    assert c.params.sram_read_pj_bit == 0.2
    assert c.iq_capacity == {1: 16}


def test_parse_unknown_key_is_hard_error():
    with pytest.raises(ConfigError):
        parse_config("tiles_q = 8\n")
    with pytest.raises(ConfigError):
        parse_config("dram.bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("params.nonesuch = 1\n")


def test_parse_serialize_fixed_point():
    c1 = parse_config(SAMPLE)
    s1 = serialize_config(c1)
    c2 = parse_config(s1)
    s2 = serialize_config(c2)
    assert s1 == s2
    assert c1 == c2


def test_checksum_tracks_content():
    c1 = parse_config(SAMPLE)
    c2 = parse_config(SAMPLE)
    assert c1.checksum() == c2.checksum()
    apply_setting(c2, "spm_kib", "256")
    assert c1.checksum() != c2.checksum()


def test_cache_mode_requires_dram():
    with pytest.raises(ConfigError):
        cfg(spm_mode="cache_direct")
    c = cfg(spm_mode="cache_direct", dram=__import__("tilesim").DramConfig(channels=8))
    assert c.dram.channels == 8


# ------------------------------------------------------------- address map

def test_tile_of_address_slices():
    c = cfg(tiles_x=4, tiles_y=4, spm_kib=64)
    sl = c.tile_slice_bytes
    assert sl == 64 * 1024
    assert c.tile_of_address(0) == 0
    assert c.tile_of_address(sl - 1) == 0
    assert c.tile_of_address(sl) == 1
    assert c.tile_of_address(16 * sl - 1) == 15
    with pytest.raises(ConfigError):
        c.tile_of_address(16 * sl)
    with pytest.raises(ConfigError):
        c.tile_of_address(-1)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10**7))
@settings(max_examples=60, deadline=None)
def test_address_round_trip(w, h, off):
    c = MachineConfig(tiles_x=w, tiles_y=h, spm_kib=64)
    t = off % c.n_tiles
    base = t * c.tile_slice_bytes
    inner = off % c.tile_slice_bytes
    assert c.tile_of_address(base + inner) == t


# --------------------------------------------------------------- topology

# (w, h, topology) -> diameter, frozen from the all-pairs BFS oracle
FROZEN_DIAMETERS = {
    (4, 4, MESH): 6,
    (4, 4, TORUS): 4,
    (8, 8, MESH): 14,
    (8, 8, TORUS): 8,
    (5, 3, MESH): 6,
    (5, 3, TORUS): 3,
    (8, 4, TORUS): 6,
}


@pytest.mark.parametrize("w,h,topo", sorted(FROZEN_DIAMETERS))
def test_diameter_closed_form_matches_frozen(w, h, topo):
    c = cfg(tiles_x=w, tiles_y=h, noc_topology=topo)
    assert c.network_diameter() == FROZEN_DIAMETERS[(w, h, topo)]


@pytest.mark.parametrize("w,h,topo", sorted(FROZEN_DIAMETERS))
def test_diameter_closed_form_matches_bfs(w, h, topo):
    c = cfg(tiles_x=w, tiles_y=h, noc_topology=topo)
    assert c.network_diameter() == _bfs_diameter(c)


def test_diameter_multi_chiplet_seamless():
    # chiplet boundaries change latency, not hop counts
    c = cfg(tiles_x=4, tiles_y=4, chiplets_x=2, chiplets_y=2)
    assert c.grid_w == 8 and c.grid_h == 8
    assert c.network_diameter() == 14
    assert c.network_diameter() == _bfs_diameter(c)


def test_diameter_ruche_via_bfs():
    c = cfg(tiles_x=8, tiles_y=8, extra_ports="ruche", ruche_stride=4)
    d = c.network_diameter()
    assert d == _bfs_diameter(c)
    assert d < 14  # express links must shorten the longest path


def test_diameter_multi_node_mesh_across():
    c = cfg(tiles_x=4, tiles_y=4, nodes_x=2, noc_topology=TORUS)
    # two 4x4 torus nodes side by side joined by mesh links
    assert c.network_diameter() == _bfs_diameter(c)


def test_neighbors_symmetry():
    for c in (cfg(tiles_x=6, tiles_y=5, noc_topology=TORUS),
              cfg(tiles_x=8, tiles_y=8, extra_ports="ruche", ruche_stride=3),
              cfg(tiles_x=4, tiles_y=4, chiplets_x=2, nodes_x=2, noc_topology=TORUS)):
        for t in range(c.n_tiles):
            for u in router_neighbors(c, t):
                assert t in router_neighbors(c, u)
