"""Search kernels: breadth-first search, single-source shortest paths,
and connected components by minimum-label propagation.

All three run over the symmetrized graph and share the traversal body in
``graphs``: improvements arrive on the visit channel, improved vertices
join the tile's pending ring, and expansion tasks push new candidate
values to the owners of the neighbors. Each comes in three flavors:
asynchronous (no barriers), global epochs, and tile-local epochs.
"""
from __future__ import annotations

import heapq

import numpy as np

from ..arch import ConfigError
from .common import (
    APP_BFS, APP_SSSP, APP_WCC, AG_APP, AG_MODE, AG_V, AG_ROOT,
    AppProgram, Channel, COMB_MIN2_I64, COMB_MIN2_F32,
    alloc_array, split_counts,
)
from .graphs import (
    A_OUT, A_AUX, A_FL, A_FC, base_layouts, make_plan, place_graph,
    gather, scatter,
)
from ..core import CI_NOC_PS

INF_LEVEL = np.int32(1 << 30)   # unreached sentinel, fits the i32 payload

_CH_TRAV = {
    "bfs": [Channel(1, COMB_MIN2_I64), Channel(3)],
    "sssp": [Channel(1, COMB_MIN2_F32), Channel(3)],
    "wcc": [Channel(1, COMB_MIN2_I64), Channel(3)],
}
_APP_ID = {"bfs": APP_BFS, "sssp": APP_SSSP, "wcc": APP_WCC}


# ----------------------------------------------------------------- oracles

def bfs_levels(g, root: int) -> np.ndarray:
    """Hop distance from root, INF_LEVEL where unreachable."""
    lvl = np.full(g.V, INF_LEVEL, dtype=np.int32)
    lvl[root] = 0
    frontier = np.array([root], dtype=np.int64)
    d = np.int32(0)
    rp, ci = g.row_ptr, g.col_idx
    while frontier.size:
        counts = rp[frontier + 1] - rp[frontier]
        total = int(counts.sum())
        if total == 0:
            break
        off = np.zeros(len(counts), dtype=np.int64)
        np.cumsum(counts[:-1], out=off[1:])
        ptr = (np.repeat(rp[frontier] - off, counts)
               + np.arange(total, dtype=np.int64))
        nbr = ci[ptr]
        cand = np.unique(nbr[lvl[nbr] == INF_LEVEL])
        d += 1
        lvl[cand] = d
        frontier = cand.astype(np.int64)
    return lvl


def sssp_dists(g, root: int) -> np.ndarray:
    """Dijkstra with float32 prefix sums along paths, inf if unreachable."""
    dist = np.full(g.V, np.inf, dtype=np.float32)
    dist[root] = 0.0
    rp, ci, va = g.row_ptr, g.col_idx, g.vals
    heap = [(np.float32(0.0), root)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e in range(rp[v], rp[v + 1]):
            u = int(ci[e])
            nd = np.float32(np.float32(d) + va[e])
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def wcc_labels(g) -> np.ndarray:
    """Minimum vertex id in each connected component."""
    lab = np.arange(g.V, dtype=np.int64)
    dst = g.col_idx.astype(np.int64)
    src = g.src_of_edges()
    order = np.argsort(dst, kind="stable")
    ds_ = dst[order]
    ss = src[order]
    uniq, starts = np.unique(ds_, return_index=True)
    while True:
        new = lab.copy()
        if len(uniq):
            inc = np.minimum.reduceat(lab[ss], starts)
            new[uniq] = np.minimum(new[uniq], inc)
        new = np.minimum(new, new[new])   # pointer jumping
        if np.array_equal(new, lab):
            return lab.astype(np.int32)
        lab = new


# ------------------------------------------------------------ app programs

def _resolve_root(ds, opts) -> int:
    r = (opts or {}).get("root")
    if r is None:
        return int(ds.oracle("root_default",
                             lambda: int(np.argmax(ds.sym.out_degrees()))))
    return int(r)


def _graph_of(ds, name):
    if getattr(ds, "kind", None) != "graph":
        raise ConfigError(f"{name} needs a graph dataset")
    return ds.sym


def make_search(kind: str, mode: str, opts=None):
    """AppProgram for one search kernel.

    mode: "none" (asynchronous), "global", or "local".
    """
    name = kind if mode == "none" else f"{kind}_{mode}"
    vals = kind == "sssp"
    channels = _CH_TRAV[kind]

    def plan(cfg, ds):
        g = _graph_of(ds, name)
        root = _resolve_root(ds, opts)
        if kind != "wcc" and not 0 <= root < g.V:
            raise ConfigError(f"{name}: root {root} outside [0, {g.V})")
        vc, vstart, ec, lay = base_layouts(cfg, g, vals, 2)
        T = cfg.n_tiles
        lay += [(A_AUX, vc, 2), (A_FL, vc, 2),
                (A_FC, np.ones(T, dtype=np.int64), 3)]
        return make_plan(cfg, lay, channels, name)

    def setup(ctx, cfg, ds):
        g = _graph_of(ds, name)
        T = cfg.n_tiles
        vc, vstart, cursors = place_graph(ctx, cfg, g, vals, 2)
        alloc_array(ctx, A_AUX, vc, 2, cursors)
        alloc_array(ctx, A_FL, vc, 2, cursors)
        alloc_array(ctx, A_FC, np.ones(T, dtype=np.int64), 3, cursors)
        if kind == "bfs":
            scatter(ctx, A_OUT, np.full(g.V, INF_LEVEL, dtype=np.int32))
        elif kind == "sssp":
            scatter(ctx, A_OUT, np.full(g.V, np.inf, dtype=np.float32))
        else:
            scatter(ctx, A_OUT, np.arange(g.V, dtype=np.int32))
        ctx.ag[AG_APP] = _APP_ID[kind]
        ctx.ag[AG_MODE] = 0 if mode == "none" else 1
        ctx.ag[AG_V] = g.V
        ctx.ag[AG_ROOT] = _resolve_root(ds, opts)

    def _expected(ds):
        root = _resolve_root(ds, opts)
        if kind == "bfs":
            return ds.oracle(("bfs", root), lambda: bfs_levels(ds.sym, root))
        if kind == "sssp":
            return ds.oracle(("sssp", root), lambda: sssp_dists(ds.sym, root))
        return ds.oracle("wcc", lambda: wcc_labels(ds.sym))

    def check(ctx, cfg, ds):
        want = _expected(ds)
        if kind == "sssp":
            got = gather(ctx, A_OUT, np.float32)
            fin = np.isfinite(want)
            ok = (np.array_equal(fin, np.isfinite(got))
                  and np.allclose(got[fin], want[fin], rtol=1e-6, atol=1e-6))
        else:
            got = gather(ctx, A_OUT, np.int32)
            ok = np.array_equal(got, want)
        if ok:
            return True, f"{name}: output matches reference"
        bad = int(np.flatnonzero(np.asarray(got != want).ravel())[0]) \
            if got.shape == want.shape else -1
        return False, (f"{name}: mismatch at vertex {bad}: "
                       f"got {got[bad]!r} want {want[bad]!r}" if bad >= 0
                       else f"{name}: output shape mismatch")

    def finalize(ctx, cfg, ds, res):
        g = ds.sym
        t_s = res.runtime_cycles * int(ctx.cfgi[CI_NOC_PS]) * 1e-12
        if kind == "wcc":
            m = int(g.E)
        else:
            root = _resolve_root(ds, opts)
            deg = g.out_degrees()
            if kind == "bfs":
                reach = _expected(ds) < INF_LEVEL
            else:
                reach = np.isfinite(_expected(ds))
            m = int(deg[reach].sum())
        return {"time_s": t_s, "edges": m,
                "teps": m / t_s if t_s > 0 else 0.0}

    return AppProgram(
        name=name, channels=channels, epoch_mode=mode, max_epochs=0,
        plan=plan, setup=setup, finalize=finalize, check=check)
