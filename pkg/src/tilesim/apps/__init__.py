"""Kernel registry.

Every kernel shares one compiled dispatcher (``app_body``) keyed by
``ctx.ag[AG_APP]``, so the engine is compiled exactly once no matter how
many kernels a process runs, and the on-disk compilation cache stays
warm across processes.
"""
from __future__ import annotations

from numba import njit

from ..arch import ConfigError
from ..core import CI_NOC_PS
from ..ops import APP_PR, APP_SPMV, APP_SPMM, APP_FFT, APP_HIST, APP_WCC
from .common import APP_EMPTY, AG_APP, AppProgram
from .graphs import traversal_body
from .pagerank import pagerank_body, make_pagerank
from .spmv import spmv_body, make_spmm
from .histogram import histogram_body, make_histogram
from .fft3d import fft3d_body, make_fft3d
from .search import make_search


@njit(cache=True, nogil=True)
def app_body(ctx, tl, p, chan, msg, start):
    a = ctx.ag[AG_APP]
    if a <= APP_WCC:
        traversal_body(ctx, tl, p, chan, msg, start)
    elif a == APP_PR:
        pagerank_body(ctx, tl, p, chan, msg, start)
    elif a == APP_SPMV or a == APP_SPMM:
        spmv_body(ctx, tl, p, chan, msg, start)
    elif a == APP_FFT:
        fft3d_body(ctx, tl, p, chan, msg, start)
    elif a == APP_HIST:
        histogram_body(ctx, tl, p, chan, msg, start)
    # APP_EMPTY: nothing to do


def _make_empty(opts=None):
    def plan(cfg, ds):
        return {"mem_bytes": cfg.n_tiles * 64}

    def setup(ctx, cfg, ds):
        ctx.ag[AG_APP] = APP_EMPTY

    def finalize(ctx, cfg, ds, res):
        return {"time_s": res.runtime_cycles * int(ctx.cfgi[CI_NOC_PS]) * 1e-12}

    return AppProgram(
        name="empty", channels=[], epoch_mode="none",
        plan=plan, setup=setup, finalize=finalize)


_FACTORIES = {
    "bfs": lambda o: make_search("bfs", "none", o),
    "bfs_global": lambda o: make_search("bfs", "global", o),
    "bfs_local": lambda o: make_search("bfs", "local", o),
    "sssp": lambda o: make_search("sssp", "none", o),
    "sssp_global": lambda o: make_search("sssp", "global", o),
    "sssp_local": lambda o: make_search("sssp", "local", o),
    "wcc": lambda o: make_search("wcc", "none", o),
    "wcc_global": lambda o: make_search("wcc", "global", o),
    "wcc_local": lambda o: make_search("wcc", "local", o),
    "pagerank": make_pagerank,
    "spmv": lambda o: make_spmm(0, o),
    "spmm": lambda o: make_spmm(4, o),
    "fft3d": make_fft3d,
    "histogram": make_histogram,
    "empty": _make_empty,
}

APP_NAMES = sorted(_FACTORIES)


def get_app(name: str, opts: dict | None = None) -> AppProgram:
    """Build the named kernel program. ``opts`` tunes kernel parameters
    (root, iters, damping, bins, cols)."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown app '{name}'; known: {', '.join(APP_NAMES)}") from None
    return factory(opts)
