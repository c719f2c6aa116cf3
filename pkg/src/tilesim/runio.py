"""Run artifacts: counters file, execution log, summary, reports.

One directory per run. The counters file carries everything the
post-processor needs; the log is line-oriented so downstream tools can
stream it. Higher verbosity only appends record kinds, so a v=3 log
contains every line a v=1 log would.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .arch import serialize_config
from .core import CT_NAMES, CC_NAMES, CI_NOC_PS, CI_PU_PS
from .energycost import (
    build_reports, render_reports, counters_to_text, parse_counters,
)


def result_counters(res) -> tuple[dict, dict]:
    """(meta, counters) dicts for a finished run."""
    ctx = res.ctx
    cfg = res.cfg
    noc_ps = int(ctx.cfgi[CI_NOC_PS])
    pu_ps = int(ctx.cfgi[CI_PU_PS])
    runtime_ps = res.runtime_cycles * noc_ps
    meta = {
        "config_checksum": cfg.checksum(),
        "app": res.app_name,
        "dataset": res.dataset or "none",
        "grid_w": cfg.grid_w,
        "grid_h": cfg.grid_h,
        "workers": res.workers,
        "epochs": res.epochs,
        "kernels": res.kernels,
        "frames": len(res.frames),
        "frame_cycles": res.frame_cycles,
        "runtime_cycles.noc": res.runtime_cycles,
        "runtime_cycles.pu": runtime_ps // pu_ps,
    }
    tot = ctx.ctr.sum(axis=0)
    counters = {name: int(tot[i]) for i, name in enumerate(CT_NAMES)}
    for ch in range(res.ctr_chan.shape[0]):
        for i, name in enumerate(CC_NAMES):
            counters[f"chan.{ch}.{name}"] = int(res.ctr_chan[ch, i])
    for ch in range(ctx.ctr_dram.shape[0]):
        counters[f"mem.dram_reqs.{ch}"] = int(ctx.ctr_dram[ch])
    return meta, counters


def _kv(names, values) -> str:
    return " ".join(f"{n}={int(v)}" for n, v in zip(names, values))


def write_log(path: str, res, verbosity: int) -> int:
    """Write the execution log; returns the number of FRAME records."""
    cfg = res.cfg
    nframes = 0
    with open(path, "w") as f:
        f.write(f"RUN app={res.app_name} dataset={res.dataset or 'none'} "
                f"grid={cfg.grid_w}x{cfg.grid_h} topology={cfg.noc_topology} "
                f"workers={res.workers} frame_cycles={res.frame_cycles} "
                f"verbosity={verbosity}\n")
        if verbosity >= 1:
            for fr in res.frames:
                agg = fr.ctr.sum(axis=0)
                f.write(f"FRAME {fr.index} - - cycle={fr.cycle} "
                        f"{_kv(CT_NAMES, agg)}\n")
                nframes += 1
                if verbosity >= 2:
                    for tl in range(cfg.n_tiles):
                        x, y = cfg.tile_xy(tl)
                        f.write(f"FRAME {fr.index} {x} {y} "
                                f"{_kv(CT_NAMES, fr.ctr[tl])}\n")
                        if verbosity >= 3:
                            iq = " ".join(f"iq.{c}={int(v)}"
                                          for c, v in enumerate(fr.iqn[tl]))
                            cq = " ".join(f"cq.{c}={int(v)}"
                                          for c, v in enumerate(fr.cqn[tl]))
                            f.write(f"QUEUE {fr.index} {x} {y} {iq} {cq}\n")
        tot = res.ctx.ctr.sum(axis=0)
        f.write(f"END runtime_cycles={res.runtime_cycles} "
                f"epochs={res.epochs} kernels={res.kernels} "
                f"{_kv(CT_NAMES, tot)}\n")
    return nframes


def write_summary(path: str, res, meta: dict, reports: dict) -> None:
    frames = []
    for fr in res.frames:
        agg = fr.ctr.sum(axis=0)
        frames.append({"index": fr.index, "cycle": fr.cycle,
                       "counters": {n: int(v)
                                    for n, v in zip(CT_NAMES, agg)}})
    doc = {
        "meta": meta,
        "metrics": _plain(res.metrics),
        "frames": frames,
        "reports": _plain(reports),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_run_dir(out_dir: str, res, verbosity: int) -> dict:
    """Write every artifact for one run; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    meta, counters = result_counters(res)
    paths = {n: os.path.join(out_dir, n) for n in
             ("counters.txt", "sim.log", "summary.json", "report.txt",
              "config.txt")}
    with open(paths["config.txt"], "w") as f:
        f.write(serialize_config(res.cfg))
    with open(paths["counters.txt"], "w") as f:
        f.write(counters_to_text(meta, counters))
    write_log(paths["sim.log"], res, verbosity)
    reports = build_reports(counters, meta, res.cfg)
    with open(paths["report.txt"], "w") as f:
        f.write(render_reports(reports, meta))
    write_summary(paths["summary.json"], res, meta, reports)
    return paths


def read_counters(path: str) -> tuple[dict, dict]:
    with open(path) as f:
        return parse_counters(f.read())
