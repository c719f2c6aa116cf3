"""Command-line driver.

`tilesim run` simulates one app on one machine and writes the run
artifacts (counters, log, summary, reports) into an output directory.
`tilesim postprocess` recomputes the energy/area/cost reports from a
finished run's counters with optionally altered parameters.

Every flag can also be set through an environment variable named
TILESIM_<COMMAND>_<FLAG>, e.g. TILESIM_RUN_WORKERS=4.
"""
from __future__ import annotations

import os
import sys

import click

from .arch import MachineConfig, ConfigError, parse_config, apply_setting
from .engine import run_app, SimulationError
from .apps import get_app, APP_NAMES
from .apps.datasets import get_dataset
from . import energycost, runio


def _split_overrides(pairs):
    """Partition --set pairs into (config, params, app) namespaces."""
    cfg_kv, app_kv = [], {}
    for pair in pairs:
        key, sep, val = pair.partition("=")
        if not sep:
            raise click.UsageError(f"--set needs key=value, got {pair!r}")
        key = key.strip()
        val = val.strip()
        if key.startswith("app."):
            app_kv[key[4:]] = val
        else:
            cfg_kv.append((key, val))
    return cfg_kv, app_kv


@click.group(context_settings={"auto_envvar_prefix": "TILESIM"})
def main():
    """Tiled-manycore simulator."""


@main.command()
@click.option("--app", "app_name", required=True,
              type=click.Choice(sorted(APP_NAMES)), help="Kernel to run.")
@click.option("--dataset", default="", help="Dataset name or file path "
              "(rmat<scale>, hand64, fft<n>, or a .csr/.el file).")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Machine config file (key = value lines).")
@click.option("--workers", default=0, show_default="host CPUs, capped at "
              "grid columns", help="Simulation worker threads.")
@click.option("--verbosity", type=click.IntRange(0, 3), default=0,
              show_default=True,
              help="0 aggregate, 1 +frames, 2 +tiles, 3 +queues.")
@click.option("--frame-us", type=float, default=None,
              help="Logging frame interval in simulated microseconds.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field, params.<name>, or app.<name>.")
@click.option("--no-header", is_flag=True,
              help="Messages carry no header word (single-die grids).")
@click.option("--seed", default=1, show_default=True,
              help="Dataset generator seed.")
@click.option("--out-dir", default=None,
              help="Artifact directory [default runs/<app>_<dataset>].")
def run(app_name, dataset, config_path, workers, verbosity, frame_us,
        overrides, no_header, seed, out_dir):
    """Simulate one kernel and write its artifacts."""
    try:
        if config_path:
            with open(config_path) as f:
                cfg = parse_config(f.read())
        else:
            cfg = MachineConfig()
        cfg_kv, app_kv = _split_overrides(overrides)
        for key, val in cfg_kv:
            apply_setting(cfg, key, val)
        if no_header:
            cfg.no_header = True
        if frame_us is not None:
            cfg.frame_interval_us = frame_us
        cfg.validate()

        app = get_app(app_name, app_kv or None)
        ds = get_dataset(dataset, seed=seed) if dataset else None
        if workers <= 0:
            workers = max(1, min(os.cpu_count() or 1, cfg.grid_w))

        res = run_app(cfg, app, ds, workers=workers)

        if out_dir is None:
            out_dir = os.path.join("runs",
                                   f"{app_name}_{dataset or 'none'}")
        paths = runio.write_run_dir(out_dir, res, verbosity)

        ok, why = (True, "no check defined")
        if app.check is not None:
            ok, why = app.check(res.ctx, cfg, ds)
        click.echo(f"runtime {res.runtime_cycles} cycles | "
                   f"{len(res.frames)} frames | wall {res.wall_seconds:.1f}s "
                   f"| artifacts in {out_dir}")
        click.echo(("PASS " if ok else "FAIL ") + why)
        if not ok:
            sys.exit(1)
    except (ConfigError, SimulationError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command()
@click.argument("counters", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              required=True, help="Config file the run was made with.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override params.<name> fields or operating frequencies.")
@click.option("--out", "out_path", default=None,
              help="Write the report here instead of stdout.")
def postprocess(counters, config_path, overrides, out_path):
    """Recompute energy/area/cost reports from a counters file."""
    try:
        _, text = energycost.postprocess(counters, config_path, overrides)
    except (ConfigError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
