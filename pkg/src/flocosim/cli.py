"""Command-line entry point.

Subcommands:
  run              train with one or more seeds, write metrics CSVs + manifest
  surface          write loss-surface CSVs for the global and client test sets
  partition-stats  write the client-class histogram CSV
  compare          join two metrics CSVs: TTA improvements and final-ACC deltas
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

from .config import parse_config
from .federation import FederationConfig, run_experiment
from .metrics import loss_surface_grid, tta_improvement
from .rng import RngStream
from .runner import (
    build_experiment_data,
    histogram_csv,
    read_metrics_csv,
    run_sweep,
    surface_csv,
)


def _load_config(config_path, strategy, tau, rho, m) -> FederationConfig:
    text = Path(config_path).read_text(encoding="utf-8") if config_path else ""
    cfg = parse_config(text)
    overrides = {}
    if strategy is not None:
        overrides["strategy"] = strategy
    if tau is not None:
        overrides["tau"] = tau
    if rho is not None:
        overrides["rho"] = rho
    if m is not None:
        overrides["simplex_dim"] = m
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides).validate()
    return cfg


def _common_options(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True), default=None)(f)
    f = click.option("--out", "out_dir", type=click.Path(), default="out")(f)
    f = click.option("--strategy", type=str, default=None)(f)
    f = click.option("--tau", type=int, default=None)(f)
    f = click.option("--rho", type=float, default=None)(f)
    f = click.option("--m", type=int, default=None)(f)
    return f


@click.group()
def main():
    """Deterministic federated-learning simulator."""


@main.command()
@_common_options
@click.option("--seeds", type=int, default=1, show_default=True)
def run(config_path, out_dir, strategy, tau, rho, m, seeds):
    """Run the experiment for each seed and persist metrics + manifest."""
    cfg = _load_config(config_path, strategy, tau, rho, m)
    manifest = run_sweep(cfg, seeds, Path(out_dir))
    for seed, name in manifest["outputs"].items():
        click.echo(f"seed {seed}: {Path(out_dir) / name}")


@main.command()
@_common_options
@click.option("--n-points", type=int, default=500, show_default=True)
def surface(config_path, out_dir, strategy, tau, rho, m, n_points):
    """Train once, then write loss-surface CSVs (global + one per client)."""
    cfg = _load_config(config_path, strategy, tau, rho, m)
    dataset, part, global_test = build_experiment_data(cfg)
    _, state, clients = run_experiment(cfg, dataset, part, global_test)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rngs = RngStream(cfg.master_seed)
    rows = loss_surface_grid(state.model, global_test, n_points, rngs.stream("surface", "global"))
    (out / "surface_global.csv").write_text(surface_csv(rows), encoding="utf-8", newline="\n")
    for c in clients:
        rows = loss_surface_grid(state.model, c.test, n_points, rngs.stream("surface", c.id))
        (out / f"surface_client{c.id}.csv").write_text(
            surface_csv(rows), encoding="utf-8", newline="\n"
        )
    click.echo(f"wrote {1 + len(clients)} surface files to {out}")


@main.command("partition-stats")
@_common_options
def partition_stats(config_path, out_dir, strategy, tau, rho, m):
    """Write the per-client class histogram CSV."""
    cfg = _load_config(config_path, strategy, tau, rho, m)
    dataset, part, _ = build_experiment_data(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "partition_stats.csv"
    path.write_text(histogram_csv(dataset, part), encoding="utf-8", newline="\n")
    click.echo(f"wrote {path}")


@main.command()
@click.argument("baseline_csv", type=click.Path(exists=True))
@click.argument("method_csv", type=click.Path(exists=True))
def compare(baseline_csv, method_csv):
    """TTA improvements and final-metric deltas of METHOD_CSV over BASELINE_CSV."""
    base = read_metrics_csv(Path(baseline_csv))
    meth = read_metrics_csv(Path(method_csv))
    if base["round"] != meth["round"]:
        click.echo("error: metrics files use different evaluation grids", err=True)
        sys.exit(1)
    for label, col in (("global", "global_acc"), ("local", "mean_local_acc")):
        b = list(zip(base["round"], base[col]))
        mcurve = list(zip(meth["round"], meth[col]))
        res = tta_improvement(b, mcurve)
        click.echo(f"tta_improvement_{label}: x{res.value:.3g} ({res.flag})")
    for col in base:
        if col == "round":
            continue
        delta = meth[col][-1] - base[col][-1]
        click.echo(f"final_{col}_delta: {delta:+.9g}")


if __name__ == "__main__":
    main()
