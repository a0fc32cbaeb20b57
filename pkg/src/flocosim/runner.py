"""Run orchestration: data setup, seed sweeps, CSV and manifest persistence."""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from .federation import ClientState, FederationConfig, GlobalState, run_experiment
from .metrics import RoundMetrics
from .partition import (
    LabeledDataset,
    PartitionResult,
    partition_dirichlet,
    partition_fivefold,
    partition_histogram,
    synth_blobs,
)
from .rng import RngStream

METRICS_HEADER = ",".join(RoundMetrics.FIELDS)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def build_experiment_data(cfg: FederationConfig):
    """Synthesize the dataset, client partition, and an IID global test set.

    The global test set is a fresh draw from the same class blobs (same
    centroids), sized at 20% of the training pool.
    """
    rng = RngStream(cfg.master_seed).stream("data")
    n_test_pc = max(1, round(0.2 * cfg.n_per_class))
    per = cfg.n_per_class + n_test_pc
    full = synth_blobs(cfg.n_classes, cfg.input_dim, per, cfg.spread, rng)
    main_idx, test_idx = [], []
    for c in range(cfg.n_classes):
        start = c * per
        main_idx.extend(range(start, start + cfg.n_per_class))
        test_idx.extend(range(start + cfg.n_per_class, start + per))
    dataset = full.subset(main_idx)
    global_test = full.subset(test_idx)

    if cfg.partition == "dirichlet":
        part = partition_dirichlet(
            dataset, cfg.n_clients, cfg.dirichlet_beta, RngStream(cfg.master_seed).stream("partition")
        )
    elif cfg.partition == "fivefold":
        part = partition_fivefold(dataset, cfg.n_clients, cfg.fivefold_q, cfg.fivefold_groups)
    else:
        raise ValueError(f"unknown partition scheme: {cfg.partition}")
    return dataset, part, global_test


def run_seed(cfg: FederationConfig):
    """One full experiment for the config's master seed."""
    dataset, part, global_test = build_experiment_data(cfg)
    return run_experiment(cfg, dataset, part, global_test)


def metrics_to_csv(metrics: list[RoundMetrics]) -> str:
    lines = [METRICS_HEADER]
    for row in metrics:
        lines.append(",".join(_fmt(getattr(row, f)) for f in RoundMetrics.FIELDS))
    return "\n".join(lines) + "\n"


def write_metrics(metrics: list[RoundMetrics], path: Path) -> None:
    path.write_text(metrics_to_csv(metrics), encoding="utf-8", newline="\n")


def read_metrics_csv(path: Path) -> dict[str, list[float]]:
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    header = lines[0].split(",")
    cols: dict[str, list[float]] = {h: [] for h in header}
    for line in lines[1:]:
        for h, v in zip(header, line.split(",")):
            cols[h].append(float(v))
    return cols


def run_sweep(cfg: FederationConfig, n_seeds: int, out_dir: Path) -> dict:
    """Run `n_seeds` seeds (master_seed + i) and persist metrics plus a manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    seed_paths = {}
    for i in range(n_seeds):
        seed = cfg.master_seed + i
        seed_cfg = dataclasses.replace(cfg, master_seed=seed)
        metrics, _, _ = run_seed(seed_cfg)
        path = out_dir / f"metrics_{cfg.strategy}_seed{seed}.csv"
        write_metrics(metrics, path)
        seed_paths[seed] = path.name
    manifest = {
        "config": dataclasses.asdict(cfg),
        "master_seed": cfg.master_seed,
        "n_seeds": n_seeds,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "outputs": seed_paths,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def histogram_csv(dataset: LabeledDataset, part: PartitionResult) -> str:
    lines = ["client_id,class_id,count"]
    for client_id, class_id, count in partition_histogram(dataset, part):
        lines.append(f"{client_id},{class_id},{count}")
    return "\n".join(lines) + "\n"


def surface_csv(rows) -> str:
    """Loss-surface rows as CSV: alpha coordinates, loss, accuracy, tag."""
    m_plus_1 = rows[0][0].size
    header = ",".join(f"alpha_{i}" for i in range(m_plus_1)) + ",loss,accuracy,tag"
    lines = [header]
    for alpha, loss, acc, tag in rows:
        coords = ",".join(_fmt(a) for a in alpha)
        lines.append(f"{coords},{_fmt(loss)},{_fmt(acc)},{tag}")
    return "\n".join(lines) + "\n"
