"""Evaluation quantities: accuracy, calibration, time-to-accuracy, variances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelState, forward
from .numerics import sample_uniform_simplex
from .partition import LabeledDataset
from .simplex import uniform_center

TTA_REACHED = "reached"
TTA_UNDERLINED = "underlined"
TTA_DID_NOT_REACH = "did-not-reach"


@dataclass
class RoundMetrics:
    round: int
    global_acc: float
    mean_local_acc: float
    global_ece: float
    mean_local_ece: float
    total_grad_variance: float
    worst5_local_acc: float

    FIELDS = (
        "round",
        "global_acc",
        "mean_local_acc",
        "global_ece",
        "mean_local_ece",
        "total_grad_variance",
        "worst5_local_acc",
    )


def accuracy(predictor, dataset: LabeledDataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    probs = predictor(dataset.features)
    return float(np.mean(np.argmax(probs, axis=1) == dataset.labels))


def ece(probs, labels, bins: int = 10) -> float:
    """Binned expected calibration error.

    Samples are bucketed by max-probability confidence into equal-width bins
    over (0, 1]; the result is the count-weighted mean absolute gap between
    per-bin accuracy and per-bin confidence.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or np.any(probs < -1e-9) or np.any(np.abs(probs.sum(axis=1) - 1) > 1e-6):
        raise ValueError("rows must be probability vectors")
    conf = probs.max(axis=1)
    correct = np.argmax(probs, axis=1) == labels
    # Bin b covers (b/bins, (b+1)/bins].
    idx = np.ceil(conf * bins).astype(np.int64) - 1
    np.clip(idx, 0, bins - 1, out=idx)
    n = conf.size
    total = 0.0
    for b in range(bins):
        mask = idx == b
        nb = mask.sum()
        if nb:
            total += (nb / n) * abs(correct[mask].mean() - conf[mask].mean())
    return float(total)


@dataclass
class TTAResult:
    value: float
    flag: str


def tta_improvement(baseline_curve, method_curve) -> TTAResult:
    """Time-to-accuracy ratio of a method against a baseline curve.

    The target is the baseline's best accuracy; both TTAs are first evaluation
    rounds reaching it.  A method already past the target at its first
    evaluation is flagged "underlined"; one that never reaches it returns 0
    with a "did-not-reach" flag.
    """
    base = list(baseline_curve)
    meth = list(method_curve)
    if not base or not meth:
        raise ValueError("empty curve")
    if [r for r, _ in base] != [r for r, _ in meth]:
        raise ValueError("curves use different evaluation grids")
    target = max(acc for _, acc in base)
    tta_base = next(r for r, acc in base if acc >= target)
    tta_meth = next((r for r, acc in meth if acc >= target), None)
    if tta_meth is None:
        return TTAResult(0.0, TTA_DID_NOT_REACH)
    first_round = meth[0][0]
    if tta_meth == first_round and meth[0][1] > target:
        return TTAResult(tta_base / first_round, TTA_UNDERLINED)
    return TTAResult(tta_base / tta_meth, TTA_REACHED)


def worst_fraction_accuracy(local_accs, fraction: float) -> float:
    """Mean accuracy of the worst ceil(fraction * K) clients."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    accs = np.sort(np.asarray(local_accs, dtype=np.float64))
    if accs.size == 0:
        raise ValueError("empty accuracy list")
    take = math.ceil(fraction * accs.size)
    return float(accs[:take].mean())


def total_gradient_variance(updates) -> float:
    """Sum over clients of squared distance from the mean update.

    Accepts either flat per-client updates (K, P) or per-client endpoint
    stacks (K, M+1, P); the endpoint form averages the per-endpoint sums over
    the M+1 endpoints, so it reduces to the flat form when M = 0.
    """
    u = np.asarray(updates, dtype=np.float64)
    if u.shape[0] < 2:
        raise ValueError("need updates from at least 2 clients")
    if u.ndim == 2:
        centered = u - u.mean(axis=0)
        return float(np.sum(centered**2))
    if u.ndim == 3:
        centered = u - u.mean(axis=0)
        return float(np.sum(centered**2) / u.shape[1])
    raise ValueError("updates must be a 2-D or 3-D array")


def loss_surface_grid(
    model: ModelState,
    dataset: LabeledDataset,
    n_points: int,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, float, float, str]]:
    """Loss and accuracy over sampled simplex points, plus center and vertices.

    Returns n_points sampled rows followed by the center row and the M+1
    vertex rows, each as (alpha, loss, accuracy, tag).
    """
    m = model.head.m
    points = [(sample_uniform_simplex(m, rng), "sample") for _ in range(n_points)]
    points.append((uniform_center(m), "center"))
    for v in range(m + 1):
        vertex = np.zeros(m + 1)
        vertex[v] = 1.0
        points.append((vertex, "vertex"))

    labels = dataset.labels
    rows = []
    for alpha, tag in points:
        probs = forward(model, alpha, dataset.features)
        picked = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
        loss = float(-np.mean(np.log(picked)))
        acc = float(np.mean(np.argmax(probs, axis=1) == labels))
        rows.append((alpha, loss, acc, tag))
    return rows
