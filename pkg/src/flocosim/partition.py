"""Synthetic data generation and non-IID client partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LabeledDataset:
    features: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,)
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature/label counts disagree")
        if self.labels.size and self.labels.max() >= self.n_classes:
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes)


@dataclass
class PartitionResult:
    client_indices: list[np.ndarray]

    def __post_init__(self):
        self.client_indices = [np.asarray(ix, dtype=np.int64) for ix in self.client_indices]
        seen = np.concatenate(self.client_indices) if self.client_indices else np.empty(0)
        if len(np.unique(seen)) != len(seen):
            raise ValueError("client index lists overlap")
        for k, ix in enumerate(self.client_indices):
            if len(ix) == 0:
                raise ValueError(f"client {k} received no samples")

    @property
    def n_clients(self) -> int:
        return len(self.client_indices)


def synth_blobs(
    n_classes: int,
    dim: int,
    n_per_class: int,
    spread: float,
    rng: np.random.Generator,
) -> LabeledDataset:
    """Gaussian blobs with one centroid per class on the unit sphere."""
    if n_classes < 2 or dim < 2:
        raise ValueError("need at least 2 classes and 2 dimensions")
    centroids = rng.standard_normal((n_classes, dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    features = centroids[labels] + spread * rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, n_classes)


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer quotas proportional to weights, summing exactly to total."""
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    raw = w * total
    counts = np.floor(raw).astype(np.int64)
    short = total - counts.sum()
    # Highest fractional parts get the leftover units; ties go to lower index.
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _class_pools(labels: np.ndarray, n_classes: int, rng: np.random.Generator | None):
    pools = []
    for c in range(n_classes):
        pool = np.flatnonzero(labels == c)
        if rng is not None:
            pool = rng.permutation(pool)
        pools.append(list(pool))
    return pools


def _fill_quotas(pools, quotas: np.ndarray, budgets: np.ndarray) -> list[list[int]]:
    """Draw per-class quotas without replacement, then top up greedily."""
    n_clients, n_classes = quotas.shape
    assigned: list[list[int]] = [[] for _ in range(n_clients)]
    for k in range(n_clients):
        for c in range(n_classes):
            take = min(quotas[k, c], len(pools[c]))
            if take:
                assigned[k].extend(pools[c][:take])
                del pools[c][:take]
    for k in range(n_clients):
        missing = budgets[k] - len(assigned[k])
        for c in range(n_classes):
            if missing <= 0:
                break
            take = min(missing, len(pools[c]))
            if take:
                assigned[k].extend(pools[c][:take])
                del pools[c][:take]
                missing -= take
    return assigned


def partition_dirichlet(
    data: LabeledDataset, n_clients: int, beta: float, rng: np.random.Generator
) -> PartitionResult:
    """Label-skewed split: per-client class proportions drawn from Dirichlet(beta).

    Every client gets an equal budget of N // n_clients samples; class quotas
    within the budget follow the client's sampled proportions.
    """
    if n_clients < 1 or beta <= 0:
        raise ValueError("need n_clients >= 1 and beta > 0")
    if n_clients > len(data):
        raise ValueError("more clients than samples")
    budget = len(data) // n_clients
    budgets = np.full(n_clients, budget)
    phis = rng.dirichlet(np.full(data.n_classes, beta), size=n_clients)
    quotas = np.stack([largest_remainder(phi, budget) for phi in phis])
    pools = _class_pools(data.labels, data.n_classes, rng)
    return PartitionResult(_fill_quotas(pools, quotas, budgets))


def partition_fivefold(
    data: LabeledDataset, n_clients: int, q: float, groups: int
) -> PartitionResult:
    """Group-structured split: q% of each client's budget from its group's
    primary classes, the rest uniform over the remaining classes.

    Group g's primary classes are the g-th contiguous block of L/groups
    classes.  Deterministic: class pools are consumed in index order.
    """
    if n_clients % groups != 0:
        raise ValueError("n_clients must be divisible by groups")
    if data.n_classes % groups != 0:
        raise ValueError("class count must be divisible by groups")
    if not 0 <= q <= 100:
        raise ValueError("q must be a percentage in [0, 100]")
    budget = len(data) // n_clients
    budgets = np.full(n_clients, budget)
    per_group = data.n_classes // groups

    quotas = np.zeros((n_clients, data.n_classes), dtype=np.int64)
    clients_per_group = n_clients // groups
    for k in range(n_clients):
        g = k // clients_per_group
        primary = range(g * per_group, (g + 1) * per_group)
        weights = np.full(data.n_classes, (100.0 - q) / (data.n_classes - per_group))
        weights[list(primary)] = q / per_group
        quotas[k] = largest_remainder(weights, budget)
    pools = _class_pools(data.labels, data.n_classes, None)
    return PartitionResult(_fill_quotas(pools, quotas, budgets))


def split_train_test(
    labels: np.ndarray, test_frac: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test split of positions 0..len(labels)-1.

    Per class, round(test_frac * count) samples go to test; classes with a
    single sample stay in train.  Deterministic given the generator.
    """
    train, test = [], []
    for c in np.unique(labels):
        pos = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(test_frac * len(pos)))
        if len(pos) - n_test < 1:
            n_test = len(pos) - 1
        test.extend(pos[:n_test])
        train.extend(pos[n_test:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def partition_histogram(data: LabeledDataset, result: PartitionResult) -> np.ndarray:
    """Rows of (client_id, class_id, count) covering every pair."""
    rows = []
    for k, idx in enumerate(result.client_indices):
        counts = np.bincount(data.labels[idx], minlength=data.n_classes)
        for c in range(data.n_classes):
            rows.append((k, c, int(counts[c])))
    return np.asarray(rows, dtype=np.int64)
