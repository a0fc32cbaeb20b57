"""Dense numeric primitives: PCA, simplex sampling, finite differences."""

from __future__ import annotations

from typing import Callable

import numpy as np


def pca_project(rows, target_dims: int) -> np.ndarray:
    """Project rows onto their top principal directions.

    Inputs are mean-centered; directions come from an eigen-decomposition of
    the sample covariance, ordered by decreasing variance.  Sign convention:
    the largest-magnitude component of each direction is made positive, so the
    projection is deterministic across runs.

    When there are fewer than target_dims+1 rows the trailing directions are
    undetermined; those output columns are zero.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("rows must form a 2-D array")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 rows for PCA")
    if d < target_dims:
        raise ValueError(f"row length {d} smaller than target_dims {target_dims}")

    centered = x - x.mean(axis=0)
    # Rank of centered data is at most n-1; zero out undetermined directions.
    rank = min(target_dims, n - 1, d)
    if n < d:
        # Gram trick: eigenvectors of the n x n Gram matrix map to covariance
        # eigenvectors via X^T u / s, much cheaper when rows << dims.
        gram = centered @ centered.T
        eigvals, u = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1][:rank]
        scale = np.sqrt(np.clip(eigvals[order], 1e-300, None))
        eigvecs = (centered.T @ u[:, order]) / scale
    else:
        cov = centered.T @ centered / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][:rank]
        eigvecs = eigvecs[:, order]

    basis = np.zeros((d, target_dims))
    basis[:, :rank] = eigvecs
    for j in range(rank):
        pivot = np.argmax(np.abs(basis[:, j]))
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]

    return centered @ basis


def sample_uniform_simplex(dims: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a uniform sample from the standard simplex of dimension `dims`.

    Returns a vector of dims+1 nonnegative entries summing to one, via
    normalized unit-exponential draws.
    """
    if dims < 0:
        raise ValueError("dims must be >= 0")
    if dims == 0:
        return np.ones(1)
    e = rng.standard_exponential(dims + 1)
    return e / e.sum()


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, used as a test oracle."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        hi = f(x + step)
        lo = f(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite function value near coordinate {i}")
        grad.flat[i] = (hi - lo) / (2.0 * h)
    return grad
