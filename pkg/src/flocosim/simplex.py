"""Simplex geometry: scaled-simplex projection, spreading energy, subregions.

Client representations live in the standard simplex.  A client's subregion is
the intersection of the simplex with an L1 ball around its assigned center.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import sample_uniform_simplex

COINCIDENCE_EPS = 1e-12
Z_GRID = np.round(np.arange(1, 1001) * 0.001, 3)

# Rejection sampling gives up once the estimated acceptance rate drops below
# this; the sampler then falls back to an approximate in-ball scheme.
MIN_ACCEPT_RATE = 1e-3
_MIN_PROPOSALS = 3000


def as_simplex_point(coords) -> np.ndarray:
    """Validate and normalize a barycentric coordinate vector.

    Entries >= -1e-12 are clamped to zero; the sum must be 1 within 1e-9.
    """
    a = np.asarray(coords, dtype=np.float64).copy()
    if np.any(a < -1e-12):
        raise ValueError("simplex point has a negative entry beyond tolerance")
    if abs(a.sum() - 1.0) > 1e-9:
        raise ValueError(f"simplex point sums to {a.sum()}, not 1")
    np.clip(a, 0.0, None, out=a)
    return a


def uniform_center(m: int) -> np.ndarray:
    return np.full(m + 1, 1.0 / (m + 1))


@dataclass
class Subregion:
    """L1 ball of radius rho around a simplex point, intersected with the simplex."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = as_simplex_point(self.center)
        if not 0.0 < self.radius <= 2.0:
            raise ValueError("radius must lie in (0, 2]")

    def contains(self, alpha, tol: float = 1e-9) -> bool:
        return np.abs(np.asarray(alpha) - self.center).sum() <= self.radius + tol


def whole_simplex(m: int) -> Subregion:
    # L1 diameter of the simplex is 2, so radius 2 covers it entirely.
    return Subregion(center=uniform_center(m), radius=2.0)


def make_subregion(center, rho: float) -> Subregion:
    if rho <= 0:
        raise ValueError("rho must be positive")
    return Subregion(center=center, radius=float(rho))


def project_to_scaled_simplex(kappa, z: float) -> np.ndarray:
    """Euclidean projection of kappa onto {beta >= 0, sum(beta) = z}.

    The solution is [kappa - lam]_+ with the multiplier found by bisection on
    the monotone function sum([kappa - lam]_+) - z, to within 1e-10.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    kappa = np.asarray(kappa, dtype=np.float64)
    if not np.all(np.isfinite(kappa)):
        raise ValueError("kappa must be finite")

    lo = kappa.min() - z
    hi = kappa.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.maximum(kappa - mid, 0.0).sum()
        if s > z:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    lam = 0.5 * (lo + hi)
    beta = np.maximum(kappa - lam, 0.0)
    # Snap the residual sum defect (within bisection tolerance) onto the
    # active coordinates so the constraint holds to near machine precision.
    active = beta > 0
    beta[active] += (z - beta.sum()) / active.sum()
    np.clip(beta, 0.0, None, out=beta)
    return beta


def riesz_energy(points) -> float:
    """Inverse-squared-distance energy over all ordered pairs of points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least 2 points of equal dimension")
    sq = np.sum(pts**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.clip(d2, 0.0, None, out=d2)
    inv = 1.0 / (d2 + COINCIDENCE_EPS)
    np.fill_diagonal(inv, 0.0)
    return float(inv.sum())


def _project_grid(kappas: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Vectorized scaled-simplex projection for every (z, client) pair.

    Returns betas of shape (len(grid), K, n).  Same bisection as
    project_to_scaled_simplex, run in parallel over the grid.
    """
    z = grid[:, None]  # (G, 1)
    lo = np.broadcast_to(kappas.min(axis=1)[None, :] - z, (grid.size, kappas.shape[0])).copy()
    hi = np.broadcast_to(kappas.max(axis=1)[None, :], lo.shape).copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.maximum(kappas[None, :, :] - mid[:, :, None], 0.0).sum(axis=2)
        above = s > z
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.max(hi - lo) < 1e-12:
            break
    lam = 0.5 * (lo + hi)
    betas = np.maximum(kappas[None, :, :] - lam[:, :, None], 0.0)
    active = betas > 0
    defect = (z - betas.sum(axis=2)) / active.sum(axis=2)
    betas[active] += np.broadcast_to(defect[:, :, None], betas.shape)[active]
    np.clip(betas, 0.0, None, out=betas)
    return betas


def assign_client_representations(kappas) -> list[np.ndarray]:
    """Place clients in the standard simplex from their reduced representations.

    For each z on the grid {0.001, ..., 1.000}, every kappa_k is projected
    onto the z-scaled simplex; the z whose projected configuration has the
    lowest spreading energy wins (ties broken toward smaller z) and the
    projections are rescaled back to the unit simplex.
    """
    kappas = np.asarray(kappas, dtype=np.float64)
    if kappas.ndim != 2 or kappas.shape[0] == 0:
        raise ValueError("need a nonempty 2-D array of client representations")
    if kappas.shape[0] < 2:
        raise ValueError("need at least 2 clients")

    n = kappas.shape[1]
    if np.all(kappas == kappas[0]):
        warnings.warn(
            "all client representations identical; falling back to uniform centers",
            RuntimeWarning,
        )
        return [uniform_center(n - 1) for _ in range(kappas.shape[0])]

    betas = _project_grid(kappas, Z_GRID)  # (G, K, n)
    sq = np.sum(betas**2, axis=2)  # (G, K)
    d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * np.einsum("gkn,gjn->gkj", betas, betas)
    np.clip(d2, 0.0, None, out=d2)
    inv = 1.0 / (d2 + COINCIDENCE_EPS)
    idx = np.arange(kappas.shape[0])
    inv[:, idx, idx] = 0.0
    energies = inv.sum(axis=(1, 2))
    best = int(np.argmin(energies))  # first minimum -> smallest z

    alphas = betas[best] / Z_GRID[best]
    alphas /= alphas.sum(axis=1, keepdims=True)
    return [as_simplex_point(a) for a in alphas]


class SubregionSampler:
    """Uniform sampler on a subregion, with an approximate fallback.

    Draws are uniform on the simplex and accepted when inside the L1 ball.
    Once enough proposals show the acceptance rate is below MIN_ACCEPT_RATE,
    the sampler permanently switches to an approximate scheme: a uniform
    simplex draw is pulled toward the center so its L1 distance is at most a
    uniform fraction of the radius (convexity keeps it inside both sets).
    """

    def __init__(self, region: Subregion, rng: np.random.Generator, stats: dict | None = None):
        self.region = region
        self.rng = rng
        self.m = region.center.size - 1
        # Optional shared mutable stats, so acceptance evidence accumulates
        # across samplers for the same subregion instead of being re-learned.
        self.stats = stats if stats is not None else {"proposals": 0, "accepts": 0, "approximate": False}

    @property
    def proposals(self) -> int:
        return self.stats["proposals"]

    @property
    def accepts(self) -> int:
        return self.stats["accepts"]

    @property
    def approximate(self) -> bool:
        return self.stats["approximate"]

    def _fallback_draw(self) -> np.ndarray:
        point = sample_uniform_simplex(self.m, self.rng)
        offset = point - self.region.center
        dist = np.abs(offset).sum()
        r = self.rng.uniform(0.0, self.region.radius)
        if dist > r:
            point = self.region.center + offset * (r / dist)
        return point

    def draw(self) -> np.ndarray:
        if self.region.radius >= 2.0:
            return sample_uniform_simplex(self.m, self.rng)
        if self.approximate:
            return self._fallback_draw()
        while True:
            point = sample_uniform_simplex(self.m, self.rng)
            self.stats["proposals"] += 1
            if np.abs(point - self.region.center).sum() <= self.region.radius:
                self.stats["accepts"] += 1
                return point
            if (
                self.stats["proposals"] >= _MIN_PROPOSALS
                and self.stats["accepts"] < MIN_ACCEPT_RATE * self.stats["proposals"]
            ):
                self.stats["approximate"] = True
                return self._fallback_draw()


def sample_uniform_subregion(region: Subregion, rng: np.random.Generator) -> np.ndarray:
    """One draw from the (near-)uniform distribution on the subregion."""
    return SubregionSampler(region, rng).draw()
