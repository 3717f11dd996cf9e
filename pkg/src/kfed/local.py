"""Device-local clustering: spectral projection, seeding, thresholding, Lloyd.

The pipeline run on each device is: project the local data onto its top-k
singular subspace, seed k centers on the projected rows, keep only points
that are at least three times closer to their nearest center than to every
other center, average those sets, then run plain Lloyd iterations on the
original (unprojected) rows until the centers stop moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ProjectedMatrix, top_k_projection, validate_matrix
from .rng import Stream

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 500
_SEED_RESTARTS = 5


@dataclass
class Clustering:
    """A disjoint partition of rows into k clusters with per-cluster centers."""

    assignment: np.ndarray  # (n,) ints in [0, k)
    centers: np.ndarray     # (k, d)
    k: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def members(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == r)

    @classmethod
    def from_labels(cls, data: np.ndarray, labels: np.ndarray, k: int,
                    empty_centers: np.ndarray | None = None) -> "Clustering":
        """Build a clustering from a label vector, centers = cluster means.

        ``empty_centers`` supplies fallback coordinates for labels that do
        not occur; without it an absent label is an error.
        """
        data = np.asarray(data, dtype=float)
        labels = np.asarray(labels, dtype=int)
        centers = np.empty((k, data.shape[1]))
        for r in range(k):
            rows = labels == r
            if rows.any():
                centers[r] = data[rows].mean(axis=0)
            elif empty_centers is not None:
                centers[r] = empty_centers[r]
            else:
                raise ValueError(f"cluster {r} has no members")
        return cls(assignment=labels, centers=centers, k=k)


@dataclass
class LocalResult:
    """Output of one device solve: final clusters plus solver telemetry."""

    clusters: Clustering
    unassigned_after_threshold: int
    lloyd_iterations: int
    cost_history: list[float] = field(default_factory=list)

    @property
    def centers(self) -> np.ndarray:
        return self.clusters.centers


def _rows(data) -> np.ndarray:
    if isinstance(data, ProjectedMatrix):
        return data.values
    return validate_matrix(data)


def _sq_distances(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = data[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assignment_cost(data: np.ndarray, labels: np.ndarray,
                     centers: np.ndarray) -> float:
    diff = data - centers[labels]
    return float(np.einsum("nd,nd->", diff, diff))


def _count_distinct_rows(data: np.ndarray) -> int:
    return np.unique(data, axis=0).shape[0]


def _lloyd(data: np.ndarray, centers: np.ndarray, tol: float,
           max_iter: int) -> tuple[Clustering, int, list[float]]:
    """Lloyd iterations; returns (clustering, iterations, per-iteration cost).

    Nearest-center ties go to the lowest cluster index. A cluster that
    loses all members keeps its previous center. The returned centers are
    exactly the means of the returned assignment (for nonempty clusters).
    """
    centers = np.array(centers, dtype=float)
    k = centers.shape[0]
    costs: list[float] = []
    labels = np.zeros(data.shape[0], dtype=int)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        labels = _sq_distances(data, centers).argmin(axis=1)
        updated = centers.copy()
        for r in range(k):
            rows = labels == r
            if rows.any():
                updated[r] = data[rows].mean(axis=0)
        costs.append(_assignment_cost(data, labels, updated))
        shift = float(np.sqrt(((updated - centers) ** 2).sum(axis=1)).max())
        centers = updated
        if shift < tol:
            break
    return Clustering(assignment=labels, centers=centers, k=k), iteration, costs


def lloyd_iterate(data: np.ndarray, centers: np.ndarray, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> Clustering:
    """Run Lloyd steps from ``centers`` until movement drops below ``tol``."""
    data = validate_matrix(data, "data")
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise ValueError("need at least one initial center")
    clustering, _, _ = _lloyd(data, centers, tol, max_iter)
    return clustering


def _dsq_sample(data: np.ndarray, k: int, stream: Stream) -> np.ndarray:
    """k-means++ seeding: D^2-weighted sampling of k rows."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[stream.integers(1, n)[0]]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        # Positive total is guaranteed while fewer than the number of
        # distinct rows have been chosen.
        idx = stream.choice_weighted(d2)
        centers[j] = data[idx]
        d2 = np.minimum(d2, ((data - centers[j]) ** 2).sum(axis=1))
    return centers


def approx_seed(projected, k: int, seed, tol: float = DEFAULT_TOL,
                restarts: int = _SEED_RESTARTS) -> np.ndarray:
    """Estimate k centers on the projected rows.

    k-means++ seeding refined by Lloyd, best cost over seeded restarts.
    Comfortably within the 10x-of-optimal budget the pipeline assumes;
    tests enforce that factor against an exhaustive oracle at small sizes.
    """
    data = _rows(projected)
    if not isinstance(seed, tuple):
        seed = (int(seed),)
    if data.shape[0] < k or _count_distinct_rows(data) < k:
        raise ValueError("insufficient distinct points")
    best_cost = np.inf
    best_centers: np.ndarray | None = None
    for restart in range(restarts):
        stream = Stream(*seed, restart)
        seeded = _dsq_sample(data, k, stream)
        refined, _, costs = _lloyd(data, seeded, tol, DEFAULT_MAX_ITER)
        if _count_distinct_rows(refined.centers) < k:
            continue  # degenerate restart; centers collapsed
        if costs[-1] < best_cost:
            best_cost = costs[-1]
            best_centers = refined.centers
    if best_centers is None:
        raise ValueError("seeding collapsed on every restart")
    return best_centers


def threshold_assign(projected, centers: np.ndarray
                     ) -> tuple[list[np.ndarray], np.ndarray]:
    """Keep points decisively closest to one center; average what remains.

    Row i lands in set r when its distance to center r is at most a third
    of its distance to every other center. The sets are pairwise disjoint;
    a point near the midpoint of two centers lands in none. Empty sets
    fall back to the input center so all k centers stay alive.
    """
    data = _rows(projected)
    centers = np.asarray(centers, dtype=float)
    k = centers.shape[0]
    if _count_distinct_rows(centers) < k:
        raise ValueError("centers must be distinct")
    dist = np.sqrt(_sq_distances(data, centers))
    nearest = dist.argmin(axis=1)
    rows = np.arange(data.shape[0])
    d_near = dist[rows, nearest]
    rest = dist.copy()
    rest[rows, nearest] = np.inf
    keep = 3.0 * d_near <= rest.min(axis=1)
    sets = [np.flatnonzero(keep & (nearest == r)) for r in range(k)]
    out = np.array([
        data[members].mean(axis=0) if members.size else centers[r]
        for r, members in enumerate(sets)
    ])
    return sets, out


def local_cluster(data: np.ndarray, k: int, seed, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> LocalResult:
    """Full device solve: project, seed, threshold, then Lloyd on raw rows."""
    data = validate_matrix(data, "device data")
    if k < 1:
        raise ValueError("k must be at least 1")
    if data.shape[0] < k or _count_distinct_rows(data) < k:
        raise ValueError("insufficient distinct points")
    k_eff = min(k, min(data.shape))
    projected = top_k_projection(data, k_eff)
    seeded = approx_seed(projected, k, seed, tol=tol)
    sets, theta = threshold_assign(projected, seeded)
    clustering, iterations, costs = _lloyd(data, theta, tol, max_iter)
    unassigned = data.shape[0] - sum(s.size for s in sets)
    return LocalResult(clusters=clustering,
                       unassigned_after_threshold=unassigned,
                       lloyd_iterations=iterations,
                       cost_history=costs)
