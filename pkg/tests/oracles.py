"""Independent oracles the tests compare the library against.

Nothing here shares code with the package: the spectral oracle is a
classical max-pivot Jacobi eigensolver on the full Gram matrix, the
k-means oracle enumerates set partitions outright, and the matching
oracle tries every permutation.
"""

from __future__ import annotations

import itertools

import numpy as np


def jacobi_eigenvalues(sym: np.ndarray, max_rotations: int = 100_000) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by classical Jacobi rotations.

    Pivots on the largest off-diagonal entry each step, which is the
    textbook (slow, reliable) variant.
    """
    h = np.array(sym, dtype=float)
    m = h.shape[0]
    if m == 1:
        return h[0].copy()
    scale = np.linalg.norm(h) or 1.0
    mask = ~np.eye(m, dtype=bool)
    for _ in range(max_rotations):
        off = np.abs(np.where(mask, h, 0.0))
        p, q = np.unravel_index(off.argmax(), off.shape)
        if off[p, q] <= 1e-15 * scale:
            break
        theta = 0.5 * np.arctan2(2.0 * h[p, q], h[q, q] - h[p, p])
        c, s = np.cos(theta), np.sin(theta)
        rot = np.eye(m)
        rot[p, p] = rot[q, q] = c
        rot[p, q] = s
        rot[q, p] = -s
        h = rot.T @ h @ rot
    return np.sort(np.diag(h))[::-1].copy()


def jacobi_spectral_norm(mat: np.ndarray) -> float:
    """Largest singular value via Jacobi eigendecomposition of MᵀM."""
    mat = np.asarray(mat, dtype=float)
    values = jacobi_eigenvalues(mat.T @ mat)
    return float(np.sqrt(max(values[0], 0.0)))


def svd_truncation(mat: np.ndarray, k: int) -> np.ndarray:
    """Best rank-k approximation from a dense full SVD."""
    u, s, vt = np.linalg.svd(np.asarray(mat, dtype=float), full_matrices=False)
    return (u[:, :k] * s[:k]) @ vt[:k]


def _canonical_labelings(n: int, k: int):
    """Label vectors in first-occurrence canonical form (covers all partitions)."""
    prefix = [0]

    def recurse(used: int):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for label in range(min(used + 1, k)):
            prefix.append(label)
            yield from recurse(max(used, label + 1))
            prefix.pop()

    if n == 0:
        return
    yield from recurse(1)


def brute_force_kmeans(data: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    """Exact optimal k-means cost by enumerating every partition into <= k sets."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    labelings = np.array(list(_canonical_labelings(n, k)), dtype=np.int64)
    m = labelings.shape[0]
    onehot = np.zeros((m, n, k))
    onehot[np.arange(m)[:, None], np.arange(n)[None, :], labelings] = 1.0
    counts = onehot.sum(axis=1)
    sums = np.einsum("mnk,nd->mkd", onehot, data)
    reduction = np.where(counts > 0,
                         (sums ** 2).sum(axis=2) / np.maximum(counts, 1.0), 0.0)
    costs = float((data ** 2).sum()) - reduction.sum(axis=1)
    best = int(costs.argmin())
    return float(costs[best]), labelings[best]


def brute_force_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Best agreement over every label permutation (feasible for small k)."""
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    k = int(max(pred.max(), truth.max())) + 1
    best = 0
    for perm in itertools.permutations(range(k)):
        table = np.array(perm)
        best = max(best, int((table[pred] == truth).sum()))
    return best / pred.shape[0]


def naive_kmeans_cost(data: np.ndarray, labels: np.ndarray) -> float:
    """Double-loop cost summation, no vectorized shortcuts."""
    data = np.asarray(data, dtype=float)
    labels = np.asarray(labels, dtype=int)
    total = 0.0
    for r in sorted(set(labels.tolist())):
        rows = [i for i in range(len(labels)) if labels[i] == r]
        mean = sum(data[i] for i in rows) / len(rows)
        for i in rows:
            diff = data[i] - mean
            total += float(diff @ diff)
    return total
