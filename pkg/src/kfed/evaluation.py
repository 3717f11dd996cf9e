"""Scoring: k-means cost, permutation-matched accuracy, cost-ratio summary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .local import Clustering


@dataclass
class EvalResult:
    accuracy: float
    misclassified: int
    permutation: dict[int, int]  # predicted label -> matched true label
    kmeans_cost: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "misclassified": self.misclassified,
            "permutation": {str(a): b for a, b in self.permutation.items()},
            "kmeans_cost": self.kmeans_cost,
        }


@dataclass
class CostRatio:
    """Relative cost ratio (structured excess over random excess)."""

    ratio: float | None
    degenerate: bool = False
    note: str = ""


def _labels_of(clustering) -> np.ndarray:
    if isinstance(clustering, Clustering):
        return np.asarray(clustering.assignment, dtype=int)
    return np.asarray(clustering, dtype=int)


def kmeans_cost(data: np.ndarray, clustering) -> float:
    """Sum of squared distances of each row to its cluster's mean."""
    data = np.asarray(data, dtype=float)
    labels = _labels_of(clustering)
    if labels.shape[0] != data.shape[0]:
        raise ValueError("labels do not cover the data rows")
    total = 0.0
    for r in np.unique(labels):
        block = data[labels == r]
        diff = block - block.mean(axis=0)
        total += float(np.einsum("nd,nd->", diff, diff))
    return total


def matched_accuracy(pred, truth) -> EvalResult:
    """Best label-bijection agreement between two clusterings.

    Solves the assignment problem on the contingency matrix, padding with
    empty pseudo-clusters when the label ranges differ.
    """
    pred_labels = _labels_of(pred)
    true_labels = _labels_of(truth)
    if pred_labels.shape != true_labels.shape:
        raise ValueError("clusterings cover different row sets")
    if pred_labels.min(initial=0) < 0 or true_labels.min(initial=0) < 0:
        raise ValueError("labels must be nonnegative; restrict to covered rows")
    n = pred_labels.shape[0]
    size = int(max(pred_labels.max(), true_labels.max())) + 1
    table = np.zeros((size, size), dtype=np.int64)
    np.add.at(table, (pred_labels, true_labels), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    agreement = int(table[rows, cols].sum())
    permutation = {int(a): int(b) for a, b in zip(rows, cols)}
    return EvalResult(accuracy=agreement / n,
                      misclassified=n - agreement,
                      permutation=permutation)


def evaluate_clustering(data: np.ndarray, pred, truth) -> EvalResult:
    """matched_accuracy plus the k-means cost of the prediction."""
    result = matched_accuracy(pred, truth)
    result.kmeans_cost = kmeans_cost(data, pred)
    return result


def cost_ratio_report(oracle_cost: float, structured_cost: float,
                      random_cost: float, eps: float = 1e-12) -> CostRatio:
    """(structured - oracle) / (random - oracle); below 1 favors structured."""
    if random_cost <= oracle_cost + eps:
        return CostRatio(ratio=None, degenerate=True,
                         note="degenerate: random matches oracle")
    return CostRatio(ratio=(structured_cost - oracle_cost)
                     / (random_cost - oracle_cost))
