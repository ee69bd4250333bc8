"""Shared fixtures: seeded graph instances and solver-independent oracles."""

from __future__ import annotations

import numpy as np
import pytest

from teachkit.propagation import SimilarityGraph, build_similarity


def random_instance(seed: int, n: int, n_classes: int, dims: int = 2):
    """Random compact RBF instance: connected, well-conditioned weights.

    Points live in a small box so every pairwise weight stays well above the
    diagonal jitter; labels are drawn uniformly with every class present.
    """
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 2.0, size=(n, dims))
    graph = build_similarity(features, gamma=0.25)
    labels = rng.integers(0, n_classes, size=n)
    labels[:n_classes] = np.arange(n_classes)  # every class present
    return features, graph, labels


def one_hot_rows(classes, n_classes: int) -> np.ndarray:
    rows = np.zeros((len(classes), n_classes))
    rows[np.arange(len(classes)), list(classes)] = 1.0
    return rows


def dense_solve_oracle(weights: np.ndarray, labeled, Ft: np.ndarray):
    """Independent grounded-Laplacian solve built straight from the weights.

    Uses a generic LU solve with no jitter and no caching; returns
    (unlabeled_indices, beliefs) for cross-checking the production solver.
    """
    n = weights.shape[0]
    labeled = np.asarray(list(labeled), dtype=int)
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    w_off = weights.copy()
    np.fill_diagonal(w_off, 0.0)
    degrees = w_off.sum(axis=1)
    system = np.diag(degrees[unlabeled]) - w_off[np.ix_(unlabeled, unlabeled)]
    boundary = w_off[np.ix_(unlabeled, labeled)] @ np.asarray(Ft, dtype=np.float64)
    return unlabeled, np.linalg.solve(system, boundary)


def brute_eer_objective(
    weights: np.ndarray, labeled, Ft: np.ndarray, truth: np.ndarray, candidate: int
) -> float:
    """EER objective by literal re-solve: label the candidate with its true
    class, rebuild the whole system, and sum residual ground-truth error."""
    truth = np.asarray(truth, dtype=int)
    n_classes = int(truth.max()) + 1
    target = np.zeros(n_classes)
    target[truth[candidate]] = 1.0
    labeled = list(labeled)
    if labeled:
        new_Ft = np.vstack([np.asarray(Ft, dtype=np.float64), target])
    else:
        new_Ft = target[None, :]
    unlabeled, beliefs = dense_solve_oracle(weights, labeled + [candidate], new_Ft)
    truth_beliefs = beliefs[np.arange(unlabeled.size), truth[unlabeled]]
    return float((1.0 - truth_beliefs).sum())


def two_cluster_features(seed: int, per_cluster: int = 8, separation: float = 6.0):
    """Two tight, well-separated clusters; cluster = class."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.3, size=(per_cluster, 2))
    b = rng.normal(0.0, 0.3, size=(per_cluster, 2)) + np.array([separation, 0.0])
    features = np.vstack([a, b])
    labels = np.array([0] * per_cluster + [1] * per_cluster)
    return features, labels


@pytest.fixture
def path_graph() -> SimilarityGraph:
    """Three nodes in a line with unit edge weights and no end-to-end edge."""
    weights = np.array(
        [
            [1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ]
    )
    return SimilarityGraph(weights, gamma=1.0)
