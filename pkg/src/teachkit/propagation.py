"""Similarity graph construction and harmonic belief propagation.

The teacher's estimate of a student's per-item class distribution is a
Gaussian-random-field harmonic function on an RBF similarity graph: items the
student has answered are boundary nodes clamped to one-hot rows at the
student's answer (right or wrong), and every other node's belief is the
weight-averaged belief of its neighbors. Solving the grounded-Laplacian
linear system gives all unlabeled beliefs at once, and a rank-one identity
gives the exact post-update beliefs for hypothetically labeling any single
candidate without refactorizing — the workhorse of expected-error-reduction
candidate scans.

Self-similarity (the unit diagonal of the weight matrix) is excluded from
degree sums and from propagation, so interior beliefs are exact weighted
neighbor averages and the maximum principle holds entrywise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpotri

DIAGONAL_JITTER = 1e-10  # guards factorization against duplicate points
INVERSE_CACHE_LIMIT = 2048  # explicit inverse cached at or below this size


class PropagationError(RuntimeError):
    """Internal-consistency failure in the harmonic solver."""


class DisconnectedGraphError(ValueError):
    """An unlabeled node has no path to any labeled node."""


class SimilarityGraph:
    """Symmetric RBF similarity matrix with cached degree sums.

    Attributes:
        weights: (N, N) symmetric matrix, unit diagonal, off-diagonal in [0, 1].
        degrees: (N,) sums of off-diagonal weights per node.
        gamma: length scale used to build the weights (kept for provenance).
    """

    def __init__(self, weights: np.ndarray, gamma: float, validate: bool = True):
        weights = np.asarray(weights, dtype=np.float64)
        if validate:
            if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
                raise ValueError(f"weight matrix must be square, got {weights.shape}")
            if weights.shape[0] < 2:
                raise ValueError("graph needs at least 2 nodes")
            if not np.all(np.isfinite(weights)):
                raise ValueError("weight matrix contains non-finite entries")
            if not np.allclose(weights, weights.T, atol=1e-12, rtol=0.0):
                raise ValueError("weight matrix must be symmetric within 1e-12")
            if not np.allclose(np.diag(weights), 1.0):
                raise ValueError("diagonal entries must equal 1 (self-similarity)")
            off = weights[~np.eye(weights.shape[0], dtype=bool)]
            if off.min() < 0.0 or off.max() > 1.0:
                raise ValueError("off-diagonal weights must lie in [0, 1]")
        self.weights = weights
        self.gamma = float(gamma)
        self.degrees = weights.sum(axis=1) - np.diag(weights)
        # Zero weights only appear after sparsification; they trigger
        # connectivity checks before each solve.
        n = weights.shape[0]
        self.has_zero_weights = bool(
            np.count_nonzero(weights) < n * n
        )

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]


def build_similarity(features: np.ndarray, gamma: float) -> SimilarityGraph:
    """Build the dense RBF graph w_ij = exp(-gamma * ||x_i - x_j||^2)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError(f"need a 2-D feature matrix with >= 2 rows, got {features.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    sq_norms = np.einsum("ij,ij->i", features, features)
    dist_sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (features @ features.T)
    np.maximum(dist_sq, 0.0, out=dist_sq)
    dist_sq = 0.5 * (dist_sq + dist_sq.T)  # exact symmetry before exponentiation
    if not np.all(np.isfinite(dist_sq)):
        raise ValueError("non-finite pairwise distance")
    weights = np.exp(-gamma * dist_sq)
    np.fill_diagonal(weights, 1.0)
    return SimilarityGraph(weights, gamma, validate=False)


def sparsify_topk(graph: SimilarityGraph, k: int) -> SimilarityGraph:
    """Keep each node's k strongest neighbors, symmetrized by union.

    Intended for very large N; can disconnect the graph, in which case
    harmonic solves raise DisconnectedGraphError.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    w = graph.weights.copy()
    n = w.shape[0]
    off = w - np.eye(n)  # exclude self when ranking neighbors
    keep = np.zeros_like(w, dtype=bool)
    top = np.argpartition(-off, min(k, n - 1), axis=1)[:, : min(k, n - 1)]
    rows = np.repeat(np.arange(n), top.shape[1])
    keep[rows, top.ravel()] = True
    keep |= keep.T
    np.fill_diagonal(keep, True)
    w[~keep] = 0.0
    return SimilarityGraph(w, graph.gamma, validate=False)


@dataclass(frozen=True)
class Partition:
    """Index split between the answered (labeled) and remaining items.

    labeled preserves teaching order; unlabeled is ascending and stable for
    the lifetime of the state it belongs to.
    """

    labeled: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self) -> None:
        overlap = np.intersect1d(self.labeled, self.unlabeled)
        if overlap.size:
            raise ValueError(f"labeled and unlabeled overlap at {overlap[:5]}")


def _one_hot(c: int, n_classes: int) -> np.ndarray:
    if not 0 <= c < n_classes:
        raise ValueError(f"class index {c} out of range for {n_classes} classes")
    row = np.zeros(n_classes)
    row[c] = 1.0
    return row


def _validate_label_rows(Ft: np.ndarray) -> None:
    for i, row in enumerate(Ft):
        nonzero = np.nonzero(row)[0]
        if nonzero.size == 0:
            continue  # no answer yet; legal but unusual
        if nonzero.size != 1 or row[nonzero[0]] != 1.0:
            raise ValueError(f"labeled row {i} is neither all-zero nor one-hot")


def _check_reachable(weights: np.ndarray, labeled: np.ndarray) -> None:
    adjacency = weights > 0.0
    np.fill_diagonal(adjacency, False)
    reached = np.zeros(weights.shape[0], dtype=bool)
    reached[labeled] = True
    frontier = np.asarray(labeled)
    while frontier.size:
        neighbors = adjacency[frontier].any(axis=0) & ~reached
        frontier = np.nonzero(neighbors)[0]
        reached |= neighbors
    if not reached.all():
        raise DisconnectedGraphError("disconnected unlabeled node")


class HarmonicSolverState:
    """One student's belief state: clamped answers plus propagated beliefs.

    The grounded system (S_uu - W_uu) is factorized once per construction;
    its explicit inverse is cached lazily when the unlabeled block is small
    enough (inverse_cache_limit), which makes per-candidate hypothetical
    updates O(|unlabeled| * n_classes).

    Mutating operations return new states; reads are pure and safe to run
    concurrently between writes.
    """

    def __init__(
        self,
        graph: SimilarityGraph,
        labeled_ids,
        Ft: np.ndarray,
        n_classes: int,
        inverse_cache_limit: int = INVERSE_CACHE_LIMIT,
    ):
        labeled = np.asarray(list(labeled_ids), dtype=int)
        if labeled.size != np.unique(labeled).size:
            raise ValueError("labeled ids contain duplicates")
        Ft = np.asarray(Ft, dtype=np.float64).reshape(labeled.size, n_classes)
        _validate_label_rows(Ft)
        unlabeled = np.setdiff1d(np.arange(graph.n_nodes), labeled)
        self.graph = graph
        self.partition = Partition(labeled=labeled, unlabeled=unlabeled)
        self.Ft = Ft
        self.n_classes = n_classes
        self.inverse_cache_limit = inverse_cache_limit
        self._unlabeled_pos = {int(g): i for i, g in enumerate(unlabeled)}
        self._inverse: np.ndarray | None = None

        if labeled.size == 0:
            self._factor = None
            self.unlabeled_beliefs = np.full(
                (unlabeled.size, n_classes), 1.0 / n_classes
            )
            return

        if graph.has_zero_weights:
            _check_reachable(graph.weights, labeled)
        w = graph.weights
        system = -w[np.ix_(unlabeled, unlabeled)]
        diag = np.arange(unlabeled.size)
        system[diag, diag] = graph.degrees[unlabeled] + DIAGONAL_JITTER
        try:
            self._factor = sla.cho_factor(system, lower=True, overwrite_a=True)
        except np.linalg.LinAlgError as exc:
            raise DisconnectedGraphError("disconnected unlabeled node") from exc
        boundary = w[np.ix_(unlabeled, labeled)] @ Ft
        self.unlabeled_beliefs = sla.cho_solve(self._factor, boundary)

    @classmethod
    def initial(
        cls,
        graph: SimilarityGraph,
        n_classes: int,
        inverse_cache_limit: int = INVERSE_CACHE_LIMIT,
    ) -> "HarmonicSolverState":
        """State before any answer: uniform beliefs everywhere."""
        return cls(graph, [], np.zeros((0, n_classes)), n_classes, inverse_cache_limit)

    @property
    def n_labeled(self) -> int:
        return self.partition.labeled.size

    @property
    def n_unlabeled(self) -> int:
        return self.partition.unlabeled.size

    def unlabeled_position(self, item: int) -> int:
        try:
            return self._unlabeled_pos[int(item)]
        except KeyError:
            raise KeyError(f"item {item} is not unlabeled") from None

    @property
    def inverse_block(self) -> np.ndarray:
        """Explicit inverse of the grounded system (cached below the size limit)."""
        if self._factor is None:
            raise PropagationError("no labeled items: grounded system undefined")
        if self._inverse is None:
            inv, info = dpotri(self._factor[0], lower=1)
            if info != 0:
                raise PropagationError(f"inverse computation failed (dpotri info={info})")
            inverse = np.tril(inv) + np.tril(inv, -1).T
            if self.n_unlabeled > self.inverse_cache_limit:
                return inverse
            self._inverse = inverse
        return self._inverse

    def inverse_columns(self, positions: np.ndarray) -> np.ndarray:
        """Columns of the inverse at the given unlabeled positions."""
        if self._factor is None:
            raise PropagationError("no labeled items: grounded system undefined")
        if self._inverse is not None:
            return self._inverse[:, positions]
        if self.n_unlabeled <= self.inverse_cache_limit:
            return self.inverse_block[:, positions]
        rhs = np.zeros((self.n_unlabeled, len(positions)))
        rhs[np.asarray(positions), np.arange(len(positions))] = 1.0
        return sla.cho_solve(self._factor, rhs)

    def beliefs(self) -> np.ndarray:
        """Full (N, n_classes) belief matrix: clamped rows plus propagated rows."""
        out = np.empty((self.graph.n_nodes, self.n_classes))
        out[self.partition.unlabeled] = self.unlabeled_beliefs
        if self.n_labeled:
            out[self.partition.labeled] = self.Ft
        return out

    def hypothetical_update(self, item: int, label: int) -> np.ndarray:
        """Beliefs over the remaining unlabeled items if `item` were answered `label`.

        Exact (up to roundoff) equivalent of moving the item into the labeled
        set with a one-hot row and re-solving, computed as a rank-one update
        from one inverse column. Returns an (n_unlabeled - 1, n_classes)
        matrix whose row order is the unlabeled order with `item` removed.
        """
        pos = self.unlabeled_position(item)
        target = _one_hot(label, self.n_classes)
        if self._factor is None:
            # One clamped node on a connected graph pulls every belief to its
            # label: the constant extension is the exact harmonic solution.
            if self.graph.has_zero_weights:
                _check_reachable(self.graph.weights, np.array([item]))
            return np.tile(target, (self.n_unlabeled - 1, 1))
        column = self.inverse_columns(np.array([pos]))[:, 0]
        pivot = column[pos]
        if pivot <= 0.0:
            raise PropagationError(
                f"inverse diagonal {pivot} at position {pos} is not positive"
            )
        updated = self.unlabeled_beliefs + np.outer(
            column / pivot, target - self.unlabeled_beliefs[pos]
        )
        return np.delete(updated, pos, axis=0)

    def refresh_after_answer(self, item: int, answered_class: int) -> "HarmonicSolverState":
        """Clamp `item` to the student's answer and refactorize.

        The answer is the student's, not ground truth; wrong answers are
        propagated as given. Refactorizing from scratch each round is cheap
        at teaching-set scale and keeps the state simple.
        """
        if item in set(map(int, self.partition.labeled)):
            raise ValueError(f"item {item} already labeled")
        self.unlabeled_position(item)  # raises if unknown
        new_labeled = np.append(self.partition.labeled, item)
        new_Ft = np.vstack([self.Ft, _one_hot(answered_class, self.n_classes)])
        return HarmonicSolverState(
            self.graph, new_labeled, new_Ft, self.n_classes, self.inverse_cache_limit
        )

    def with_relabel(self, item: int, answered_class: int) -> "HarmonicSolverState":
        """Overwrite an already-labeled item's clamped row with a newer answer.

        Used when a strategy re-shows an image: the partition is unchanged, so
        the existing factorization is reused and only the boundary term is
        re-propagated.
        """
        labeled_list = list(map(int, self.partition.labeled))
        if item not in labeled_list:
            raise ValueError(f"item {item} is not labeled")
        new_Ft = self.Ft.copy()
        new_Ft[labeled_list.index(item)] = _one_hot(answered_class, self.n_classes)
        clone = object.__new__(HarmonicSolverState)
        clone.graph = self.graph
        clone.partition = self.partition
        clone.Ft = new_Ft
        clone.n_classes = self.n_classes
        clone.inverse_cache_limit = self.inverse_cache_limit
        clone._unlabeled_pos = self._unlabeled_pos
        clone._inverse = self._inverse
        clone._factor = self._factor
        boundary = self.graph.weights[
            np.ix_(self.partition.unlabeled, self.partition.labeled)
        ] @ new_Ft
        clone.unlabeled_beliefs = sla.cho_solve(self._factor, boundary)
        return clone


def harmonic_solve(
    graph: SimilarityGraph,
    labeled_ids,
    Ft: np.ndarray,
    n_classes: int | None = None,
    inverse_cache_limit: int = INVERSE_CACHE_LIMIT,
) -> HarmonicSolverState:
    """Solve the grounded-Laplacian system for the given clamped answers."""
    Ft = np.asarray(Ft, dtype=np.float64)
    if n_classes is None:
        if Ft.ndim != 2:
            raise ValueError("Ft must be 2-D when n_classes is not given")
        n_classes = Ft.shape[1]
    labeled = list(labeled_ids)
    if not labeled:
        raise ValueError("labeled set must be nonempty; use HarmonicSolverState.initial")
    return HarmonicSolverState(graph, labeled, Ft, n_classes, inverse_cache_limit)


def predict_class(beliefs: np.ndarray, index: int) -> int:
    """Argmax class for one item's belief row; ties go to the lowest class."""
    return int(np.argmax(beliefs[index]))
