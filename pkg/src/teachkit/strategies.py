"""Teaching strategies: policies that pick the next image to show a student.

Five policies share one interface. Random and class-centroid sampling ignore
the student model; worst-predicted chases the lowest ground-truth-class
belief; expected-error-reduction (EER) scores every candidate by the total
residual error that would remain if the student got that item right; batch
replays an EER run computed offline under an always-correct student.

All tie-breaking is lowest-index and all stochastic choices flow through a
caller-provided generator, so selections are reproducible from (dataset,
seed, history) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .propagation import HarmonicSolverState, SimilarityGraph, predict_class


class StrategyKind(str, Enum):
    RANDOM = "rnd"
    CENTROIDS = "cc"
    WORST_PREDICTED = "wp"
    BATCH = "batch"
    EER = "eer"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        try:
            return cls(name)
        except ValueError:
            valid = "|".join(k.value for k in cls)
            raise ValueError(f"unknown strategy {name!r} (expected {valid})") from None


@dataclass(frozen=True)
class TeachingPick:
    """One selection: the chosen item plus the objective value behind it.

    strategy_score is the strategy's own objective at the pick (lower is
    preferred for wp/eer); it is 0.0 for the score-free strategies.
    """

    item_index: int
    strategy_score: float = 0.0
    candidates_evaluated: int = 0


class MissingContextError(ValueError):
    """The dispatch context lacks a component the strategy requires."""


class BatchOrderExhausted(RuntimeError):
    """More picks requested than the precomputed batch order contains."""


def select_random(pool, rng: np.random.Generator) -> TeachingPick:
    """Uniform draw from the candidate pool."""
    pool = sorted(pool)
    if not pool:
        raise ValueError("empty candidate pool")
    pick = pool[int(rng.integers(len(pool)))]
    return TeachingPick(item_index=int(pick), candidates_evaluated=len(pool))


def compute_class_centroids(features: np.ndarray, labels: np.ndarray) -> list[int]:
    """Index of the item nearest its class mean, for every class.

    Returned indices are positions in the given arrays; ties go to the lowest
    index.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n_classes = int(labels.max()) + 1
    centroids = []
    for c in range(n_classes):
        members = np.nonzero(labels == c)[0]
        if members.size == 0:
            raise ValueError(f"class {c} has no items")
        mean = features[members].mean(axis=0)
        dist_sq = ((features[members] - mean) ** 2).sum(axis=1)
        centroids.append(int(members[np.argmin(dist_sq)]))
    return centroids


def select_centroid(centroids, rng: np.random.Generator) -> TeachingPick:
    """Uniform draw over the class centroids; repeats across rounds are allowed."""
    centroids = list(centroids)
    if not centroids:
        raise ValueError("no centroids computed")
    pick = centroids[int(rng.integers(len(centroids)))]
    return TeachingPick(item_index=int(pick), candidates_evaluated=len(centroids))


def select_worst_predicted(
    beliefs: np.ndarray, ground_truth: np.ndarray, pool
) -> TeachingPick:
    """Item whose ground-truth class has the lowest current belief."""
    pool = np.asarray(sorted(pool), dtype=int)
    if pool.size == 0:
        raise ValueError("empty candidate pool")
    truth_beliefs = beliefs[pool, np.asarray(ground_truth)[pool]]
    best = int(np.argmin(truth_beliefs))
    return TeachingPick(
        item_index=int(pool[best]),
        strategy_score=float(truth_beliefs[best]),
        candidates_evaluated=int(pool.size),
    )


def eer_objective(state: HarmonicSolverState, candidate: int, ground_truth: np.ndarray) -> float:
    """Residual error left if the student correctly labeled `candidate`.

    Sum over every other unlabeled item of one minus its hypothetically
    updated ground-truth-class belief. Computed through the rank-one
    hypothetical update, so a candidate scan never refactorizes.
    """
    truth = np.asarray(ground_truth, dtype=int)
    label = int(truth[candidate])
    pos = state.unlabeled_position(candidate)
    if state.n_unlabeled == 1:
        return 0.0
    updated = state.hypothetical_update(candidate, label)
    remaining = np.delete(state.partition.unlabeled, pos)
    residual = 1.0 - updated[np.arange(remaining.size), truth[remaining]]
    return float(residual.sum())


def eer_objectives(
    state: HarmonicSolverState, pool, ground_truth: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized EER objective for every pool candidate.

    Returns (pool_sorted, objectives). Matches eer_objective to roundoff; the
    per-candidate rank-one update collapses into a handful of matrix products
    against the cached inverse columns.
    """
    truth = np.asarray(ground_truth, dtype=int)
    pool_arr = np.asarray(sorted(pool), dtype=int)
    if pool_arr.size == 0:
        raise ValueError("empty candidate pool")
    unlabeled = state.partition.unlabeled
    truth_u = truth[unlabeled]
    n_u = unlabeled.size
    pool_class = truth[pool_arr]

    if state.n_labeled == 0:
        # One hypothetically clamped node pulls the whole connected graph to
        # its label, so the objective counts pool-external class mismatches.
        counts = np.bincount(truth_u, minlength=state.n_classes)
        return pool_arr, (n_u - counts[pool_class]).astype(np.float64)

    positions = np.array([state.unlabeled_position(i) for i in pool_arr])
    beliefs_u = state.unlabeled_beliefs
    current_truth_belief = beliefs_u[np.arange(n_u), truth_u]
    base = float((1.0 - current_truth_belief).sum())

    one_hot = np.zeros((n_u, state.n_classes))
    one_hot[np.arange(n_u), truth_u] = 1.0
    columns = state.inverse_columns(positions)  # (n_u, P)
    class_mass = columns.T @ one_hot  # (P, C): per candidate, inverse mass by class
    matched = class_mass[np.arange(pool_arr.size), pool_class]
    weighted = np.einsum("pc,pc->p", class_mass, beliefs_u[positions])
    pivots = columns[positions, np.arange(pool_arr.size)]
    if np.any(pivots <= 0.0):
        bad = positions[pivots <= 0.0][0]
        raise RuntimeError(f"inverse diagonal not positive at unlabeled position {bad}")
    objectives = base - (matched - weighted) / pivots
    return pool_arr, objectives


def select_eer(
    state: HarmonicSolverState, pool, ground_truth: np.ndarray
) -> TeachingPick:
    """Candidate whose hypothetical correct answer leaves the least residual error."""
    pool_arr, objectives = eer_objectives(state, pool, ground_truth)
    best = int(np.argmin(objectives))
    return TeachingPick(
        item_index=int(pool_arr[best]),
        strategy_score=float(objectives[best]),
        candidates_evaluated=int(pool_arr.size),
    )


def compute_batch_order(
    graph: SimilarityGraph,
    ground_truth: np.ndarray,
    pool,
    length: int,
    n_classes: int,
    inverse_cache_limit: int | None = None,
) -> list[int]:
    """Offline EER teaching order under an always-correct student.

    Each simulated round labels the pick with its true class before the next
    selection, so the order is deterministic, duplicate-free, and identical
    for every student it is later replayed to.
    """
    pool = sorted(pool)
    if length > len(pool):
        raise ValueError(f"length {length} exceeds pool size {len(pool)}")
    kwargs = {} if inverse_cache_limit is None else {"inverse_cache_limit": inverse_cache_limit}
    state = HarmonicSolverState.initial(graph, n_classes, **kwargs)
    truth = np.asarray(ground_truth, dtype=int)
    order: list[int] = []
    remaining = list(pool)
    for _ in range(length):
        pick = select_eer(state, remaining, truth)
        order.append(pick.item_index)
        state = state.refresh_after_answer(pick.item_index, int(truth[pick.item_index]))
        remaining.remove(pick.item_index)
    return order


@dataclass
class StrategyContext:
    """Everything a strategy might need for one selection."""

    pool: list[int] = field(default_factory=list)
    rng: np.random.Generator | None = None
    solver: HarmonicSolverState | None = None
    ground_truth: np.ndarray | None = None
    centroids: list[int] | None = None
    batch_order: list[int] | None = None
    round_index: int = 0


def next_pick(kind: StrategyKind, context: StrategyContext) -> TeachingPick:
    """Dispatch one selection to the matching strategy."""
    if kind is StrategyKind.RANDOM:
        if context.rng is None:
            raise MissingContextError("random strategy needs an rng")
        return select_random(context.pool, context.rng)
    if kind is StrategyKind.CENTROIDS:
        if context.rng is None or context.centroids is None:
            raise MissingContextError("centroid strategy needs centroids and an rng")
        return select_centroid(context.centroids, context.rng)
    if kind is StrategyKind.WORST_PREDICTED:
        if context.solver is None or context.ground_truth is None:
            raise MissingContextError("worst-predicted needs solver state and ground truth")
        return select_worst_predicted(
            context.solver.beliefs(), context.ground_truth, context.pool
        )
    if kind is StrategyKind.EER:
        if context.solver is None or context.ground_truth is None:
            raise MissingContextError("eer needs solver state and ground truth")
        return select_eer(context.solver, context.pool, context.ground_truth)
    if kind is StrategyKind.BATCH:
        if context.batch_order is None:
            raise MissingContextError("batch strategy needs a precomputed order")
        if context.round_index >= len(context.batch_order):
            raise BatchOrderExhausted(
                f"batch order has {len(context.batch_order)} picks, "
                f"round {context.round_index} requested"
            )
        return TeachingPick(
            item_index=int(context.batch_order[context.round_index]),
            candidates_evaluated=0,
        )
    raise MissingContextError(f"unhandled strategy kind {kind!r}")


__all__ = [
    "StrategyKind",
    "TeachingPick",
    "StrategyContext",
    "MissingContextError",
    "BatchOrderExhausted",
    "select_random",
    "compute_class_centroids",
    "select_centroid",
    "select_worst_predicted",
    "eer_objective",
    "eer_objectives",
    "select_eer",
    "compute_batch_order",
    "next_pick",
    "predict_class",
]
