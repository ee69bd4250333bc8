"""Teach-then-test sessions: the state machine driving one student.

A session walks one student through a fixed number of teaching rounds
(guess, then reveal) followed by a test phase with no feedback, maintaining
the teacher-side solver state as the single writer. Every transition is
appended to a JSON-lines event log, fsync'd per record, so a crashed or
disputed session can be replayed bit-for-bit from its log.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import strategies
from .dataset import FeatureDataset, PcaModel, apply_pca, fit_pca
from .propagation import (
    INVERSE_CACHE_LIMIT,
    HarmonicSolverState,
    SimilarityGraph,
    build_similarity,
    sparsify_topk,
)
from .strategies import StrategyContext, StrategyKind, TeachingPick

DEFAULT_GAMMA = 0.025
DEFAULT_PCA_DIM = 50
DEFAULT_MIN_RESPONSE_MS = 3000
DEFAULT_BONUS_THRESHOLD = 0.6

# Seed-stream tags: every per-session random decision draws from its own
# generator so replay and protocol audits are exact.
_SEED_TEST_SELECT = 1
_SEED_TEST_ORDER = 2
_SEED_STRATEGY = 3


class ConfigError(ValueError):
    """Session configuration violates a protocol rule."""


class PhaseError(RuntimeError):
    """Operation invoked in the wrong session phase."""


class PendingItemError(RuntimeError):
    """Answer/issue ordering violated: wrong item or double issue."""


class ReplayError(RuntimeError):
    """Event log replay diverged from the recorded session."""


class Phase(str, Enum):
    TEACHING = "teaching"
    TESTING = "testing"
    DONE = "done"


@dataclass(frozen=True)
class SessionConfig:
    """Requested session parameters; round counts default to 3C teach / 10C test."""

    dataset: str
    strategy: StrategyKind
    seed: int = 0
    teach_rounds: int | None = None
    test_rounds: int | None = None
    min_response_ms: int = DEFAULT_MIN_RESPONSE_MS
    bonus_threshold: float = DEFAULT_BONUS_THRESHOLD
    prior_knowledge: bool = False

    def resolved(self, n_classes: int) -> "SessionConfig":
        teach = self.teach_rounds if self.teach_rounds is not None else 3 * n_classes
        test = self.test_rounds if self.test_rounds is not None else 10 * n_classes
        return SessionConfig(
            dataset=self.dataset,
            strategy=self.strategy,
            seed=self.seed,
            teach_rounds=teach,
            test_rounds=test,
            min_response_ms=self.min_response_ms,
            bonus_threshold=self.bonus_threshold,
            prior_knowledge=self.prior_knowledge,
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy.value,
            "seed": int(self.seed),
            "teach_rounds": self.teach_rounds,
            "test_rounds": self.test_rounds,
            "min_response_ms": self.min_response_ms,
            "bonus_threshold": self.bonus_threshold,
            "prior_knowledge": self.prior_knowledge,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionConfig":
        return cls(
            dataset=raw["dataset"],
            strategy=StrategyKind.parse(raw["strategy"]),
            seed=int(raw["seed"]),
            teach_rounds=raw.get("teach_rounds"),
            test_rounds=raw.get("test_rounds"),
            min_response_ms=raw.get("min_response_ms", DEFAULT_MIN_RESPONSE_MS),
            bonus_threshold=raw.get("bonus_threshold", DEFAULT_BONUS_THRESHOLD),
            prior_knowledge=bool(raw.get("prior_knowledge", False)),
        )


@dataclass
class PreparedDataset:
    """A dataset with its reduced features and similarity graph, ready to teach from.

    Immutable once built; shared read-only by any number of sessions.
    """

    data: FeatureDataset
    features: np.ndarray  # reduced (or raw, if no PCA applied)
    graph: SimilarityGraph
    gamma: float
    pca: PcaModel | None = None
    inverse_cache_limit: int = INVERSE_CACHE_LIMIT
    id_to_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id_to_index:
            self.id_to_index = {item: i for i, item in enumerate(self.data.item_ids)}

    @classmethod
    def prepare(
        cls,
        data: FeatureDataset,
        gamma: float = DEFAULT_GAMMA,
        pca_dim: int | None = DEFAULT_PCA_DIM,
        inverse_cache_limit: int = INVERSE_CACHE_LIMIT,
        sparsify_top_k: int | None = None,
    ) -> "PreparedDataset":
        pca = None
        features = data.features
        if pca_dim is not None and pca_dim < features.shape[1]:
            pca = fit_pca(features, min(pca_dim, features.shape[0]))
            features = apply_pca(pca, features)
        graph = build_similarity(features, gamma)
        if sparsify_top_k is not None:
            # Worth it only for very large N; may disconnect the graph, which
            # later solves surface as DisconnectedGraphError.
            graph = sparsify_topk(graph, sparsify_top_k)
        return cls(
            data=data,
            features=features,
            graph=graph,
            gamma=gamma,
            pca=pca,
            inverse_cache_limit=inverse_cache_limit,
        )


@dataclass(frozen=True)
class RoundRecord:
    item_index: int
    item_id: str
    student_answer: int
    true_class: int
    response_ms: float

    @property
    def correct(self) -> bool:
        return self.student_answer == self.true_class


@dataclass(frozen=True)
class SessionResult:
    score: float
    mean_test_response_ms: float
    rejected: bool
    reason: str  # too_fast | prior_knowledge | none
    bonus_earned: bool
    teaching_records: list[RoundRecord]
    test_records: list[RoundRecord]

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "mean_test_response_ms": self.mean_test_response_ms,
            "rejected": self.rejected,
            "reason": self.reason,
            "bonus_earned": self.bonus_earned,
            "teaching": [vars(r) for r in self.teaching_records],
            "test": [vars(r) for r in self.test_records],
        }


class EventLog:
    """Append-only JSON-lines log, one object per line, fsync'd per append."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_event_log(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _now_ms() -> int:
    return int(time.time() * 1000)


class Session:
    """One student's teach-then-test run; the single writer for its solver state.

    All mutating calls must be externally serialized per session (the service
    layer holds one lock per session); reads between writes are safe.
    """

    def __init__(
        self,
        prepared: PreparedDataset,
        config: SessionConfig,
        log_path: str | Path | None = None,
        session_id: str | None = None,
    ):
        data = prepared.data
        self.prepared = prepared
        self.config = config.resolved(data.n_classes)
        _validate_config(self.config, data)
        self.id = session_id or uuid.uuid4().hex[:12]
        self.phase = Phase.TEACHING
        self.teaching_history: list[RoundRecord] = []
        self.test_history: list[RoundRecord] = []
        self._pending: dict | None = None
        self._result: SessionResult | None = None
        self._rng_strategy = np.random.default_rng([self.config.seed, _SEED_STRATEGY])

        self.test_set = _draw_test_set(data, self.config)
        test_order_rng = np.random.default_rng([self.config.seed, _SEED_TEST_ORDER])
        self.test_order = [int(i) for i in test_order_rng.permutation(self.test_set)]

        test_mask = np.zeros(data.n_items, dtype=bool)
        test_mask[self.test_set] = True
        self._teachable = sorted(int(i) for i in np.nonzero(~test_mask)[0])
        self._taught: set[int] = set()

        self.solver = HarmonicSolverState.initial(
            prepared.graph, data.n_classes, prepared.inverse_cache_limit
        )

        self._centroids: list[int] | None = None
        if self.config.strategy is StrategyKind.CENTROIDS:
            pool = np.asarray(self._teachable)
            local = strategies.compute_class_centroids(
                prepared.features[pool], data.labels[pool]
            )
            self._centroids = [int(pool[i]) for i in local]

        self._batch_order: list[int] | None = None
        if self.config.strategy is StrategyKind.BATCH:
            self._batch_order = strategies.compute_batch_order(
                prepared.graph,
                data.labels,
                self._teachable,
                self.config.teach_rounds,
                data.n_classes,
                prepared.inverse_cache_limit,
            )

        self.log = EventLog(log_path)
        self.log.append(
            {
                "kind": "created",
                "round": 0,
                "ts_ms": _now_ms(),
                "session_id": self.id,
                "config": self.config.to_dict(),
                "test_set": [data.item_ids[i] for i in self.test_set],
            }
        )

    # -- teaching phase ----------------------------------------------------

    @property
    def teach_round(self) -> int:
        return len(self.teaching_history)

    @property
    def test_round(self) -> int:
        return len(self.test_history)

    @property
    def pending_item(self) -> dict | None:
        """The currently issued, unanswered item (None between rounds)."""
        return dict(self._pending) if self._pending else None

    def next_teaching_item(self) -> dict:
        if self.phase is not Phase.TEACHING:
            raise PhaseError(f"teaching complete (phase={self.phase.value})")
        if self._pending is not None:
            raise PendingItemError(
                f"item {self._pending['item_id']} is still awaiting an answer"
            )
        pick = self._select(self.teach_round)
        data = self.prepared.data
        index = pick.item_index
        if index in self.test_set:
            raise RuntimeError(f"strategy produced reserved test item {index}")
        self._pending = {
            "phase": Phase.TEACHING.value,
            "round": self.teach_round,
            "item_index": index,
            "item_id": data.item_ids[index],
            "image_uri": data.image_uris[index],
            "issued_monotonic": time.monotonic(),
        }
        self.log.append(
            {
                "kind": "teach_shown",
                "round": self.teach_round,
                "ts_ms": _now_ms(),
                "item_id": data.item_ids[index],
                "item_index": index,
                "strategy_score": pick.strategy_score,
                "candidates_evaluated": pick.candidates_evaluated,
            }
        )
        return {
            "item_id": data.item_ids[index],
            "image_uri": data.image_uris[index],
            "round": self.teach_round,
        }

    def submit_teaching_answer(self, item_id: str, answer_class: int, response_ms: float) -> dict:
        self._check_answer_preamble(Phase.TEACHING, item_id, answer_class)
        pending = self._pending
        index = pending["item_index"]
        data = self.prepared.data
        true_class = int(data.labels[index])
        elapsed_ms = (time.monotonic() - pending["issued_monotonic"]) * 1000.0

        # The solver is clamped to the student's answer, right or wrong. A
        # re-shown item (centroids) overwrites its earlier clamped row.
        if index in self._taught:
            self.solver = self.solver.with_relabel(index, int(answer_class))
        else:
            self.solver = self.solver.refresh_after_answer(index, int(answer_class))
            self._taught.add(index)

        record = RoundRecord(
            item_index=index,
            item_id=item_id,
            student_answer=int(answer_class),
            true_class=true_class,
            response_ms=float(response_ms),
        )
        self.teaching_history.append(record)
        self.log.append(
            {
                "kind": "teach_answered",
                "round": len(self.teaching_history) - 1,
                "ts_ms": _now_ms(),
                "item_id": item_id,
                "student_answer": int(answer_class),
                "true_class": true_class,
                "response_ms": float(response_ms),
                "server_elapsed_ms": elapsed_ms,
            }
        )
        self._pending = None
        if len(self.teaching_history) == self.config.teach_rounds:
            self.phase = Phase.TESTING
        return {"true_class": true_class}

    # -- testing phase -----------------------------------------------------

    def next_test_item(self) -> dict:
        if self.phase is not Phase.TESTING:
            raise PhaseError(f"not in testing phase (phase={self.phase.value})")
        if self._pending is not None:
            raise PendingItemError(
                f"item {self._pending['item_id']} is still awaiting an answer"
            )
        index = self.test_order[self.test_round]
        data = self.prepared.data
        self._pending = {
            "phase": Phase.TESTING.value,
            "round": self.test_round,
            "item_index": index,
            "item_id": data.item_ids[index],
            "image_uri": data.image_uris[index],
            "issued_monotonic": time.monotonic(),
        }
        self.log.append(
            {
                "kind": "test_shown",
                "round": self.config.teach_rounds + self.test_round,
                "ts_ms": _now_ms(),
                "item_id": data.item_ids[index],
                "item_index": index,
            }
        )
        return {
            "item_id": data.item_ids[index],
            "image_uri": data.image_uris[index],
            "round": self.test_round,
        }

    def submit_test_answer(self, item_id: str, answer_class: int, response_ms: float) -> None:
        """Record a test answer. Returns nothing: no feedback leaves the session."""
        self._check_answer_preamble(Phase.TESTING, item_id, answer_class)
        pending = self._pending
        index = pending["item_index"]
        elapsed_ms = (time.monotonic() - pending["issued_monotonic"]) * 1000.0
        record = RoundRecord(
            item_index=index,
            item_id=item_id,
            student_answer=int(answer_class),
            true_class=int(self.prepared.data.labels[index]),
            response_ms=float(response_ms),
        )
        self.test_history.append(record)
        self.log.append(
            {
                "kind": "test_answered",
                "round": self.config.teach_rounds + len(self.test_history) - 1,
                "ts_ms": _now_ms(),
                "item_id": item_id,
                "student_answer": int(answer_class),
                "true_class": record.true_class,
                "response_ms": float(response_ms),
                "server_elapsed_ms": elapsed_ms,
            }
        )
        self._pending = None
        if len(self.test_history) == self.config.test_rounds:
            self.phase = Phase.DONE

    # -- completion ----------------------------------------------------------

    def finalize(self) -> SessionResult:
        if self.phase is not Phase.DONE:
            raise PhaseError(f"session not finished (phase={self.phase.value})")
        if self._result is not None:
            return self._result
        correct = sum(1 for r in self.test_history if r.correct)
        score = correct / self.config.test_rounds
        mean_ms = float(np.mean([r.response_ms for r in self.test_history]))
        if mean_ms < self.config.min_response_ms:
            rejected, reason = True, "too_fast"
        elif self.config.prior_knowledge:
            rejected, reason = True, "prior_knowledge"
        else:
            rejected, reason = False, "none"
        self._result = SessionResult(
            score=score,
            mean_test_response_ms=mean_ms,
            rejected=rejected,
            reason=reason,
            bonus_earned=score > self.config.bonus_threshold,
            teaching_records=list(self.teaching_history),
            test_records=list(self.test_history),
        )
        self.log.append(
            {
                "kind": "finalized",
                "round": self.config.teach_rounds + self.config.test_rounds,
                "ts_ms": _now_ms(),
                "score": score,
                "mean_test_response_ms": mean_ms,
                "rejected": rejected,
                "reason": reason,
                "bonus_earned": self._result.bonus_earned,
            }
        )
        self.log.close()
        return self._result

    # -- internals -----------------------------------------------------------

    def _check_answer_preamble(self, phase: Phase, item_id: str, answer_class: int) -> None:
        if self.phase is not phase:
            raise PhaseError(f"cannot answer in phase {self.phase.value}")
        if self._pending is None:
            raise PendingItemError("no item is awaiting an answer")
        if self._pending["item_id"] != item_id:
            raise PendingItemError(
                f"answer for {item_id!r} but pending item is {self._pending['item_id']!r}"
            )
        n_classes = self.prepared.data.n_classes
        if not 0 <= int(answer_class) < n_classes:
            raise ValueError(
                f"answer class {answer_class} out of range for {n_classes} classes"
            )

    def _select(self, round_index: int) -> TeachingPick:
        pool = [i for i in self._teachable if i not in self._taught]
        context = StrategyContext(
            pool=pool,
            rng=self._rng_strategy,
            solver=self.solver,
            ground_truth=self.prepared.data.labels,
            centroids=self._centroids,
            batch_order=self._batch_order,
            round_index=round_index,
        )
        return strategies.next_pick(self.config.strategy, context)


def _validate_config(config: SessionConfig, data: FeatureDataset) -> None:
    n_classes = data.n_classes
    if config.teach_rounds < 1:
        raise ConfigError(f"teach_rounds must be >= 1, got {config.teach_rounds}")
    if config.test_rounds < 1:
        raise ConfigError(f"test_rounds must be >= 1, got {config.test_rounds}")
    if config.test_rounds % n_classes != 0:
        raise ConfigError(
            f"test_rounds {config.test_rounds} not divisible by {n_classes} classes"
        )
    per_class = config.test_rounds // n_classes
    counts = np.bincount(data.labels, minlength=n_classes)
    # Every class must keep at least one non-test item available for teaching.
    smallest = int(counts.min())
    if per_class > smallest - 1:
        raise ConfigError(
            f"test_rounds/C = {per_class} exceeds the {smallest} items of the "
            f"smallest class minus its teaching reserve"
        )
    pool_size = data.n_items - config.test_rounds
    if config.strategy is not StrategyKind.CENTROIDS and config.teach_rounds > pool_size:
        raise ConfigError(
            f"teach_rounds {config.teach_rounds} exceeds the {pool_size} teachable items"
        )


def _draw_test_set(data: FeatureDataset, config: SessionConfig) -> list[int]:
    """Seeded equal-per-class test sample, disjoint from all future teaching."""
    rng = np.random.default_rng([config.seed, _SEED_TEST_SELECT])
    per_class = config.test_rounds // data.n_classes
    chosen: list[int] = []
    for c in range(data.n_classes):
        members = np.nonzero(data.labels == c)[0]
        picked = rng.choice(members, size=per_class, replace=False)
        chosen.extend(int(i) for i in sorted(picked))
    return chosen


def create_session(
    prepared: PreparedDataset,
    config: SessionConfig,
    log_dir: str | Path | None = None,
    session_id: str | None = None,
) -> Session:
    """Create a session, logging under `{log_dir}/{session_id}.jsonl` when given."""
    sid = session_id or uuid.uuid4().hex[:12]
    log_path = Path(log_dir) / f"{sid}.jsonl" if log_dir is not None else None
    return Session(prepared, config, log_path=log_path, session_id=sid)


def replay_session(events: list[dict], prepared: PreparedDataset) -> Session:
    """Re-run a session from its event log, verifying every pick matches.

    Raises ReplayError on the first divergence between the recorded picks and
    the deterministic re-execution.
    """
    if not events or events[0].get("kind") != "created":
        raise ReplayError("log does not start with a created record")
    created = events[0]
    config = SessionConfig.from_dict(created["config"])
    session = Session(prepared, config, session_id=created["session_id"] + "-replay")

    recorded_test_set = created["test_set"]
    replayed_test_set = [prepared.data.item_ids[i] for i in session.test_set]
    if recorded_test_set != replayed_test_set:
        raise ReplayError("replayed test set differs from the recorded one")

    for record in events[1:]:
        kind = record["kind"]
        if kind == "teach_shown":
            issued = session.next_teaching_item()
            if issued["item_id"] != record["item_id"]:
                raise ReplayError(
                    f"round {record['round']}: replay picked {issued['item_id']!r}, "
                    f"log has {record['item_id']!r}"
                )
        elif kind == "teach_answered":
            session.submit_teaching_answer(
                record["item_id"], record["student_answer"], record["response_ms"]
            )
        elif kind == "test_shown":
            issued = session.next_test_item()
            if issued["item_id"] != record["item_id"]:
                raise ReplayError(
                    f"test round {record['round']}: replay served {issued['item_id']!r}, "
                    f"log has {record['item_id']!r}"
                )
        elif kind == "test_answered":
            session.submit_test_answer(
                record["item_id"], record["student_answer"], record["response_ms"]
            )
        elif kind == "finalized":
            result = session.finalize()
            if abs(result.score - record["score"]) > 1e-12:
                raise ReplayError(
                    f"replayed score {result.score} differs from logged {record['score']}"
                )
        elif kind != "created":
            raise ReplayError(f"unknown record kind {kind!r}")
    return session
