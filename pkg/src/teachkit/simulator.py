"""Synthetic datasets and simulated students for desk-scale strategy studies.

Simulated students are deliberately NOT the teacher's model: a GRF learner
carries its own length scale (so the teacher only ever approximates it), an
optional guessing-noise rate, and an optional memory window over the reveals
it has seen. Experiments sweep strategies over seeded trials and report
score means, teaching-phase learning curves, and Welch significance tests.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import stdtr

from .dataset import FeatureDataset
from .propagation import HarmonicSolverState, SimilarityGraph, build_similarity
from .session import PreparedDataset, Session, SessionConfig
from .strategies import StrategyKind

# Default desk-scale benchmark: multi-modal classes, sized so a full
# five-strategy sweep at 200 trials each stays inside a coffee break.
DEFAULT_BENCHMARK = {
    "n_classes": 4,
    "per_class": 100,
    "dims": 10,
    "spread": 20.0,
    "multimodal": True,
    "stray_fraction": 0.01,
    "far_fraction": 0.5,
}
DEFAULT_TEACHER_GAMMA = 0.025
DEFAULT_STUDENT_GAMMA_SCALE = 2.0
DEFAULT_GUESS_NOISE = 0.1


def make_gaussian_mixture(
    n_classes: int,
    per_class: int,
    dims: int,
    spread: float,
    seed: int,
    multimodal: bool = False,
    stray_fraction: float = 0.0,
    far_fraction: float = 0.3,
    name: str = "synthetic",
) -> FeatureDataset:
    """Seeded isotropic Gaussian blobs with class means on a scaled simplex.

    With multimodal=True each class splits into a dominant mode on its
    simplex vertex plus a smaller far mode displaced past the midpoint toward
    the next class's vertex: a genus whose minority species straddles a
    neighboring genus's territory and cannot be taught from one exemplar.
    stray_fraction additionally scatters a few items per class far from every
    mode, emulating in-the-wild clutter that is perpetually uncertain but not
    worth teaching.
    """
    if min(n_classes, per_class, dims, spread) <= 0:
        raise ValueError("all mixture parameters must be positive")
    if n_classes > dims:
        raise ValueError(f"need dims >= n_classes to place the simplex, got {dims} < {n_classes}")
    if not 0.0 <= stray_fraction < 0.5:
        raise ValueError(f"stray_fraction must lie in [0, 0.5), got {stray_fraction}")
    rng = np.random.default_rng(seed)
    means = np.zeros((n_classes, dims))
    means[np.arange(n_classes), np.arange(n_classes)] = spread

    features = np.empty((n_classes * per_class, dims))
    labels = np.empty(n_classes * per_class, dtype=int)
    n_stray = int(round(stray_fraction * per_class))
    for c in range(n_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        noise = rng.normal(size=(per_class, dims))
        centers = np.tile(means[c], (per_class, 1))
        if multimodal:
            neighbor = means[(c + 1) % n_classes]
            far_center = means[c] + 0.55 * (neighbor - means[c])
            n_far = int(round(far_fraction * per_class))
            if n_far:
                centers[per_class - n_far - n_stray : per_class - n_stray] = far_center
        for s in range(n_stray):
            direction = rng.normal(size=dims)
            direction /= np.linalg.norm(direction)
            centers[per_class - n_stray + s] = means[c] + 1.2 * spread * direction
        features[block] = centers + noise
        labels[block] = c

    ids = [f"{name}-{i:04d}" for i in range(n_classes * per_class)]
    return FeatureDataset(
        name=name,
        class_names=[f"class-{c}" for c in range(n_classes)],
        item_ids=ids,
        image_uris=[f"synthetic://{i}" for i in ids],
        labels=labels,
        features=features,
    )


class StudentKind(str, Enum):
    GRF_LEARNER = "grf"
    NOISY_GRF_LEARNER = "noisy_grf"
    RANDOM_GUESSER = "guesser"


class SimulatedStudent:
    """A stand-in human: learns from reveals on its own similarity graph.

    The student answers from the argmax of harmonic beliefs propagated over
    its private graph, keyed by the ground-truth reveals it has received
    (never by its own guesses). With probability guess_noise it answers
    uniformly at random, and with an empty history it always guesses.
    """

    def __init__(
        self,
        kind: StudentKind,
        graph: SimilarityGraph | None,
        n_classes: int,
        rng: np.random.Generator,
        guess_noise: float = 0.0,
        memory_limit: int | None = None,
    ):
        if not 0.0 <= guess_noise <= 1.0:
            raise ValueError(f"guess_noise must lie in [0, 1], got {guess_noise}")
        if memory_limit is not None and memory_limit < 1:
            raise ValueError(f"memory_limit must be >= 1, got {memory_limit}")
        if kind is not StudentKind.RANDOM_GUESSER and graph is None:
            raise ValueError("GRF learners need a similarity graph")
        self.kind = kind
        self.graph = graph
        self.n_classes = n_classes
        self.rng = rng
        self.guess_noise = guess_noise
        self.memory_limit = memory_limit
        self.history: list[tuple[int, int]] = []  # (item, revealed true class)
        self._beliefs: np.ndarray | None = None

    def observe(self, item: int, true_class: int) -> None:
        """Record a post-answer reveal; invalidates cached beliefs."""
        self.history.append((int(item), int(true_class)))
        self._beliefs = None

    def answer(self, item: int) -> int:
        if self.kind is StudentKind.RANDOM_GUESSER:
            return int(self.rng.integers(self.n_classes))
        if self.guess_noise > 0.0 and self.rng.random() < self.guess_noise:
            return int(self.rng.integers(self.n_classes))
        if not self.history:
            return int(self.rng.integers(self.n_classes))
        return int(np.argmax(self._current_beliefs()[item]))

    def _current_beliefs(self) -> np.ndarray:
        if self._beliefs is None:
            window = self.history
            if self.memory_limit is not None:
                window = window[-self.memory_limit :]
            clamped: dict[int, int] = {}
            for item, true_class in window:
                clamped[item] = true_class  # latest reveal wins
            labeled = sorted(clamped)
            one_hot = np.zeros((len(labeled), self.n_classes))
            one_hot[np.arange(len(labeled)), [clamped[i] for i in labeled]] = 1.0
            state = HarmonicSolverState(self.graph, labeled, one_hot, self.n_classes)
            self._beliefs = state.beliefs()
        return self._beliefs


@dataclass(frozen=True)
class StudentSpec:
    """Recipe for building one student per trial."""

    kind: StudentKind = StudentKind.GRF_LEARNER
    gamma: float = DEFAULT_TEACHER_GAMMA * DEFAULT_STUDENT_GAMMA_SCALE
    guess_noise: float = 0.0
    memory_limit: int | None = None

    def build(
        self, graph: SimilarityGraph | None, n_classes: int, rng: np.random.Generator
    ) -> SimulatedStudent:
        return SimulatedStudent(
            kind=self.kind,
            graph=graph,
            n_classes=n_classes,
            rng=rng,
            guess_noise=self.guess_noise,
            memory_limit=self.memory_limit,
        )


@dataclass(frozen=True)
class TrialResult:
    strategy: str
    trial_index: int
    seed: int
    dataset: str
    score: float
    mean_test_ms: float
    teaching_correct: tuple[bool, ...]

    def to_row(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "score": self.score,
            "mean_ms": self.mean_test_ms,
        }


def derive_trial_seed(base_seed: int, strategy: str, trial_index: int) -> int:
    """Stable per-trial seed; adding strategies never perturbs existing trials."""
    digest = hashlib.sha256(f"{base_seed}:{strategy}:{trial_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1  # keep it positive


def run_trial(
    prepared: PreparedDataset,
    strategy: StrategyKind,
    student: SimulatedStudent,
    seed: int,
    trial_index: int = 0,
    teach_rounds: int | None = None,
    test_rounds: int | None = None,
    log_dir=None,
) -> TrialResult:
    """Drive one full session with a simulated student."""
    config = SessionConfig(
        dataset=prepared.data.name,
        strategy=strategy,
        seed=seed,
        teach_rounds=teach_rounds,
        test_rounds=test_rounds,
    )
    session = Session(prepared, config, log_path=log_dir)
    id_to_index = prepared.id_to_index
    response_rng = np.random.default_rng([seed, 9])

    teaching_correct: list[bool] = []
    for _ in range(session.config.teach_rounds):
        shown = session.next_teaching_item()
        index = id_to_index[shown["item_id"]]
        guess = student.answer(index)
        response_ms = float(response_rng.integers(3200, 6500))
        reveal = session.submit_teaching_answer(shown["item_id"], guess, response_ms)
        student.observe(index, reveal["true_class"])
        teaching_correct.append(guess == reveal["true_class"])

    for _ in range(session.config.test_rounds):
        shown = session.next_test_item()
        index = id_to_index[shown["item_id"]]
        guess = student.answer(index)
        response_ms = float(response_rng.integers(3200, 6500))
        session.submit_test_answer(shown["item_id"], guess, response_ms)

    result = session.finalize()
    return TrialResult(
        strategy=strategy.value,
        trial_index=trial_index,
        seed=seed,
        dataset=prepared.data.name,
        score=result.score,
        mean_test_ms=result.mean_test_response_ms,
        teaching_correct=tuple(teaching_correct),
    )


@dataclass
class ExperimentPlan:
    """Grid of strategies x trial indices plus the shared student recipe."""

    strategies: list[StrategyKind]
    trial_indices: list[int]
    student: StudentSpec = field(default_factory=StudentSpec)
    base_seed: int = 0
    teach_rounds: int | None = None
    test_rounds: int | None = None


# Worker globals for the process pool; each worker rebuilds the heavy shared
# state once instead of unpickling it per trial.
_WORKER: dict = {}


def _worker_init(prepared: PreparedDataset, plan: ExperimentPlan) -> None:
    _WORKER["prepared"] = prepared
    _WORKER["plan"] = plan
    _WORKER["student_graph"] = _student_graph(prepared, plan.student)


def _worker_run(task: tuple[str, int]) -> TrialResult:
    strategy_name, trial_index = task
    prepared = _WORKER["prepared"]
    plan = _WORKER["plan"]
    return _run_planned_trial(
        prepared, plan, _WORKER["student_graph"], strategy_name, trial_index
    )


def _student_graph(prepared: PreparedDataset, spec: StudentSpec) -> SimilarityGraph | None:
    if spec.kind is StudentKind.RANDOM_GUESSER:
        return None
    return build_similarity(prepared.features, spec.gamma)


def _run_planned_trial(
    prepared: PreparedDataset,
    plan: ExperimentPlan,
    student_graph: SimilarityGraph | None,
    strategy_name: str,
    trial_index: int,
) -> TrialResult:
    seed = derive_trial_seed(plan.base_seed, strategy_name, trial_index)
    student = plan.student.build(
        student_graph,
        prepared.data.n_classes,
        np.random.default_rng([seed, 7]),
    )
    return run_trial(
        prepared,
        StrategyKind.parse(strategy_name),
        student,
        seed,
        trial_index=trial_index,
        teach_rounds=plan.teach_rounds,
        test_rounds=plan.test_rounds,
    )


def run_experiment(
    prepared: PreparedDataset, plan: ExperimentPlan, jobs: int = 1
) -> list[TrialResult]:
    """Run the full strategy x trial grid; trials are independent and seeded."""
    tasks = [
        (strategy.value, index)
        for strategy in plan.strategies
        for index in plan.trial_indices
    ]
    if jobs <= 1:
        student_graph = _student_graph(prepared, plan.student)
        return [
            _run_planned_trial(prepared, plan, student_graph, name, index)
            for name, index in tasks
        ]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_worker_init, initargs=(prepared, plan)
    ) as pool:
        return list(pool.map(_worker_run, tasks, chunksize=8))


@dataclass(frozen=True)
class LearningCurve:
    """Teaching-phase correctness averaged over 10% progress bins.

    This tracks answers to actively chosen teaching items, so it is NOT the
    student's generalization curve; the note travels with the data.
    """

    bin_means: tuple[float, ...]
    bin_counts: tuple[int, ...]
    note: str = "teaching-phase curve over actively chosen items; not a generalization curve"

    def to_dict(self) -> dict:
        return {
            "bin_means": list(self.bin_means),
            "bin_counts": list(self.bin_counts),
            "note": self.note,
        }


def learning_curve(results: list[TrialResult]) -> LearningCurve:
    """Decile-binned mean teaching correctness across trials."""
    if not results:
        raise ValueError("no trial results")
    rounds = {len(r.teaching_correct) for r in results}
    if len(rounds) != 1:
        raise ValueError(f"mixed teaching lengths {sorted(rounds)}")
    n_rounds = rounds.pop()
    sums = np.zeros(10)
    counts = np.zeros(10, dtype=int)
    for result in results:
        for round_index, correct in enumerate(result.teaching_correct):
            b = min(round_index * 10 // n_rounds, 9)
            sums[b] += bool(correct)
            counts[b] += 1
    means = np.divide(sums, counts, out=np.zeros(10), where=counts > 0)
    return LearningCurve(bin_means=tuple(means), bin_counts=tuple(int(c) for c in counts))


def welch_t_test(sample_a, sample_b) -> float:
    """Two-tailed Welch unequal-variance t-test p-value."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    if var_a + var_b == 0.0:
        raise ValueError("degenerate samples: zero variance in both groups")
    se_a = var_a / a.size
    se_b = var_b / b.size
    t = (a.mean() - b.mean()) / np.sqrt(se_a + se_b)
    df = (se_a + se_b) ** 2 / (
        se_a**2 / (a.size - 1) + se_b**2 / (b.size - 1)
    )
    return float(2.0 * stdtr(df, -abs(t)))


@dataclass(frozen=True)
class ComparisonReport:
    """Per-strategy score means and Welch p-values against a reference strategy."""

    reference: str
    means: dict[str, float]
    mean_times_ms: dict[str, float]
    p_values: dict[str, float]  # vs reference; reference itself omitted
    n_trials: dict[str, int]
    test_name: str = "welch_two_tailed"

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "test_name": self.test_name,
            "means": self.means,
            "mean_times_ms": self.mean_times_ms,
            "p_values": self.p_values,
            "n_trials": self.n_trials,
        }


def compare_strategies(
    results: list[TrialResult], reference: str = "eer"
) -> ComparisonReport:
    by_strategy: dict[str, list[TrialResult]] = {}
    for result in results:
        by_strategy.setdefault(result.strategy, []).append(result)
    if reference not in by_strategy:
        reference = sorted(by_strategy)[0]
    ref_scores = [r.score for r in by_strategy[reference]]
    means = {s: float(np.mean([r.score for r in rs])) for s, rs in by_strategy.items()}
    times = {s: float(np.mean([r.mean_test_ms for r in rs])) for s, rs in by_strategy.items()}
    p_values = {}
    for strategy, rs in by_strategy.items():
        if strategy == reference:
            continue
        p_values[strategy] = welch_t_test(ref_scores, [r.score for r in rs])
    return ComparisonReport(
        reference=reference,
        means=means,
        mean_times_ms=times,
        p_values=p_values,
        n_trials={s: len(rs) for s, rs in by_strategy.items()},
    )


def default_benchmark(seed: int = 0) -> PreparedDataset:
    """The default multi-modal synthetic benchmark, prepared with the default gamma."""
    data = make_gaussian_mixture(seed=seed, name="benchmark", **DEFAULT_BENCHMARK)
    return PreparedDataset.prepare(data, gamma=DEFAULT_TEACHER_GAMMA, pca_dim=None)
