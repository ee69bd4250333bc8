"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. The directional-benchmark criterion runs 1000 full simulated
sessions and dominates the suite's runtime (a few minutes).
"""

import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from teachkit.propagation import HarmonicSolverState, build_similarity, harmonic_solve
from teachkit.service import ServiceRegistry, create_app
from teachkit.session import PreparedDataset, read_event_log, replay_session
from teachkit.simulator import (
    DEFAULT_TEACHER_GAMMA,
    ExperimentPlan,
    StudentKind,
    StudentSpec,
    compare_strategies,
    default_benchmark,
    make_gaussian_mixture,
    run_experiment,
    welch_t_test,
)
from teachkit.strategies import (
    StrategyKind,
    compute_batch_order,
    eer_objective,
    select_eer,
    select_worst_predicted,
)

from conftest import brute_eer_objective, dense_solve_oracle, one_hot_rows
from test_simulator import WELCH_ORACLE_PAIRS


def _report(name: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: PASS")


def _random_connected(rng: np.random.Generator, n: int, n_classes: int):
    features = rng.uniform(0.0, 2.0, size=(n, 3))
    graph = build_similarity(features, gamma=0.25)
    labels = rng.integers(0, n_classes, size=n)
    labels[:n_classes] = np.arange(n_classes)
    n_labeled = int(rng.integers(n_classes, max(n_classes + 1, n // 5)))
    labeled = sorted(int(i) for i in rng.choice(n, size=n_labeled, replace=False))
    return graph, labels, labeled


class TestAcceptance:
    def test_harmonic_invariants_100_graphs(self):
        """Entries in [0,1]; unlabeled rows sum to 1 within 1e-9; under 30 s."""
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n = int(rng.integers(20, 201))
            n_classes = int(rng.integers(2, 6))
            graph, labels, labeled = _random_connected(rng, n, n_classes)
            state = harmonic_solve(graph, labeled, one_hot_rows(labels[labeled], n_classes))
            beliefs = state.unlabeled_beliefs
            assert beliefs.min() >= -1e-12
            assert beliefs.max() <= 1.0 + 1e-12
            np.testing.assert_allclose(beliefs.sum(axis=1), 1.0, atol=1e-9)
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"harmonic invariant sweep took {elapsed:.1f}s"
        _report(f"harmonic invariants (100 graphs, {elapsed:.1f}s)")

    def test_oracle_equivalence_harmonic_solve(self):
        """Propagated beliefs match an independent dense solve within 1e-9."""
        rng = np.random.default_rng(5150)
        for _ in range(50):
            n = int(rng.integers(10, 60))
            n_classes = int(rng.integers(2, 5))
            graph, labels, labeled = _random_connected(rng, n, n_classes)
            Ft = one_hot_rows(labels[labeled], n_classes)
            state = harmonic_solve(graph, labeled, Ft)
            unlabeled, expected = dense_solve_oracle(graph.weights, labeled, Ft)
            np.testing.assert_array_equal(state.partition.unlabeled, unlabeled)
            np.testing.assert_allclose(state.unlabeled_beliefs, expected, atol=1e-9)
        _report("harmonic solve vs dense-solve oracle (50 instances, 1e-9)")

    def test_oracle_equivalence_eer_fast_path(self):
        """Rank-one objective equals brute-force re-solve within 1e-7."""
        rng = np.random.default_rng(77)
        # Exhaustive candidates on small instances.
        for _ in range(6):
            n = int(rng.integers(12, 31))
            n_classes = int(rng.integers(2, 5))
            graph, labels, labeled = _random_connected(rng, n, n_classes)
            Ft = one_hot_rows(labels[labeled], n_classes)
            state = harmonic_solve(graph, labeled, Ft)
            for candidate in state.partition.unlabeled:
                fast = eer_objective(state, int(candidate), labels)
                slow = brute_eer_objective(graph.weights, labeled, Ft, labels, int(candidate))
                assert fast == pytest.approx(slow, abs=1e-7)
        # 100 random candidates at N = 200.
        graph, labels, labeled = _random_connected(rng, 200, 4)
        Ft = one_hot_rows(labels[labeled], 4)
        state = harmonic_solve(graph, labeled, Ft)
        candidates = rng.choice(state.partition.unlabeled, size=100, replace=False)
        for candidate in candidates:
            fast = eer_objective(state, int(candidate), labels)
            slow = brute_eer_objective(graph.weights, labeled, Ft, labels, int(candidate))
            assert fast == pytest.approx(slow, abs=1e-7)
        _report("EER fast path vs full re-solve (exhaustive N<=30 + 100 pairs at N=200, 1e-7)")

    def test_strategy_contracts(self):
        """wp global argmin; batch == always-correct EER simulation; membership rules."""
        rng = np.random.default_rng(31337)
        # Worst-predicted returns the global argmin on 50 seeded instances.
        for _ in range(50):
            n = int(rng.integers(15, 60))
            n_classes = int(rng.integers(2, 5))
            graph, labels, labeled = _random_connected(rng, n, n_classes)
            state = harmonic_solve(graph, labeled, one_hot_rows(labels[labeled], n_classes))
            pool = [int(i) for i in state.partition.unlabeled]
            pick = select_worst_predicted(state.beliefs(), labels, pool)
            beliefs = state.beliefs()
            best = beliefs[pick.item_index, labels[pick.item_index]]
            assert all(best <= beliefs[i, labels[i]] + 1e-15 for i in pool)

        # Batch order: deterministic, and equal to an explicit EER simulation
        # that labels every pick correctly before the next selection.
        graph, labels, _ = _random_connected(np.random.default_rng(4), 40, 3)
        order_a = compute_batch_order(graph, labels, range(40), 9, 3)
        order_b = compute_batch_order(graph, labels, range(40), 9, 3)
        assert order_a == order_b
        state = HarmonicSolverState.initial(graph, 3)
        remaining = list(range(40))
        simulated = []
        for _ in range(9):
            pick = select_eer(state, remaining, labels)
            simulated.append(pick.item_index)
            state = state.refresh_after_answer(pick.item_index, int(labels[pick.item_index]))
            remaining.remove(pick.item_index)
        assert order_a == simulated

        # Session-level membership rules for every strategy across seeds.
        from teachkit.session import Session, SessionConfig

        data = make_gaussian_mixture(3, 20, 4, 6.0, seed=11, name="members")
        prepared = PreparedDataset.prepare(data, gamma=0.2, pca_dim=None)
        for strategy in StrategyKind:
            for seed in range(10):
                session = Session(
                    prepared, SessionConfig(dataset="members", strategy=strategy, seed=seed)
                )
                for _ in range(session.config.teach_rounds):
                    shown = session.next_teaching_item()
                    session.submit_teaching_answer(shown["item_id"], 0, 4000.0)
                picks = {r.item_index for r in session.teaching_history}
                assert picks.isdisjoint(session.test_set)
                if strategy is StrategyKind.CENTROIDS:
                    assert picks <= set(session._centroids)
        _report("strategy contracts (wp argmin, batch oracle, membership rules)")

    def test_eer_round_under_one_second_at_n2000(self):
        """Factorization + full candidate scan + argmin, median over 10 rounds."""
        data = make_gaussian_mixture(
            n_classes=5, per_class=400, dims=10, spread=20.0, seed=3,
            multimodal=True, name="timing",
        )
        prepared = PreparedDataset.prepare(data, gamma=DEFAULT_TEACHER_GAMMA, pca_dim=None)
        truth = data.labels
        pool = list(range(data.n_items))
        labeled: list[int] = []
        durations = []
        for _ in range(10):
            start = time.perf_counter()
            if labeled:
                Ft = one_hot_rows(truth[labeled], 5)
                state = harmonic_solve(prepared.graph, labeled, Ft)
            else:
                state = HarmonicSolverState.initial(prepared.graph, 5)
            pick = select_eer(state, pool, truth)
            durations.append(time.perf_counter() - start)
            labeled.append(pick.item_index)
            pool.remove(pick.item_index)
        median = float(np.median(durations))
        assert median < 1.0, f"median EER round {median:.3f}s at N=2000"
        _report(f"EER round at N=2000: median {median*1000:.0f} ms over 10 rounds (< 1 s)")

    def test_directional_benchmark_ordering(self):
        """EER beats Random (Welch p < 0.05); Centroids is the worst strategy."""
        start = time.perf_counter()
        prepared = default_benchmark()
        plan = ExperimentPlan(
            strategies=list(StrategyKind),
            trial_indices=list(range(200)),
            student=StudentSpec(
                kind=StudentKind.NOISY_GRF_LEARNER,
                gamma=2 * DEFAULT_TEACHER_GAMMA,
                guess_noise=0.1,
            ),
        )
        report = compare_strategies(run_experiment(prepared, plan))
        elapsed = time.perf_counter() - start
        assert elapsed < 600.0, f"benchmark took {elapsed:.0f}s"
        eer, rnd = report.means["eer"], report.means["rnd"]
        p_value = report.p_values["rnd"]
        assert eer > rnd, f"mean(EER)={eer:.3f} not above mean(Random)={rnd:.3f}"
        assert p_value < 0.05, f"Welch p={p_value:.3g}"
        worst = min(report.means, key=report.means.get)
        assert worst == "cc", f"worst strategy is {worst}, means={report.means}"
        _report(
            "directional ordering: "
            + " ".join(f"{s}={report.means[s]:.3f}" for s in ["eer", "batch", "rnd", "wp", "cc"])
            + f", p(eer vs rnd)={p_value:.2g}, {elapsed:.0f}s"
        )

    def test_protocol_conformance_c3(self):
        """9 teach / 30 test, 10 per class, disjoint sets, no label leakage, exact replay."""
        data = make_gaussian_mixture(3, 25, 5, 8.0, seed=9, name="proto")
        prepared = PreparedDataset.prepare(data, gamma=0.1, pca_dim=None)
        import tempfile

        with tempfile.TemporaryDirectory() as log_dir:
            registry = ServiceRegistry(log_dir=log_dir)
            registry.add_dataset(prepared)
            client = TestClient(create_app(registry))
            created = client.post(
                "/api/sessions",
                json={"dataset": "proto", "strategy": "eer", "seed": 123},
            ).json()
            assert created["teach_rounds"] == 9
            assert created["test_rounds"] == 30
            sid = created["session_id"]

            answer_rng = np.random.default_rng(5)
            testing_payloads = []
            for _ in range(39):
                shown = client.get(f"/api/sessions/{sid}/next").json()
                answered = client.post(
                    f"/api/sessions/{sid}/answer",
                    json={
                        "item_id": shown["item_id"],
                        "class_index": int(answer_rng.integers(3)),
                        "response_ms": 4000,
                    },
                ).json()
                if shown["phase"] == "testing":
                    testing_payloads.append((shown, answered))
            assert len(testing_payloads) == 30
            for shown, answered in testing_payloads:
                assert answered == {}
                assert "true_class" not in shown

            session = registry.get_session(sid).session
            test_labels = prepared.data.labels[session.test_set]
            np.testing.assert_array_equal(np.bincount(test_labels), [10, 10, 10])
            taught = {r.item_index for r in session.teaching_history}
            assert taught.isdisjoint(session.test_set)

            events = read_event_log(f"{log_dir}/{sid}.jsonl")
            replayed = replay_session(events, prepared)
            assert [r.item_id for r in replayed.teaching_history] == [
                r.item_id for r in session.teaching_history
            ]
            assert [r.item_id for r in replayed.test_history] == [
                r.item_id for r in session.test_history
            ]
            np.testing.assert_array_equal(
                replayed.solver.beliefs(), session.solver.beliefs()
            )
        _report("protocol conformance at C=3 (counts, disjointness, no leakage, exact replay)")

    def test_welch_statistics_oracle(self):
        """Frozen independent oracle values within 1e-6; identical samples give 1.0."""
        for a, b, expected in WELCH_ORACLE_PAIRS:
            assert welch_t_test(a, b) == pytest.approx(expected, abs=1e-6)
        sample = [0.61, 0.55, 0.47, 0.72, 0.66]
        assert welch_t_test(sample, sample) == pytest.approx(1.0)
        _report("Welch t-test vs precomputed oracle (5 pairs, 1e-6; identical -> p=1)")
