import itertools
import math

import numpy as np
import pytest

from biobench import evalharness
from biobench.sustain import (
    EventSet,
    Sequence,
    SubtypeModel,
    SustainConfig,
    expected_z,
    fit_sustain,
    mcmc_sample,
    ordering_space_log10,
    random_sequence,
    scaling_probe,
    sequence_loglik,
    stage_and_assign,
    trajectory_matrix,
)


def all_valid_sequences(es):
    """Exhaustive enumeration oracle over constrained orderings."""
    return [
        Sequence(list(p))
        for p in itertools.permutations(es.events)
        if Sequence(list(p)).is_valid()
    ]


def planted_cohort(es, seq, n, seed, noise=1.0):
    rng = np.random.default_rng(seed)
    stages = rng.integers(0, es.n_events + 1, size=n)
    mu = trajectory_matrix(seq, es)
    return mu[stages] + rng.normal(0.0, noise, size=(n, es.n_vars)), stages


class TestEventSet:
    def test_uniform_defaults(self):
        es = EventSet.uniform(4)
        assert es.n_vars == 4 and es.n_events == 12
        assert es.events[0] == (0, 0) and es.events[-1] == (3, 2)

    def test_threshold_order_enforced(self):
        with pytest.raises(ValueError):
            EventSet([[2.0, 1.0]], [5.0])
        with pytest.raises(ValueError):
            EventSet([[1.0, 6.0]], [5.0])

    def test_sequence_validation(self):
        es = EventSet.uniform(2, thresholds=(1.0, 2.0))
        good = Sequence([(0, 0), (1, 0), (0, 1), (1, 1)])
        good.validate(es)
        with pytest.raises(ValueError):
            Sequence([(0, 1), (0, 0), (1, 0), (1, 1)]).validate(es)
        with pytest.raises(ValueError):
            Sequence([(0, 0), (0, 1)]).validate(es)

    def test_random_sequences_always_valid(self):
        es = EventSet.uniform(3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            seq = random_sequence(es, rng)
            seq.validate(es)


class TestExpectedZ:
    def test_stage_zero_all_zeros(self):
        es = EventSet.uniform(3)
        rng = np.random.default_rng(1)
        np.testing.assert_array_equal(
            expected_z(random_sequence(es, rng), 0, es), np.zeros(3)
        )

    def test_threshold_hit_exactly_at_event_position(self):
        es = EventSet.uniform(2, thresholds=(1.0, 2.0))
        seq = Sequence([(0, 0), (1, 0), (1, 1), (0, 1)])
        # variable 1's z=2 event sits at 1-based position 3
        assert expected_z(seq, 3, es)[1] == pytest.approx(2.0)

    def test_single_variable_full_progression(self):
        es = EventSet.uniform(1)
        seq = Sequence([(0, 0), (0, 1), (0, 2)])
        assert expected_z(seq, 3, es)[0] == pytest.approx(3.0)
        # halfway between events interpolates linearly
        assert expected_z(seq, 1, es)[0] == pytest.approx(1.0)
        assert expected_z(seq, 2, es)[0] == pytest.approx(2.0)

    def test_stage_bounds(self):
        es = EventSet.uniform(1)
        seq = Sequence([(0, 0), (0, 1), (0, 2)])
        with pytest.raises(ValueError):
            expected_z(seq, 4, es)
        with pytest.raises(ValueError):
            expected_z(seq, -1, es)


class TestSequenceLoglik:
    def test_symmetric_data_orderings_tie(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        rng = np.random.default_rng(2)
        half = rng.normal(size=(40, 2))
        Z = np.vstack([half, half[:, ::-1]])  # column-exchangeable
        a = sequence_loglik(Z, Sequence([(0, 0), (1, 0)]), es, np.ones(2))
        b = sequence_loglik(Z, Sequence([(1, 0), (0, 0)]), es, np.ones(2))
        assert a == pytest.approx(b, abs=1e-9)

    def test_zero_patients(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        assert sequence_loglik(
            np.empty((0, 2)), Sequence([(0, 0), (1, 0)]), es, np.ones(2)
        ) == 0.0

    def test_non_finite_rejected(self):
        es = EventSet.uniform(1, thresholds=(1.0,))
        with pytest.raises(ValueError):
            sequence_loglik(np.array([[np.inf]]), Sequence([(0, 0)]), es, np.ones(1))

    def test_planted_ordering_beats_all_others(self):
        es = EventSet.uniform(3, thresholds=(2.0,))
        planted = Sequence([(1, 0), (2, 0), (0, 0)])
        Z, _ = planted_cohort(es, planted, 200, seed=3, noise=0.5)
        lls = {
            tuple(s.events): sequence_loglik(Z, s, es, np.ones(3))
            for s in all_valid_sequences(es)
        }
        assert max(lls, key=lls.get) == tuple(planted.events)


class TestOrderingSpace:
    def test_single_chain(self):
        assert ordering_space_log10(1, 3) == pytest.approx(0.0, abs=1e-12)

    def test_two_singletons(self):
        assert ordering_space_log10(2, 1) == pytest.approx(math.log10(2), abs=1e-12)

    def test_against_big_integer_oracle(self):
        for n, t in [(17, 3), (3, 2), (5, 4), (12, 3), (8, 1), (20, 2)]:
            exact = math.factorial(n * t) // (math.factorial(t) ** n)
            assert ordering_space_log10(n, t) == pytest.approx(
                math.log10(exact), rel=1e-12
            )

    def test_reference_value(self):
        assert ordering_space_log10(17, 3) == pytest.approx(52.96, abs=0.01)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            ordering_space_log10(0, 3)


class TestFitSustain:
    def test_c1_matches_exhaustive_maximizer(self):
        es = EventSet.uniform(3, thresholds=(2.0,))
        for seed in range(5):
            rng = np.random.default_rng(seed)
            planted = random_sequence(es, rng)
            Z, _ = planted_cohort(es, planted, 150, seed=seed + 100, noise=0.5)
            lls = {
                tuple(s.events): sequence_loglik(Z, s, es, np.ones(3))
                for s in all_valid_sequences(es)
            }
            oracle = max(lls, key=lls.get)
            fit = fit_sustain(Z, 1, SustainConfig(n_restarts=3, seed=seed), es)
            assert tuple(fit.model.sequences[0].events) == oracle

    def test_degenerate_all_zero_data(self):
        es = EventSet.uniform(3, thresholds=(1.0,))
        Z = np.zeros((30, 3))
        fit = fit_sustain(Z, 1, SustainConfig(n_restarts=1, seed=0), es)
        fit.model.sequences[0].validate(es)
        assert fit.status == "ok"

    def test_c2_disjoint_variable_groups(self):
        es = EventSet.uniform(5, thresholds=(2.0,))
        seq_a = Sequence([(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)])
        seq_b = Sequence([(2, 0), (3, 0), (4, 0), (0, 0), (1, 0)])
        Za, _ = planted_cohort(es, seq_a, 150, seed=4, noise=0.5)
        Zb, _ = planted_cohort(es, seq_b, 150, seed=5, noise=0.5)
        Z = np.vstack([Za, Zb])
        truth = np.concatenate([np.ones(150), np.full(150, 2)]).astype(int)
        fit = fit_sustain(Z, 2, SustainConfig(n_restarts=4, seed=0), es)
        post = stage_and_assign(fit.model, Z)
        acc = evalharness.matched_accuracy(post.subtype, truth).accuracy
        assert acc >= 0.9

    def test_c_exceeds_ordering_count(self):
        es = EventSet.uniform(1)
        with pytest.raises(ValueError):
            fit_sustain(np.zeros((5, 1)), 2, SustainConfig(), es)

    def test_deterministic(self):
        es = EventSet.uniform(3, thresholds=(1.0, 2.0))
        Z, _ = planted_cohort(
            es, Sequence(sorted(es.events)), 60, seed=6, noise=0.8
        )
        a = fit_sustain(Z, 1, SustainConfig(n_restarts=2, seed=3), es)
        b = fit_sustain(Z, 1, SustainConfig(n_restarts=2, seed=3), es)
        assert a.loglik == b.loglik
        assert [s.events for s in a.model.sequences] == [
            s.events for s in b.model.sequences
        ]

    def test_json_roundtrip(self):
        es = EventSet.uniform(2, thresholds=(1.0, 2.0))
        Z, _ = planted_cohort(es, Sequence(sorted(es.events)), 40, seed=7)
        fit = fit_sustain(Z, 1, SustainConfig(n_restarts=1, seed=0), es)
        back = SubtypeModel.from_json(fit.model.to_json())
        assert [s.events for s in back.sequences] == [
            s.events for s in fit.model.sequences
        ]
        np.testing.assert_array_equal(back.fractions, fit.model.fractions)

    def test_fraction_simplex_enforced(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        seqs = [Sequence([(0, 0), (1, 0)])]
        with pytest.raises(ValueError):
            SubtypeModel(seqs, np.array([0.7, 0.7]), np.ones(2), es)


class TestMcmc:
    def test_symmetric_two_variable_frequencies(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        rng = np.random.default_rng(8)
        half = rng.normal(0.5, 1.0, size=(30, 2))
        Z = np.vstack([half, half[:, ::-1]])
        model = SubtypeModel(
            [Sequence([(0, 0), (1, 0)])], np.ones(1), np.ones(2), es
        )
        res = mcmc_sample(Z, model, n_iter=4000, seed=0)
        ind = np.array(
            [1.0 if s[0].events[0] == (0, 0) else 0.0 for s in res.samples]
        )
        batches = ind.reshape(20, -1).mean(axis=1)
        se = batches.std(ddof=1) / np.sqrt(len(batches))
        assert abs(ind.mean() - 0.5) <= 3 * se

    def test_identified_ordering_concentrates(self):
        es = EventSet.uniform(3, thresholds=(2.0,))
        planted = Sequence([(2, 0), (0, 0), (1, 0)])
        Z, _ = planted_cohort(es, planted, 300, seed=9, noise=0.4)
        model = SubtypeModel([planted], np.ones(1), np.ones(3), es)
        res = mcmc_sample(Z, model, n_iter=1000, seed=1)
        canon = {ev: e for e, ev in enumerate(es.events)}
        on_true = np.mean(
            [res.position_freq[0, canon[ev], p] for p, ev in enumerate(planted.events)]
        )
        assert on_true >= 0.9

    def test_single_iteration(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        model = SubtypeModel(
            [Sequence([(0, 0), (1, 0)])], np.ones(1), np.ones(2), es
        )
        res = mcmc_sample(np.zeros((5, 2)), model, n_iter=1, seed=0)
        assert len(res.samples) == 1
        assert 0.0 <= res.acceptance_rate <= 1.0

    def test_n_iter_validation(self):
        es = EventSet.uniform(1, thresholds=(1.0,))
        model = SubtypeModel([Sequence([(0, 0)])], np.ones(1), np.ones(1), es)
        with pytest.raises(ValueError):
            mcmc_sample(np.zeros((2, 1)), model, n_iter=0, seed=0)

    def test_samples_stay_valid(self):
        es = EventSet.uniform(2)
        rng = np.random.default_rng(10)
        model = SubtypeModel(
            [random_sequence(es, rng)], np.ones(1), np.ones(2), es
        )
        Z = rng.normal(size=(20, 2))
        res = mcmc_sample(Z, model, n_iter=200, seed=2)
        for draw in res.samples[::20]:
            draw[0].validate(es)


class TestStageAndAssign:
    def test_rows_sum_to_one(self):
        es = EventSet.uniform(3, thresholds=(1.0, 2.0))
        rng = np.random.default_rng(11)
        model = SubtypeModel(
            [random_sequence(es, rng), random_sequence(es, rng)],
            np.array([0.6, 0.4]),
            np.ones(3),
            es,
        )
        post = stage_and_assign(model, rng.normal(size=(25, 3)))
        np.testing.assert_allclose(post.probs.sum(axis=(1, 2)), 1.0, atol=1e-9)

    def test_on_trajectory_subject_peaks_at_true_cell(self):
        es = EventSet.uniform(4, thresholds=(2.0,))
        seq1 = Sequence([(0, 0), (1, 0), (2, 0), (3, 0)])
        seq2 = Sequence([(3, 0), (2, 0), (1, 0), (0, 0)])
        model = SubtypeModel([seq1, seq2], np.full(2, 0.5), np.ones(4), es)
        mu1 = trajectory_matrix(seq1, es)
        for m in (1, 2, 3):
            post = stage_and_assign(model, mu1[m][None, :])
            assert post.subtype[0] == 1
            assert post.stage[0] == m

    def test_degenerate_fraction_forces_subtype(self):
        es = EventSet.uniform(2, thresholds=(1.0,))
        model = SubtypeModel(
            [Sequence([(0, 0), (1, 0)]), Sequence([(1, 0), (0, 0)])],
            np.array([1.0, 0.0]),
            np.ones(2),
            es,
        )
        post = stage_and_assign(model, np.random.default_rng(12).normal(size=(10, 2)))
        assert set(post.subtype.tolist()) == {1}


class TestScalingProbe:
    def test_zero_budget_all_timeout(self, tmp_path):
        rows = scaling_probe([2, 3], 10, time_budget_s=0.0, seed=0,
                             thresholds_per_var=1, out_csv=tmp_path / "p.csv")
        assert all(r["status"] == "timeout" for r in rows)
        assert all(r["iter_ms"] == "" for r in rows)
        assert (tmp_path / "p.csv").exists()

    def test_small_probe_runs_and_orders(self):
        rows = scaling_probe([2, 3, 4], 20, time_budget_s=60.0, seed=0,
                             thresholds_per_var=1)
        assert [r["status"] for r in rows] == ["ok"] * 3
        logs = [r["log10_orderings"] for r in rows]
        assert logs == sorted(logs) and logs[0] < logs[-1]
        assert all(r["iter_ms"] > 0 for r in rows)

    def test_empty_var_counts(self):
        with pytest.raises(ValueError):
            scaling_probe([], 10, time_budget_s=1.0, seed=0)
