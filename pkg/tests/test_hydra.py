import itertools

import numpy as np
import pytest

from biobench import datagen, evalharness
from biobench.hydra import (
    DegenerateInputError,
    HydraConfig,
    Hyperplane,
    Polytope,
    consensus_aggregate,
    dpp_select,
    fit_hydra,
    polytope_assign,
    train_hyperplane,
)


class TestTrainHyperplane:
    def test_symmetric_two_point_problem(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        hp, obj = train_hyperplane(X, y, C=100.0, tol=1e-8)
        np.testing.assert_allclose(hp.w, [1.0, 0.0], atol=1e-6)
        assert abs(hp.b) < 1e-6
        margins = y * hp.decision(X)
        np.testing.assert_allclose(margins, [1.0, 1.0], atol=1e-6)

    def test_zero_weight_class_is_degenerate(self):
        X = np.array([[1.0], [-1.0]])
        y = np.array([1.0, -1.0])
        with pytest.raises(DegenerateInputError):
            train_hyperplane(X, y, sample_weights=np.array([1.0, 0.0]))

    def test_single_class_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            train_hyperplane(np.eye(3), np.ones(3))

    def test_non_finite_features_rejected(self):
        X = np.array([[np.nan, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            train_hyperplane(X, np.array([1.0, -1.0]))

    def test_separable_2d_against_grid_search(self):
        rng = np.random.default_rng(0)
        X = np.vstack(
            [rng.normal([3, 3], 0.3, size=(10, 2)), rng.normal([-3, -3], 0.3, size=(10, 2))]
        )
        y = np.concatenate([np.ones(10), -np.ones(10)])
        hp, obj = train_hyperplane(X, y, C=10.0, tol=1e-8)
        hinge = np.maximum(1 - y * hp.decision(X), 0).sum()
        assert hinge < 1e-6
        # coarse grid oracle over (w, b)
        best = np.inf
        for w1 in np.linspace(-1, 1, 41):
            for w2 in np.linspace(-1, 1, 41):
                for b in np.linspace(-1, 1, 21):
                    w = np.array([w1, w2])
                    o = 0.5 * w @ w + 10.0 * np.maximum(
                        1 - y * (X @ w + b), 0
                    ).sum()
                    best = min(best, o)
        assert obj <= best + 1e-3

    def test_weighted_hinge_in_objective(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 3))
        y = np.where(rng.uniform(size=30) < 0.5, 1.0, -1.0)
        w_s = rng.uniform(0.5, 2.0, size=30)
        hp, obj = train_hyperplane(X, y, sample_weights=w_s, C=1.0, tol=1e-6)
        direct = 0.5 * hp.w @ hp.w + (
            w_s * np.maximum(1 - y * hp.decision(X), 0)
        ).sum()
        assert obj == pytest.approx(direct, rel=1e-9)


class TestDppSelect:
    def test_collinear_extremes(self):
        pts = np.array([[0.0], [1.0], [10.0]])
        assert set(dpp_select(pts, 2, seed=0).tolist()) == {0, 2}

    def test_duplicate_pair_never_selected(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
        for seed in range(10):
            sel = set(dpp_select(pts, 2, seed=seed).tolist())
            assert sel != {0, 1}

    def test_k_equals_n(self):
        pts = np.random.default_rng(2).normal(size=(4, 3))
        assert set(dpp_select(pts, 4, seed=0).tolist()) == {0, 1, 2, 3}

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            dpp_select(np.zeros((3, 2)), 4, seed=0)

    def test_greedy_tracks_max_determinant(self):
        # greedy MAP tolerance: at least 18 of 20 instances must match
        # the exhaustive max-determinant subset
        rng = np.random.default_rng(3)
        hits = 0
        for trial in range(20):
            n = int(rng.integers(6, 11))
            k = int(rng.integers(2, 4))
            pts = rng.normal(size=(n, 2))
            sel = set(dpp_select(pts, k, seed=trial).tolist())
            nrm = (pts * pts).sum(axis=1)
            sq = nrm[:, None] + nrm[None, :] - 2 * pts @ pts.T
            tri = sq[np.triu_indices(n, k=1)]
            med = np.sqrt(np.median(tri))
            L = np.exp(-sq / (2 * med * med))
            best, best_det = None, -np.inf
            for combo in itertools.combinations(range(n), k):
                d = np.linalg.det(L[np.ix_(combo, combo)])
                if d > best_det:
                    best_det, best = d, set(combo)
            own_det = np.linalg.det(L[np.ix_(sorted(sel), sorted(sel))])
            if sel == best or own_det >= 0.999 * best_det:
                hits += 1
        assert hits >= 18


class TestPolytopeAssign:
    def test_single_face(self):
        p = Polytope([Hyperplane(np.array([1.0, 0.0]), 0.0)])
        assert polytope_assign(p, np.random.default_rng(0).normal(size=(5, 2))).tolist() == [1] * 5

    def test_two_faces_direct(self):
        p = Polytope(
            [Hyperplane(np.array([1.0, 0.0]), 0.0), Hyperplane(np.array([-1.0, 0.0]), 0.0)]
        )
        assert polytope_assign(p, np.array([[2.0, 5.0]])).tolist() == [1]
        assert polytope_assign(p, np.array([[-2.0, 5.0]])).tolist() == [2]

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        faces = [Hyperplane(rng.normal(size=3), float(rng.normal())) for _ in range(3)]
        X = rng.normal(size=(50, 3))
        a = polytope_assign(Polytope(faces), X)
        scaled = Polytope([Hyperplane(3.5 * f.w, 3.5 * f.b) for f in faces])
        np.testing.assert_array_equal(a, polytope_assign(scaled, X))

    def test_dimension_mismatch(self):
        p = Polytope([Hyperplane(np.ones(3), 0.0)])
        with pytest.raises(ValueError):
            polytope_assign(p, np.ones((2, 4)))


class TestConsensusAggregate:
    def test_identical_runs(self):
        run = np.array([1, 1, 2, 2, 3, 3])
        out = consensus_aggregate([run] * 5, 3, seed=0)
        assert evalharness.matched_accuracy(out, run).accuracy == 1.0

    def test_permuted_runs(self):
        a = np.array([1, 1, 2, 2, 3, 3])
        b = np.array([2, 2, 3, 3, 1, 1])
        out = consensus_aggregate([a, b], 3, seed=0)
        assert evalharness.matched_accuracy(out, a).accuracy == 1.0

    def test_noisy_block_recovery(self):
        rng = np.random.default_rng(5)
        truth = np.repeat([1, 2, 3], 30)
        runs = []
        for _ in range(20):
            noisy = truth.copy()
            flip = rng.uniform(size=90) < 0.1
            noisy[flip] = rng.integers(1, 4, size=int(flip.sum()))
            runs.append(noisy)
        out = consensus_aggregate(runs, 3, seed=0)
        assert evalharness.matched_accuracy(out, truth).accuracy == 1.0

    def test_requires_assignments(self):
        with pytest.raises(ValueError):
            consensus_aggregate(np.zeros((0, 5)), 2, seed=0)


@pytest.fixture(scope="module")
def small_ds():
    cfg = datagen.preset_config("syn3-widespread-2-equal", seed=3)
    cfg.n_controls = 80
    cfg.cluster_sizes = datagen._split_sizes(120, cfg.cluster_sizes)
    cfg.n_patients = 120
    return datagen.make_preset("syn3-widespread-2-equal", seed=3, config=cfg)


class TestFitHydra:
    def test_recovers_planted_clusters(self, small_ds):
        fit = fit_hydra(small_ds, HydraConfig(K=2, n_init=5, seed=0))
        acc = evalharness.matched_accuracy(
            fit.assignment, small_ds.truth.labels
        ).accuracy
        assert acc >= 0.85

    def test_k1_matches_binary_classification(self, small_ds):
        fit = fit_hydra(small_ds, HydraConfig(K=1, n_init=3, seed=0))
        assert set(fit.assignment.tolist()) == {1}

    def test_deterministic(self, small_ds):
        cfg = HydraConfig(K=2, n_init=3, seed=7)
        a = fit_hydra(small_ds, cfg)
        b = fit_hydra(small_ds, cfg)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert a.objective_traces == b.objective_traces

    def test_objective_trace_mostly_monotone(self, small_ds):
        # face normalization makes the assignment step approximate, so
        # small dips are tolerated (see fit report for reseed events)
        fit = fit_hydra(small_ds, HydraConfig(K=2, n_init=5, seed=0))
        for trace in fit.objective_traces:
            for a, b in zip(trace, trace[1:]):
                assert b >= a - 0.05 * max(1.0, abs(a))

    def test_report_structure(self, small_ds):
        fit = fit_hydra(small_ds, HydraConfig(K=2, n_init=2, seed=1))
        rep = fit.report()
        assert set(rep) == {"objective_traces", "iterations", "reseed_events"}
        assert len(rep["objective_traces"]) == 2

    def test_requires_both_roles(self):
        base = datagen.generate_reference("unit_normal", 10, 4, seed=0)
        ds = datagen.LabeledDataset(base, ["control"] * 10, None)
        with pytest.raises(ValueError):
            fit_hydra(ds, HydraConfig(K=2))
