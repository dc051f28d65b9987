"""End-to-end pruning pipeline: generator, grid search, voting, oracles."""

import itertools

import numpy as np
import pytest

from socprune.core import LabelVector, PredictionTensor, SplitSpec
from socprune.errors import (
    AllCellsFailed,
    DomainError,
    EmptyEnsemble,
    FitFailed,
    InvalidSpec,
    ShapeMismatch,
    TooLarge,
)
from socprune.loss import exact_loss
from socprune.pipeline import (
    VOTE_MAJORITY,
    VOTE_WEIGHTED,
    PruneConfig,
    SyntheticSpec,
    accuracy,
    auto_threshold,
    brute_force_subset_oracle,
    cross_validate,
    fit_weights,
    generate_synthetic_ensemble,
    prune_by_threshold,
    run_pipeline,
    vote,
)
from socprune.solver import SolverSettings

from conftest import random_instance


def small_spec(**overrides):
    base = dict(num_models=4, num_samples=60, num_classes=3,
                base_accuracy_range=(0.5, 0.8), correlation=0.3,
                sharpness=4.0, seed=3)
    base.update(overrides)
    return SyntheticSpec(**base)


class TestSyntheticSpec:
    def test_single_model_rejected(self):
        with pytest.raises(InvalidSpec):
            small_spec(num_models=1)

    def test_accuracy_range_must_beat_chance(self):
        with pytest.raises(InvalidSpec):
            small_spec(base_accuracy_range=(0.2, 0.8))  # 0.2 < 1/3

    def test_accuracy_range_below_one(self):
        with pytest.raises(InvalidSpec):
            small_spec(base_accuracy_range=(0.5, 1.0))

    def test_correlation_range(self):
        with pytest.raises(InvalidSpec):
            small_spec(correlation=1.0)
        with pytest.raises(InvalidSpec):
            small_spec(correlation=-0.1)

    def test_sharpness_positive(self):
        with pytest.raises(InvalidSpec):
            small_spec(sharpness=0.0)


class TestGenerator:
    def test_deterministic(self):
        spec = small_spec(seed=7)
        t1, y1, s1 = generate_synthetic_ensemble(spec)
        t2, y2, s2 = generate_synthetic_ensemble(spec)
        assert np.array_equal(t1.probs, t2.probs)
        assert np.array_equal(y1.labels, y2.labels)
        assert np.array_equal(s1.train_indices, s2.train_indices)

    def test_split_proportions(self):
        t, y, s = generate_synthetic_ensemble(small_spec(num_samples=100))
        assert s.train_indices.size == 60
        assert s.valid_indices.size == 20
        assert s.test_indices.size == 20
        s.validate_against(100)

    def test_correlation_raises_agreement(self):
        def mean_agreement(corr):
            spec = small_spec(num_models=4, num_samples=800, num_classes=4,
                              base_accuracy_range=(0.6, 0.7), sharpness=8.0,
                              correlation=corr, seed=11)
            t, _, _ = generate_synthetic_ensemble(spec)
            preds = np.argmax(t.probs, axis=2)
            pairs = list(itertools.combinations(range(4), 2))
            return np.mean([np.mean(preds[i] == preds[j]) for i, j in pairs])

        assert mean_agreement(0.99) >= mean_agreement(0.0)

    def test_accuracy_calibration(self):
        spec = small_spec(num_models=3, num_samples=2500, num_classes=4,
                          base_accuracy_range=(0.55, 0.85), seed=2)
        t, y, _ = generate_synthetic_ensemble(spec)
        preds = np.argmax(t.probs, axis=2)
        # targets are drawn in model order right after the labels
        accs = (preds == y.labels).mean(axis=1)
        assert np.all(accs > 0.5) and np.all(accs < 0.9)

    def test_tight_range_calibration(self):
        spec = SyntheticSpec(num_models=3, num_samples=5000, num_classes=10,
                             base_accuracy_range=(0.95, 0.95), correlation=0.2,
                             sharpness=6.0, seed=4)
        t, y, _ = generate_synthetic_ensemble(spec)
        preds = np.argmax(t.probs, axis=2)
        accs = (preds == y.labels).mean(axis=1)
        assert np.all(accs >= 0.90) and np.all(accs <= 1.0)


class TestFitWeights:
    def test_duplicate_models_symmetric(self, rng):
        t, y = random_instance(rng, 1, 40, 3)
        probs = np.concatenate([t.probs, t.probs], axis=0)
        t2 = PredictionTensor(probs=probs)
        w = fit_weights(t2, y, alpha=0.4, lam=0.05)
        assert abs(w[0] - w[1]) < 1e-6

    def test_huge_lambda_all_zero(self, rng):
        t, y = random_instance(rng, 3, 30, 3)
        w = fit_weights(t, y, alpha=0.5, lam=50.0)
        assert np.abs(w).max() < 1e-7

    def test_simplex_mode_constraints(self, rng):
        t, y = random_instance(rng, 4, 40, 3)
        w = fit_weights(t, y, alpha=0.4, lam=0.3, simplex=True)
        assert abs(w.sum() - 1.0) < 1e-7
        assert w.min() >= -1e-7

    def test_fit_failed_surfaces_status(self, rng):
        t, y = random_instance(rng, 3, 30, 3)
        with pytest.raises(FitFailed) as exc:
            fit_weights(t, y, alpha=0.4, lam=0.1,
                        settings=SolverSettings(max_iters=1))
        assert "max_iters" in str(exc.value)


class TestPruneByThreshold:
    def test_basic(self):
        assert prune_by_threshold([0.5, -0.01, 0.2], 0.1) == [0, 2]

    def test_zero_threshold_keeps_all(self):
        assert prune_by_threshold([0.0, 0.3], 0.0) == [0, 1]

    def test_empty_guard_returns_argmax(self):
        assert prune_by_threshold([0.01, -0.3, 0.2], 1.0) == [1]

    def test_negative_threshold_rejected(self):
        with pytest.raises(DomainError):
            prune_by_threshold([0.5], -0.1)
        with pytest.raises(DomainError):
            prune_by_threshold([0.5], float("nan"))

    def test_monotone_nesting(self, rng):
        w = rng.normal(size=8)
        previous = set(range(8))
        for h in np.linspace(0.0, np.abs(w).max(), 12):
            selected = set(prune_by_threshold(w, float(h)))
            if len(selected) > 1 or np.abs(w).max() >= h:
                assert selected <= previous
                previous = selected


class TestVote:
    def two_model_tensor(self):
        # model 0 says class 0 on all three samples; model 1 says class 1
        probs = np.array([
            [[0.9, 0.1], [0.9, 0.1], [0.9, 0.1]],
            [[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]],
        ])
        return PredictionTensor(probs=probs)

    def test_majority_simple(self):
        probs = np.array([
            [[1.0, 0.0]], [[1.0, 0.0]], [[0.0, 1.0]],
        ])
        t = PredictionTensor(probs=probs)
        assert vote(t, [0, 1, 2])[0] == 0

    def test_majority_tie_lowest_class(self):
        labels = vote(self.two_model_tensor(), [0, 1])
        assert np.array_equal(labels, [0, 0, 0])

    def test_single_member(self):
        labels = vote(self.two_model_tensor(), [1])
        assert np.array_equal(labels, [1, 1, 1])

    def test_weighted_matches_manual(self, rng):
        t, _ = random_instance(rng, 4, 10, 3)
        w = rng.normal(size=4) * 0.4 + 0.3
        members = [0, 2, 3]
        labels = vote(t, members, mode=VOTE_WEIGHTED, weights=w)
        mix = np.einsum("i,inj->nj", w[members], t.probs[members])
        assert np.array_equal(labels, np.argmax(mix, axis=1))

    def test_duplication_invariance(self, rng):
        t, _ = random_instance(rng, 3, 12, 4)
        base = vote(t, [0, 1, 2])
        doubled = PredictionTensor(probs=np.concatenate([t.probs, t.probs], axis=0))
        assert np.array_equal(vote(doubled, [0, 1, 2, 3, 4, 5]), base)

    def test_empty_members(self):
        with pytest.raises(EmptyEnsemble):
            vote(self.two_model_tensor(), [])

    def test_out_of_range_member(self):
        with pytest.raises(ShapeMismatch):
            vote(self.two_model_tensor(), [0, 5])


class TestAccuracy:
    def test_three_of_four(self):
        y = LabelVector(labels=np.array([0, 1, 0, 1]), num_classes=2)
        assert accuracy(np.array([0, 1, 0, 0]), y) == 0.75

    def test_empty_rejected(self):
        y = LabelVector(labels=np.array([0]), num_classes=2)
        with pytest.raises(ShapeMismatch):
            accuracy(np.array([], dtype=int), y.subset([]))

    def test_shape_mismatch(self):
        y = LabelVector(labels=np.array([0, 1]), num_classes=2)
        with pytest.raises(ShapeMismatch):
            accuracy(np.array([0]), y)


class TestAutoThreshold:
    def test_tie_prefers_larger(self):
        # identical models: every threshold votes identically, largest h wins
        row = np.array([[0.8, 0.2], [0.3, 0.7], [0.9, 0.1], [0.1, 0.9]])
        probs = np.stack([row, row, row])
        t = PredictionTensor(probs=probs)
        y = LabelVector(labels=np.array([0, 1, 0, 1]), num_classes=2)
        w = np.array([0.1, 0.2, 0.3])
        h = auto_threshold(w, t, y, np.arange(4))
        assert h == pytest.approx(0.3)

    def test_picks_accuracy_maximizer(self):
        # model 0 perfect, models 1..2 always wrong; only h > |w_1|, |w_2|
        # isolates model 0 and fixes the vote
        good = np.array([[0.9, 0.1], [0.1, 0.9]] * 2)
        bad = np.array([[0.1, 0.9], [0.9, 0.1]] * 2)
        t = PredictionTensor(probs=np.stack([good, bad, bad]))
        y = LabelVector(labels=np.array([0, 1, 0, 1]), num_classes=2)
        w = np.array([0.9, 0.5, 0.5])
        h = auto_threshold(w, t, y, np.arange(4))
        selected = prune_by_threshold(w, h)
        assert selected == [0]

    def test_explicit_candidates(self):
        t = PredictionTensor(probs=np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
        y = LabelVector(labels=np.array([0]), num_classes=2)
        h = auto_threshold(np.array([0.8, 0.1]), t, y, np.array([0]),
                           candidates=[0.0, 0.5])
        assert h == 0.5


class TestCrossValidate:
    def test_single_cell_grid(self, rng):
        t, y = random_instance(rng, 3, 50, 3)
        splits = SplitSpec(train_indices=np.arange(30),
                           valid_indices=np.arange(30, 40),
                           test_indices=np.arange(40, 50))
        config = PruneConfig(alpha_grid=(0.4,), lambda_grid=(0.3,))
        best_alpha, best_lambda, cells = cross_validate(t, y, splits, config)
        assert (best_alpha, best_lambda) == (0.4, 0.3)
        assert len(cells) == 1 and cells[0].status == "ok"

    def test_dominating_subset_wins(self):
        # model 0 is always right, 1 and 2 always wrong; the cell whose
        # pruned set is {0} dominates any cell keeping the bad majority
        n = 40
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, size=n)
        good = np.stack([0.9 - 0.8 * labels, 0.1 + 0.8 * labels], axis=1)
        bad = good[:, ::-1].copy()
        t = PredictionTensor(probs=np.stack([good, bad, bad]))
        y = LabelVector(labels=labels, num_classes=2)
        splits = SplitSpec(train_indices=np.arange(20),
                           valid_indices=np.arange(20, 30),
                           test_indices=np.arange(30, 40))
        config = PruneConfig(alpha_grid=(0.5,), lambda_grid=(0.0, 0.9),
                             threshold=0.05)
        best_alpha, best_lambda, cells = cross_validate(t, y, splits, config)
        assert best_lambda == 0.9
        by_lam = {c.lam: c for c in cells}
        assert by_lam[0.9].accuracy == 1.0
        assert by_lam[0.9].num_pruned == 1
        assert by_lam[0.9].accuracy > by_lam[0.0].accuracy

    def test_tie_prefers_smaller_lambda_then_alpha_index(self):
        # identical models and total shrinkage: every cell behaves the same,
        # so the documented index order decides
        row = np.array([[0.7, 0.3], [0.2, 0.8]] * 10)
        t = PredictionTensor(probs=np.stack([row, row, row]))
        y = LabelVector(labels=np.array([0, 1] * 10), num_classes=2)
        splits = SplitSpec(train_indices=np.arange(10),
                           valid_indices=np.arange(10, 15),
                           test_indices=np.arange(15, 20))
        config = PruneConfig(alpha_grid=(0.2, 0.4), lambda_grid=(0.7, 0.9))
        best_alpha, best_lambda, _ = cross_validate(t, y, splits, config)
        assert best_lambda == 0.7
        assert best_alpha == 0.2

    def test_all_cells_failed(self, rng):
        t, y = random_instance(rng, 3, 50, 3)
        splits = SplitSpec(train_indices=np.arange(30),
                           valid_indices=np.arange(30, 40),
                           test_indices=np.arange(40, 50))
        config = PruneConfig(alpha_grid=(0.3,), lambda_grid=(0.5,),
                             solver=SolverSettings(max_iters=1))
        with pytest.raises(AllCellsFailed):
            cross_validate(t, y, splits, config)


class TestRunPipeline:
    def test_identical_models_equal_accuracy(self):
        rng = np.random.default_rng(5)
        row = rng.dirichlet(np.ones(3), size=60)
        t = PredictionTensor(probs=np.stack([row, row, row, row]))
        y = LabelVector(labels=rng.integers(0, 3, 60), num_classes=3)
        splits = SplitSpec(train_indices=np.arange(36),
                           valid_indices=np.arange(36, 48),
                           test_indices=np.arange(48, 60))
        report = run_pipeline((t, y, splits), PruneConfig(threshold="auto"))
        assert report.pruned_accuracy == report.full_accuracy
        assert report.num_models_pruned <= report.num_models_full

    def test_deterministic_reports(self):
        spec = small_spec(num_samples=80, seed=9)
        config = PruneConfig(threshold="auto", simplex_mode=True)
        assert run_pipeline(spec, config) == run_pipeline(spec, config)

    def test_synthetic_source(self):
        report = run_pipeline(small_spec(), PruneConfig(simplex_mode=True))
        assert 0.0 <= report.pruned_accuracy <= 1.0
        assert len(report.cells) == 25
        assert sorted(report.selected) == list(report.selected)

    def test_selected_size_mostly_shrinks_with_lambda(self):
        # soft property: reported, not asserted (the hard assertable form is
        # the L1 path monotonicity at the solver level)
        shrinking = 0
        trials = 10
        for seed in range(trials):
            t, y, splits = generate_synthetic_ensemble(small_spec(
                num_models=6, num_samples=200, seed=seed))
            sizes = []
            for lam in (0.1, 0.5, 0.9):
                config = PruneConfig(alpha_grid=(0.4,), lambda_grid=(lam,),
                                     threshold="auto", simplex_mode=True)
                report = run_pipeline((t, y, splits), config)
                sizes.append(report.num_models_pruned)
            if all(b <= a for a, b in zip(sizes, sizes[1:])):
                shrinking += 1
        print(f"selected-size monotone in lambda on {shrinking}/{trials} seeds")


class TestBruteForceOracle:
    def test_matches_manual_enumeration(self, rng):
        t, y = random_instance(rng, 3, 12, 3)
        alpha = 0.45
        best = None
        for r in range(1, 4):
            for subset in itertools.combinations(range(3), r):
                w = np.full(len(subset), 1.0 / len(subset))
                sub = PredictionTensor(probs=t.probs[list(subset)])
                val = exact_loss(w, sub, y, alpha).total
                if best is None or val < best[1] - 1e-15:
                    best = (subset, val)
        subset, value = brute_force_subset_oracle(t, y, alpha)
        assert tuple(subset) == best[0]
        assert abs(value - best[1]) < 1e-12

    def test_lower_bound_property(self, rng):
        t, y = random_instance(rng, 6, 30, 3)
        _, oracle_value = brute_force_subset_oracle(t, y, 0.3)
        for _ in range(10):
            r = int(rng.integers(1, 7))
            subset = sorted(rng.choice(6, size=r, replace=False))
            w = np.full(r, 1.0 / r)
            sub = PredictionTensor(probs=t.probs[subset])
            assert oracle_value <= exact_loss(w, sub, y, 0.3).total + 1e-12

    def test_lexicographic_tie_break(self, rng):
        t, y = random_instance(rng, 1, 10, 3)
        probs = np.concatenate([t.probs, t.probs], axis=0)
        t2 = PredictionTensor(probs=probs)
        subset, _ = brute_force_subset_oracle(t2, y, 0.5)
        # duplicates tie; {0} precedes {1} and {0,1} lexicographically
        assert tuple(subset) == (0,)

    def test_too_large_guard(self, rng):
        t, y = random_instance(rng, 15, 5, 2)
        with pytest.raises(TooLarge):
            brute_force_subset_oracle(t, y, 0.5)

    def test_max_m_argument(self, rng):
        t, y = random_instance(rng, 5, 5, 2)
        with pytest.raises(TooLarge):
            brute_force_subset_oracle(t, y, 0.5, max_m=4)
