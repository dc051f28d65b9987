"""Exact ensemble loss, entropy machinery, and the quadratic surrogate.

The reference evaluator below is written straight from the loss formula
with explicit loops, independent of the vectorized implementation.
"""

import math

import numpy as np
import pytest

from socprune.core import LabelVector, PredictionTensor
from socprune.errors import DomainError, ShapeMismatch
from socprune.loss import (
    build_surrogate,
    distribution_entropy,
    ensemble_prediction,
    entropy_term,
    exact_loss,
)

from conftest import random_instance, random_probs


def reference_loss(w, probs, labels, alpha):
    """Looped re-implementation of the loss; the oracle for exact_loss."""
    num_models, num_samples, num_classes = probs.shape
    acc_total = 0.0
    div_total = 0.0
    for n in range(num_samples):
        mix = [
            sum(w[i] * probs[i, n, j] for i in range(num_models))
            for j in range(num_classes)
        ]
        acc = 0.0
        bracket = 0.0
        for j in range(num_classes):
            gt = 1.0 if labels[n] == j else 0.0
            acc += (mix[j] - gt) ** 2
            h_mix = -mix[j] * math.log(mix[j]) if mix[j] > 0 else 0.0
            h_members = sum(
                w[i] * (-probs[i, n, j] * math.log(probs[i, n, j])
                        if probs[i, n, j] > 0 else 0.0)
                for i in range(num_models)
            )
            bracket += h_mix - h_members
        acc_total += acc / num_classes
        div_total += 1.0 - bracket / num_classes
    acc_term = acc_total / num_samples
    div_term = div_total / num_samples
    return alpha * acc_term + (1 - alpha) * div_term, acc_term, div_term


class TestEntropyTerm:
    def test_zero(self):
        assert entropy_term(0.0) == 0.0

    def test_one(self):
        assert entropy_term(1.0) == 0.0

    def test_half(self):
        assert abs(entropy_term(0.5) - (-0.5 * math.log(0.5))) < 1e-15

    def test_domain_error(self):
        with pytest.raises(DomainError):
            entropy_term(1.1)
        with pytest.raises(DomainError):
            entropy_term(-0.1)

    def test_slack_tolerated(self):
        assert entropy_term(-1e-13) == 0.0
        assert entropy_term(1.0 + 1e-13) == 0.0

    def test_vectorized(self):
        z = np.array([0.0, 0.5, 1.0])
        out = entropy_term(z)
        assert out.shape == (3,) and out[0] == 0.0 and out[2] == 0.0


class TestDistributionEntropy:
    def test_uniform_is_log_c(self):
        assert abs(distribution_entropy([0.25] * 4) - math.log(4)) < 1e-15

    def test_one_hot_is_zero(self):
        assert distribution_entropy([0.0, 1.0, 0.0]) == 0.0

    def test_frozen_value(self):
        # -0.25 ln 0.25 - 0.75 ln 0.75, evaluated independently
        assert abs(distribution_entropy([0.25, 0.75]) - 0.5623351446188083) < 1e-15

    def test_bad_row(self):
        with pytest.raises(DomainError):
            distribution_entropy([0.7, 0.7])

    def test_bounds(self, rng):
        for _ in range(200):
            c = int(rng.integers(2, 8))
            g = rng.standard_gamma(0.5, size=c) + 1e-12
            p = g / g.sum()
            h = distribution_entropy(p)
            assert -1e-12 <= h <= math.log(c) + 1e-12

    def test_concavity(self, rng):
        for _ in range(200):
            c = int(rng.integers(2, 6))
            g = rng.standard_gamma(1.0, size=(2, c)) + 1e-9
            p, q = g[0] / g[0].sum(), g[1] / g[1].sum()
            theta = rng.uniform(0.05, 0.95)
            mixed = distribution_entropy(theta * p + (1 - theta) * q)
            split = theta * distribution_entropy(p) + (1 - theta) * distribution_entropy(q)
            assert mixed >= split - 1e-12


class TestEnsemblePrediction:
    def test_single_model_identity(self):
        t = PredictionTensor(probs=np.array([[[0.3, 0.7]]]))
        assert np.allclose(ensemble_prediction([1.0], t, 0), [0.3, 0.7])

    def test_symmetry(self):
        t = PredictionTensor(probs=np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
        assert np.allclose(ensemble_prediction([0.5, 0.5], t, 0), [0.5, 0.5])

    def test_weighted_sum(self):
        t = PredictionTensor(probs=np.array([[[0.9, 0.1]], [[0.1, 0.9]]]))
        assert np.allclose(ensemble_prediction([0.2, 0.8], t, 0), [0.26, 0.74])

    def test_shape_mismatch(self):
        t = PredictionTensor(probs=np.array([[[0.5, 0.5]]]))
        with pytest.raises(ShapeMismatch):
            ensemble_prediction([0.5, 0.5], t, 0)


class TestExactLoss:
    def test_single_member_diversity_is_one(self, rng):
        t, y = random_instance(rng, 1, 5, 3)
        lv = exact_loss([1.0], t, y, alpha=0.4)
        assert lv.diversity_term == 1.0

    def test_duplicate_pair_diversity_is_one(self, rng):
        probs = random_probs(rng, 1, 4, 3)
        t = PredictionTensor(probs=np.concatenate([probs, probs], axis=0))
        y = LabelVector(labels=rng.integers(0, 3, 4), num_classes=3)
        lv = exact_loss([0.5, 0.5], t, y, alpha=0.2)
        assert abs(lv.diversity_term - 1.0) < 1e-12

    def test_matches_reference_oracle(self, rng):
        for _ in range(20):
            t, y = random_instance(rng, 3, 4, 2)
            g = rng.standard_gamma(1.0, size=3) + 1e-3
            w = g / g.sum()
            lv = exact_loss(w, t, y, alpha=0.35)
            ref_total, ref_acc, ref_div = reference_loss(
                w, t.probs, y.labels, alpha=0.35
            )
            assert abs(lv.total - ref_total) < 1e-12
            assert abs(lv.accuracy_term - ref_acc) < 1e-12
            assert abs(lv.diversity_term - ref_div) < 1e-12

    def test_decomposition_identity(self, rng):
        t, y = random_instance(rng, 4, 6, 3)
        w = np.full(4, 0.25)
        for alpha in (0.0, 0.3, 1.0):
            lv = exact_loss(w, t, y, alpha)
            assert abs(lv.total - (alpha * lv.accuracy_term
                                   + (1 - alpha) * lv.diversity_term)) < 1e-12

    def test_out_of_domain_mixture_raises(self, rng):
        t, y = random_instance(rng, 2, 3, 2)
        with pytest.raises(DomainError):
            exact_loss([2.0, 1.5], t, y, alpha=0.5)

    def test_jensen_bracket_nonnegative(self, rng):
        # simplex weights keep diversity_term <= 1 + tolerance
        for _ in range(30):
            t, y = random_instance(rng, 3, 5, 4)
            g = rng.standard_gamma(1.0, size=3) + 1e-3
            w = g / g.sum()
            lv = exact_loss(w, t, y, alpha=0.0)
            assert lv.diversity_term <= 1.0 + 1e-12

    def test_sample_order_invariance(self, rng):
        t, y = random_instance(rng, 3, 8, 3)
        w = np.full(3, 1 / 3)
        perm = rng.permutation(8)
        a = exact_loss(w, t, y, 0.4).total
        b = exact_loss(w, t.subset(perm), y.subset(perm), 0.4).total
        assert abs(a - b) < 1e-9


class TestBuildSurrogate:
    def test_hand_example(self):
        t = PredictionTensor(probs=np.array([[[0.5, 0.5]]]))
        y = LabelVector(labels=np.array([0]), num_classes=2)
        s = build_surrogate(t, y, ridge=0.0)
        assert abs(s.quad[0, 0] - 0.25) < 1e-15
        assert abs(s.lin_accuracy[0] - (-0.5)) < 1e-15
        assert abs(s.constant - 0.5) < 1e-15

    def test_accuracy_term_exact(self, rng):
        for _ in range(20):
            t, y = random_instance(rng, 4, 6, 3)
            s = build_surrogate(t, y, ridge=0.0)
            w = rng.normal(size=4) * 0.3
            quad_val = w @ s.quad @ w + s.lin_accuracy @ w + s.constant
            # evaluate only the accuracy part; alpha=1 isolates it
            mix = np.einsum("i,inj->nj", w, t.probs)
            acc = np.mean(np.sum((mix - y.one_hot()) ** 2, axis=1) / t.num_classes)
            assert abs(quad_val - acc) < 1e-10

    def test_diversity_gradient_finite_difference(self, rng):
        step = 1e-6
        for _ in range(10):
            t, y = random_instance(rng, 3, 5, 3)
            anchor = np.full(3, 1 / 3)
            s = build_surrogate(t, y, ridge=0.0)
            for i in range(3):
                wp, wm = anchor.copy(), anchor.copy()
                wp[i] += step
                wm[i] -= step
                fd = (exact_loss(wp, t, y, 0.0).diversity_term
                      - exact_loss(wm, t, y, 0.0).diversity_term) / (2 * step)
                assert abs(s.lin_diversity[i] - fd) < 1e-5

    def test_quad_psd(self, rng):
        t, y = random_instance(rng, 5, 7, 4)
        s = build_surrogate(t, y, ridge=0.0)
        for _ in range(20):
            w = rng.normal(size=5)
            assert w @ s.quad @ w >= -1e-10

    def test_default_ridge_scale(self, rng):
        t, y = random_instance(rng, 4, 6, 3)
        s = build_surrogate(t, y)
        assert abs(s.ridge - 1e-8 * np.trace(s.quad) / 4) < 1e-20

    def test_symmetry_enforced(self, rng):
        t, y = random_instance(rng, 4, 6, 3)
        s = build_surrogate(t, y)
        assert np.abs(s.quad - s.quad.T).max() <= 1e-12

    def test_one_hot_members_tolerated(self):
        # anchor mixture contains an exact zero; the clamped log must not blow up
        probs = np.array([[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]])
        t = PredictionTensor(probs=probs)
        y = LabelVector(labels=np.array([0, 0]), num_classes=2)
        s = build_surrogate(t, y)
        assert np.all(np.isfinite(s.lin_diversity))
