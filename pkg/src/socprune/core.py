"""Shared domain types, validation, and the deterministic RNG contract.

All types here are immutable after construction (backing arrays are marked
read-only) and safe to share across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    OutOfRange,
    RowNotNormalized,
    ShapeMismatch,
    ValidationError,
)

ROW_SUM_TOL = 1e-9


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def validate_tensor(t) -> None:
    """Check prediction-tensor invariants, raising on the first violation.

    Accepts either a ``PredictionTensor`` or a raw ``(M, N, C)`` array.
    Entries are checked against [0, 1] first, then row sums against 1
    within ``ROW_SUM_TOL``; each error names the first offending index in
    (model, sample) scan order.
    """
    probs = t.probs if isinstance(t, PredictionTensor) else np.asarray(t, dtype=np.float64)
    if probs.ndim != 3:
        raise ShapeMismatch(f"expected a 3-d (models, samples, classes) array, got ndim={probs.ndim}")
    num_models, num_samples, num_classes = probs.shape
    if num_models < 1 or num_samples < 1 or num_classes < 2:
        raise ShapeMismatch(
            f"need at least 1 model, 1 sample and 2 classes, got shape {probs.shape}"
        )
    if not np.all(np.isfinite(probs)):
        i, n, j = np.unravel_index(int(np.argmin(np.isfinite(probs))), probs.shape)
        raise OutOfRange(int(i), int(n), int(j), float(probs[i, n, j]))

    in_range = (probs >= 0.0) & (probs <= 1.0)
    if not in_range.all():
        i, n, j = np.unravel_index(int(np.argmin(in_range)), probs.shape)
        raise OutOfRange(int(i), int(n), int(j), float(probs[i, n, j]))

    sums = probs.sum(axis=2)
    normalized = np.abs(sums - 1.0) <= ROW_SUM_TOL
    if not normalized.all():
        i, n = np.unravel_index(int(np.argmin(normalized)), sums.shape)
        raise RowNotNormalized(int(i), int(n), float(sums[i, n]))


@dataclass(frozen=True)
class PredictionTensor:
    """Per-model, per-sample class-probability rows, shape (M, N, C).

    Rows are validated on construction and renormalized to sum exactly
    to 1 (input sums may deviate by at most ``ROW_SUM_TOL``).
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        validate_tensor(probs)
        probs = probs / probs.sum(axis=2, keepdims=True)
        object.__setattr__(self, "probs", _as_readonly(probs))

    @property
    def num_models(self) -> int:
        return self.probs.shape[0]

    @property
    def num_samples(self) -> int:
        return self.probs.shape[1]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]

    def subset(self, sample_indices) -> "PredictionTensor":
        """Tensor restricted to the given sample indices, in the given order."""
        idx = np.asarray(sample_indices, dtype=np.int64)
        return PredictionTensor(probs=self.probs[:, idx, :])


@dataclass(frozen=True)
class LabelVector:
    """Ground-truth class indices for N samples, each in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ShapeMismatch(f"labels must be 1-d, got ndim={labels.ndim}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.floor(labels)):
                raise ValidationError("labels must be integers")
            labels = labels.astype(np.int64)
        else:
            labels = labels.astype(np.int64)
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = int(np.argmax((labels < 0) | (labels >= self.num_classes)))
            raise ValidationError(
                f"label {int(labels[bad])} at sample {bad} outside [0, {self.num_classes})"
            )
        object.__setattr__(self, "labels", _as_readonly(labels))

    @property
    def num_samples(self) -> int:
        return self.labels.shape[0]

    def one_hot(self) -> np.ndarray:
        """Indicator matrix of shape (N, num_classes); rows sum to exactly 1."""
        out = np.zeros((self.num_samples, self.num_classes))
        out[np.arange(self.num_samples), self.labels] = 1.0
        return out

    def subset(self, sample_indices) -> "LabelVector":
        idx = np.asarray(sample_indices, dtype=np.int64)
        return LabelVector(labels=self.labels[idx], num_classes=self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/validation/test index sets over [0, N)."""

    train_indices: np.ndarray
    valid_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        for name in ("train_indices", "valid_indices", "test_indices"):
            idx = np.asarray(getattr(self, name), dtype=np.int64)
            if idx.ndim != 1:
                raise ShapeMismatch(f"{name} must be 1-d")
            if idx.size and idx.min() < 0:
                raise ValidationError(f"{name} contains a negative index")
            if idx.size != np.unique(idx).size:
                raise ValidationError(f"{name} contains duplicate indices")
            object.__setattr__(self, name, _as_readonly(idx))
        all_idx = np.concatenate([self.train_indices, self.valid_indices, self.test_indices])
        if all_idx.size != np.unique(all_idx).size:
            raise ValidationError("split index sets are not pairwise disjoint")

    def validate_against(self, num_samples: int) -> None:
        for name in ("train_indices", "valid_indices", "test_indices"):
            idx = getattr(self, name)
            if idx.size and idx.max() >= num_samples:
                raise ValidationError(
                    f"{name} contains index {int(idx.max())} >= num_samples {num_samples}"
                )


# A weight vector is a plain 1-d float array of length num_models; entries
# are sign-free unless simplex mode is requested downstream.
WeightVector = np.ndarray


def validate_weights(w, num_models: int) -> np.ndarray:
    """Coerce to a finite float64 vector of length num_models."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (num_models,):
        raise ShapeMismatch(f"weights have shape {w.shape}, expected ({num_models},)")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights contain non-finite entries")
    return w


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream from a 64-bit seed.

    The generator algorithm is fixed as part of the external contract:
    Philox 4x64 (counter based), keyed through numpy's SeedSequence.
    Identical seeds yield bitwise-identical streams across runs and
    platforms; the first draws for seed 42 are frozen in the repository's
    golden file.
    """
    return np.random.Generator(np.random.Philox(seed))
