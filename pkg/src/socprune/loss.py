"""Ensemble loss: quadratic accuracy term, entropy diversity term, and the
convex quadratic surrogate used by the cone-program builder.

The loss of a weighted ensemble splits into an accuracy part (mean squared
deviation of the mixed prediction from the one-hot truth, averaged over
classes and samples) and a diversity part built from the per-class Jensen
gap of the scalar entropy function ``-z ln z``.  The accuracy part is an
exact quadratic form in the weights; the diversity part is concave-induced
and is linearized at an anchor to obtain the surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelVector, PredictionTensor
from .errors import DomainError, ShapeMismatch

ENTROPY_DOMAIN_SLACK = 1e-12
MIX_DOMAIN_SLACK = 1e-9
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LossValue:
    """Total loss together with its accuracy/diversity decomposition.

    Satisfies ``total == alpha * accuracy_term + (1 - alpha) * diversity_term``
    to 1e-12 by construction.
    """

    total: float
    accuracy_term: float
    diversity_term: float
    alpha: float

    @classmethod
    def combine(cls, accuracy_term: float, diversity_term: float, alpha: float) -> "LossValue":
        total = alpha * accuracy_term + (1.0 - alpha) * diversity_term
        return cls(total=total, accuracy_term=accuracy_term,
                   diversity_term=diversity_term, alpha=alpha)


@dataclass(frozen=True)
class QuadraticSurrogate:
    """Convex quadratic model of the ensemble loss in the weight variable.

    ``quad`` is the exact (ridge-free) accuracy quadratic; ``ridge`` records
    the diagonal shift applied wherever the matrix is factorized, so that
    ``quad + ridge * I`` is positive definite.  ``lin_accuracy`` is the linear
    part of the accuracy term, ``lin_diversity`` the gradient of the exact
    diversity term at the linearization anchor, and ``constant`` the
    weight-independent accuracy offset.
    """

    quad: np.ndarray
    lin_accuracy: np.ndarray
    lin_diversity: np.ndarray
    constant: float
    ridge: float

    def __post_init__(self):
        quad = np.asarray(self.quad, dtype=np.float64)
        if quad.ndim != 2 or quad.shape[0] != quad.shape[1]:
            raise ShapeMismatch(f"quadratic matrix must be square, got {quad.shape}")
        if np.abs(quad - quad.T).max(initial=0.0) > 1e-12:
            raise DomainError("quadratic matrix is not symmetric to 1e-12")
        if self.ridge < 0:
            raise DomainError("ridge must be nonnegative")

    @property
    def num_models(self) -> int:
        return self.quad.shape[0]

    def combined_linear(self, alpha: float) -> np.ndarray:
        """Linear objective coefficient on the weights at trade-off ``alpha``."""
        return alpha * self.lin_accuracy + (1.0 - alpha) * self.lin_diversity


def entropy_term(z):
    """Scalar entropy kernel ``-z ln z`` on [0, 1], continuously extended to 0 at z=0.

    Accepts scalars or arrays; raises ``DomainError`` for arguments outside
    [0, 1] beyond a 1e-12 slack.
    """
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr < -ENTROPY_DOMAIN_SLACK) or np.any(arr > 1.0 + ENTROPY_DOMAIN_SLACK):
        raise DomainError(
            f"entropy argument outside [0, 1]: range [{arr.min()}, {arr.max()}]"
        )
    clipped = np.clip(arr, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(clipped > 0.0, -clipped * np.log(clipped), 0.0)
    if np.isscalar(z) or arr.ndim == 0:
        return float(out)
    return out


def distribution_entropy(p) -> float:
    """Shannon entropy (natural log) of a probability row; result in [0, ln C]."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise DomainError(f"expected a 1-d probability row, got ndim={p.ndim}")
    if abs(p.sum() - 1.0) > MIX_DOMAIN_SLACK:
        raise DomainError(f"probability row sums to {p.sum()!r}, not 1")
    return float(np.sum(entropy_term(p)))


def ensemble_prediction(w, t: PredictionTensor, n: int) -> np.ndarray:
    """Weighted mixture row ``sum_i w_i * probs[i, n, :]`` (no renormalization)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (t.num_models,):
        raise ShapeMismatch(
            f"weights have shape {w.shape}, expected ({t.num_models},)"
        )
    return w @ t.probs[:, n, :]


def _mixture(w: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """All mixture rows at once: (N, C) array of sum_i w_i probs[i]."""
    return np.einsum("i,inj->nj", w, probs)


def exact_loss(w, t: PredictionTensor, y: LabelVector, alpha: float) -> LossValue:
    """Exact ensemble loss at weights ``w``, averaged over samples.

    The mixed prediction must stay inside [0, 1] per class (guaranteed for
    simplex weights); mixtures outside by more than 1e-9 raise
    ``DomainError`` rather than being clamped.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (t.num_models,):
        raise ShapeMismatch(f"weights have shape {w.shape}, expected ({t.num_models},)")
    if y.num_samples != t.num_samples or y.num_classes != t.num_classes:
        raise ShapeMismatch("labels do not match the prediction tensor")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")

    probs = t.probs
    num_classes = t.num_classes
    mix = _mixture(w, probs)
    if mix.min(initial=0.0) < -MIX_DOMAIN_SLACK or mix.max(initial=1.0) > 1.0 + MIX_DOMAIN_SLACK:
        raise DomainError(
            "mixed prediction leaves [0, 1]; entropy undefined for these weights"
        )
    mix = np.clip(mix, 0.0, 1.0)

    one_hot = y.one_hot()
    accuracy = float(np.mean(np.sum((mix - one_hot) ** 2, axis=1)) / num_classes)

    mixture_entropy = np.sum(entropy_term(mix), axis=1)
    member_entropy = np.einsum("i,in->n", w, np.sum(entropy_term(probs), axis=2))
    jensen_gap = (mixture_entropy - member_entropy) / num_classes
    diversity = float(np.mean(1.0 - jensen_gap))

    return LossValue.combine(accuracy, diversity, alpha)


def build_surrogate(
    t: PredictionTensor,
    y: LabelVector,
    anchor=None,
    ridge: float | None = None,
) -> QuadraticSurrogate:
    """Quadratic surrogate of the ensemble loss around ``anchor``.

    The accuracy term is represented exactly:
    ``w @ quad @ w + lin_accuracy @ w + constant`` reproduces the exact
    accuracy term for any ``w`` (with the recorded ``ridge`` excluded).
    The diversity term is replaced by its first-order expansion at the
    anchor (default: uniform weights); the anchor-value offset is dropped
    since it does not move the argmin.  The anchor mixture is clamped below
    at 1e-12 inside the logarithm to tolerate one-hot member rows.

    ``ridge`` defaults to ``1e-8 * trace(quad) / M`` and is recorded for
    the Cholesky factorization performed by the cone-program builder.
    """
    if y.num_samples != t.num_samples or y.num_classes != t.num_classes:
        raise ShapeMismatch("labels do not match the prediction tensor")
    num_models = t.num_models
    if anchor is None:
        anchor = np.full(num_models, 1.0 / num_models)
    else:
        anchor = np.asarray(anchor, dtype=np.float64)
        if anchor.shape != (num_models,):
            raise ShapeMismatch(f"anchor has shape {anchor.shape}, expected ({num_models},)")
        if abs(anchor.sum() - 1.0) > 1e-8:
            raise DomainError(f"anchor must have unit sum, got {anchor.sum()!r}")

    probs = t.probs
    scale = 1.0 / (t.num_samples * t.num_classes)

    quad = np.einsum("inj,knj->ik", probs, probs) * scale
    quad = 0.5 * (quad + quad.T)

    one_hot = y.one_hot()
    lin_accuracy = -2.0 * scale * np.einsum("nj,inj->i", one_hot, probs)
    constant = float(np.sum(one_hot**2) * scale)

    anchor_mix = _mixture(anchor, probs)
    log_mix = np.log(np.clip(anchor_mix, LOG_CLAMP, None))
    lin_diversity = scale * (
        np.einsum("nj,inj->i", log_mix + 1.0, probs)
        + np.sum(entropy_term(probs), axis=(1, 2))
    )

    if ridge is None:
        ridge = 1e-8 * float(np.trace(quad)) / num_models
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")

    return QuadraticSurrogate(
        quad=quad,
        lin_accuracy=lin_accuracy,
        lin_diversity=lin_diversity,
        constant=constant,
        ridge=float(ridge),
    )
