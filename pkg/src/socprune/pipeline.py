"""End-to-end ensemble pruning: generate or ingest predictions, tune the
accuracy/sparsity grid on the validation split, solve the cone program,
threshold the weights, and vote.

Also provides the exhaustive subset oracle used to sanity-check the convex
relaxation at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special

from .conic import build_pruning_socp
from .core import (
    LabelVector,
    PredictionTensor,
    SplitSpec,
    seeded_rng,
    validate_weights,
)
from .errors import (
    AllCellsFailed,
    DomainError,
    EmptyEnsemble,
    FitFailed,
    InvalidSpec,
    ShapeMismatch,
    TooLarge,
)
from .loss import build_surrogate, entropy_term, exact_loss
from .solver import STATUS_OPTIMAL, SolverSettings, solve

VOTE_MAJORITY = "majority"
VOTE_WEIGHTED = "weighted"

_DEFAULT_ALPHA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
_DEFAULT_LAMBDA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
_AUTO = "auto"
_ORACLE_LIMIT = 14


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic prediction tensor with controllable quality.

    Each model i is assigned a target top-1 accuracy drawn uniformly from
    ``base_accuracy_range``; per-sample correctness events share a latent
    Gaussian factor weighted by ``correlation``, so models make correlated
    mistakes.  ``sharpness`` is the extra Dirichlet concentration placed on
    the predicted class.
    """

    num_models: int
    num_samples: int
    num_classes: int
    base_accuracy_range: tuple = (0.55, 0.9)
    correlation: float = 0.3
    sharpness: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.num_models < 2:
            raise InvalidSpec("need at least 2 models")
        if self.num_samples < 5:
            raise InvalidSpec("need at least 5 samples to split")
        if self.num_classes < 2:
            raise InvalidSpec("need at least 2 classes")
        low, high = self.base_accuracy_range
        chance = 1.0 / self.num_classes
        if not (chance < low <= high < 1.0):
            raise InvalidSpec(
                f"base_accuracy_range must lie inside ({chance:.4g}, 1), got "
                f"({low}, {high})"
            )
        if not 0.0 <= self.correlation < 1.0:
            raise InvalidSpec("correlation must lie in [0, 1)")
        if self.sharpness <= 0:
            raise InvalidSpec("sharpness must be positive")


@dataclass(frozen=True)
class PruneConfig:
    """Grid, thresholding, and reporting options for the pruning run."""

    alpha_grid: tuple = _DEFAULT_ALPHA_GRID
    lambda_grid: tuple = _DEFAULT_LAMBDA_GRID
    threshold: float | str = _AUTO
    anchor: object = "uniform"
    seed: int = 0
    simplex_mode: bool = False
    vote_mode: str = VOTE_MAJORITY
    ridge: float | None = None
    solver: SolverSettings | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))
        if not self.alpha_grid or not self.lambda_grid:
            raise DomainError("alpha and lambda grids must be non-empty")
        if min(self.alpha_grid) < 0 or max(self.alpha_grid) > 1:
            raise DomainError("alpha grid values must lie in [0, 1]")
        if min(self.lambda_grid) < 0:
            raise DomainError("lambda grid values must be nonnegative")
        if self.threshold != _AUTO:
            h = float(self.threshold)
            if not h >= 0:
                raise DomainError("threshold must be nonnegative or 'auto'")
            object.__setattr__(self, "threshold", h)
        if self.vote_mode not in (VOTE_MAJORITY, VOTE_WEIGHTED):
            raise DomainError(f"unknown vote mode {self.vote_mode!r}")


@dataclass(frozen=True)
class CellDiagnostic:
    """Outcome of one (alpha, lambda) grid cell on the validation split.

    Failed cells carry -1.0 for threshold and accuracy (keeps reports
    JSON-clean and equality-comparable, unlike NaN).
    """

    alpha: float
    lam: float
    threshold: float
    accuracy: float
    num_pruned: int
    status: str


@dataclass(frozen=True, eq=False)
class PruneReport:
    """Everything a pruning run decided and measured.

    Accuracies are computed on the test split only; ``cells`` records the
    grid search as it was seen on the validation split.
    """

    best_alpha: float
    best_lambda: float
    threshold_used: float
    weights: np.ndarray
    selected: tuple
    full_accuracy: float
    pruned_accuracy: float
    num_models_full: int
    num_models_pruned: int
    cells: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))
        if self.num_models_pruned != len(self.selected):
            raise DomainError("pruned model count must match the selected list")
        if self.num_models_pruned > self.num_models_full:
            raise DomainError("pruned ensemble cannot exceed the full ensemble")

    def __eq__(self, other):
        if not isinstance(other, PruneReport):
            return NotImplemented
        return (
            self.best_alpha == other.best_alpha
            and self.best_lambda == other.best_lambda
            and self.threshold_used == other.threshold_used
            and np.array_equal(self.weights, other.weights)
            and self.selected == other.selected
            and self.full_accuracy == other.full_accuracy
            and self.pruned_accuracy == other.pruned_accuracy
            and self.num_models_full == other.num_models_full
            and self.num_models_pruned == other.num_models_pruned
            and self.cells == other.cells
        )


def generate_synthetic_ensemble(spec: SyntheticSpec):
    """Draw (PredictionTensor, LabelVector, SplitSpec) from the spec.

    Draw order (one Philox stream from ``spec.seed``): labels, per-model
    target accuracies, shared per-sample factor, shared wrong-class offsets,
    then per model: idiosyncratic factor, wrong-class coin, own wrong-class
    offsets, Dirichlet rows; finally the split permutation.  The predicted
    class of each row is forced to the intended one by swapping, so model
    i's empirical accuracy is an unbiased estimate of its target.
    """
    if not isinstance(spec, SyntheticSpec):
        raise InvalidSpec("generate_synthetic_ensemble expects a SyntheticSpec")
    rng = seeded_rng(spec.seed)
    m, n, num_c = spec.num_models, spec.num_samples, spec.num_classes

    labels = rng.integers(0, num_c, size=n)
    low, high = spec.base_accuracy_range
    target_acc = rng.uniform(low, high, size=m)
    shared = rng.normal(size=n)
    shared_off = rng.integers(1, num_c, size=n)

    rho = spec.correlation
    w_shared = np.sqrt(rho)
    w_own = np.sqrt(1.0 - rho)
    cut = scipy.special.ndtri(target_acc)

    probs = np.empty((m, n, num_c))
    rows = np.arange(n)
    for i in range(m):
        own = rng.normal(size=n)
        correct = w_shared * shared + w_own * own < cut[i]
        use_shared = rng.random(size=n) < rho
        own_off = rng.integers(1, num_c, size=n)
        offset = np.where(use_shared, shared_off, own_off)
        top = np.where(correct, labels, (labels + offset) % num_c)
        conc = np.ones((n, num_c))
        conc[rows, top] += spec.sharpness
        draw = rng.standard_gamma(conc)
        draw /= draw.sum(axis=1, keepdims=True)
        am = draw.argmax(axis=1)
        fix = np.nonzero(am != top)[0]
        if fix.size:
            hi = draw[fix, am[fix]].copy()
            lo = draw[fix, top[fix]].copy()
            draw[fix, top[fix]] = hi
            draw[fix, am[fix]] = lo
        probs[i] = draw

    perm = rng.permutation(n)
    n_train = int(0.6 * n)
    n_valid = int(0.2 * n)
    splits = SplitSpec(
        train_indices=perm[:n_train],
        valid_indices=perm[n_train:n_train + n_valid],
        test_indices=perm[n_train + n_valid:],
    )
    tensor = PredictionTensor(probs=probs)
    return tensor, LabelVector(labels=labels, num_classes=num_c), splits


def _fit_from_surrogate(surrogate, alpha, lam, simplex, settings):
    program, vmap = build_pruning_socp(surrogate, alpha, lam, simplex=simplex)
    sol = solve(program, settings)
    if sol.status != STATUS_OPTIMAL:
        raise FitFailed(sol.status)
    return sol.x[np.asarray(vmap.x_indices)]


def fit_weights(t, y, alpha, lam, anchor=None, ridge=None, *,
                simplex=False, settings=None):
    """Solve the pruning program on the given data and return the weights.

    Raises FitFailed when the solver does not reach status optimal.
    """
    surrogate = build_surrogate(t, y, anchor=anchor, ridge=ridge)
    return _fit_from_surrogate(surrogate, alpha, lam, simplex, settings)


def prune_by_threshold(w, h):
    """Indices with |w_i| >= h, ascending; never empty (argmax fallback)."""
    if not h >= 0:
        raise DomainError("threshold must be nonnegative")
    w = np.asarray(w, dtype=np.float64)
    keep = np.nonzero(np.abs(w) >= h)[0]
    if keep.size == 0:
        keep = np.array([int(np.argmax(np.abs(w)))])
    return [int(i) for i in keep]


def vote(t: PredictionTensor, members, mode=VOTE_MAJORITY, weights=None):
    """Aggregate member predictions into per-sample labels.

    majority: each member casts its argmax class and the most voted class
    wins.  weighted: argmax of the weighted probability sum; ``weights`` is
    indexed over the full model set.  Ties break toward the lowest class.
    """
    members = [int(i) for i in members]
    if not members:
        raise EmptyEnsemble("vote requires at least one member")
    if min(members) < 0 or max(members) >= t.num_models:
        raise ShapeMismatch("member index outside the model range")
    if mode == VOTE_MAJORITY:
        casts = t.probs[members].argmax(axis=2)
        counts = np.zeros((t.num_samples, t.num_classes), dtype=np.int64)
        rows = np.arange(t.num_samples)
        for row in casts:
            counts[rows, row] += 1
        return counts.argmax(axis=1)
    if mode == VOTE_WEIGHTED:
        if weights is None:
            raise DomainError("weighted vote requires weights")
        w = validate_weights(weights, t.num_models)
        scores = np.tensordot(w[members], t.probs[members], axes=(0, 0))
        return scores.argmax(axis=1)
    raise DomainError(f"unknown vote mode {mode!r}")


def accuracy(predicted, y) -> float:
    """Fraction of exact label matches."""
    pred = np.asarray(predicted)
    truth = y.labels if isinstance(y, LabelVector) else np.asarray(y)
    if pred.shape != truth.shape:
        raise ShapeMismatch(
            f"predictions have shape {pred.shape}, labels {truth.shape}"
        )
    if pred.size == 0:
        raise ShapeMismatch("cannot score zero samples")
    return float(np.mean(pred == truth))


def auto_threshold(w, t, y, valid_split, candidates=None, *,
                   vote_mode=VOTE_MAJORITY):
    """Pick the |w| cutoff maximizing voting accuracy on the validation split.

    Default candidates are 20 quantiles of |w|.  Ties break toward the
    larger threshold, i.e. the smaller ensemble.
    """
    w = np.asarray(w, dtype=np.float64)
    if candidates is None:
        candidates = np.quantile(np.abs(w), np.linspace(0.0, 1.0, 20))
    candidates = np.unique(np.asarray(candidates, dtype=np.float64))
    if candidates.size == 0:
        raise DomainError("candidate list must be non-empty")
    if candidates[0] < 0:
        raise DomainError("thresholds must be nonnegative")
    tv = t.subset(valid_split)
    yv = y.subset(valid_split)
    best_h = None
    best_acc = -1.0
    for h in candidates:
        members = prune_by_threshold(w, float(h))
        acc = accuracy(vote(tv, members, mode=vote_mode, weights=w), yv)
        if acc >= best_acc:
            best_acc = acc
            best_h = float(h)
    return best_h


def _run_grid(surrogate, t, y, splits, config):
    """Shared grid search; returns (best_alpha, best_lambda, cells)."""
    tv = t.subset(splits.valid_indices)
    yv = y.subset(splits.valid_indices)
    cells = []
    best_key = None
    best_cell = None
    for ai, alpha in enumerate(config.alpha_grid):
        for li, lam in enumerate(config.lambda_grid):
            try:
                w = _fit_from_surrogate(
                    surrogate, alpha, lam, config.simplex_mode, config.solver
                )
            except FitFailed as exc:
                cells.append(CellDiagnostic(
                    alpha=alpha, lam=lam, threshold=-1.0,
                    accuracy=-1.0, num_pruned=0,
                    status=f"failed: {exc.status}",
                ))
                continue
            if config.threshold == _AUTO:
                h = auto_threshold(w, t, y, splits.valid_indices,
                                   vote_mode=config.vote_mode)
            else:
                h = float(config.threshold)
            members = prune_by_threshold(w, h)
            acc = accuracy(
                vote(tv, members, mode=config.vote_mode, weights=w), yv
            )
            cells.append(CellDiagnostic(
                alpha=alpha, lam=lam, threshold=h, accuracy=acc,
                num_pruned=len(members), status="ok",
            ))
            key = (-acc, len(members), li, ai)
            if best_key is None or key < best_key:
                best_key = key
                best_cell = (alpha, lam)
    if best_cell is None:
        raise AllCellsFailed("every grid cell failed to fit")
    return best_cell[0], best_cell[1], tuple(cells)


def cross_validate(t, y, splits, config: PruneConfig):
    """Grid-search (alpha, lambda) by validation accuracy.

    Fits on the train split, thresholds and votes on the validation split;
    ties prefer fewer kept models, then the smaller lambda index, then the
    smaller alpha index.
    """
    splits.validate_against(t.num_samples)
    anchor = None if _is_uniform_anchor(config.anchor) else config.anchor
    surrogate = build_surrogate(
        t.subset(splits.train_indices), y.subset(splits.train_indices),
        anchor=anchor, ridge=config.ridge,
    )
    return _run_grid(surrogate, t, y, splits, config)


def _is_uniform_anchor(anchor) -> bool:
    return isinstance(anchor, str) and anchor == "uniform"


def brute_force_subset_oracle(t, y, alpha, max_m: int = _ORACLE_LIMIT):
    """Exhaustive minimum of the exact loss over uniform-weight subsets.

    Returns (subset index list, loss).  Ties go to the lexicographically
    smallest subset.  Guarded by max_m (hard cap 14): the enumeration is
    2^M - 1 subsets.
    """
    m = t.num_models
    limit = min(int(max_m), _ORACLE_LIMIT)
    if m > limit:
        raise TooLarge(f"{m} models exceed the enumeration limit {limit}")
    n, num_c = t.num_samples, t.num_classes
    flat = t.probs.reshape(m, n * num_c)
    ent_flat = entropy_term(t.probs).reshape(m, n * num_c).sum(axis=1)
    one_hot = y.one_hot().ravel()
    scale = 1.0 / (n * num_c)

    total = (1 << m) - 1
    masks = np.arange(1, total + 1, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(m, dtype=np.uint32)) & 1).astype(np.float64)
    sizes = bits.sum(axis=1)

    best_loss = np.inf
    best_subset = None
    chunk = max(1, (1 << 22) // (n * num_c))
    for start in range(0, total, chunk):
        sel = bits[start:start + chunk]
        sz = sizes[start:start + chunk][:, None]
        mix = (sel @ flat) / sz
        acc = ((mix - one_hot) ** 2).sum(axis=1) * scale
        jensen = entropy_term(mix).sum(axis=1) - (sel @ ent_flat) / sz[:, 0]
        losses = alpha * acc + (1.0 - alpha) * (1.0 - jensen * scale)
        chunk_min = float(losses.min())
        if chunk_min > best_loss:
            continue
        tied = np.nonzero(losses == chunk_min)[0]
        candidate = min(
            tuple(int(i) for i in np.nonzero(sel[j])[0]) for j in tied
        )
        if chunk_min < best_loss or candidate < best_subset:
            best_loss = chunk_min
            best_subset = candidate

    # report the winner's value through the reference evaluator so the
    # returned number is bitwise the same thing callers would compute
    uniform = np.full(len(best_subset), 1.0 / len(best_subset))
    members = PredictionTensor(probs=t.probs[list(best_subset)])
    value = exact_loss(uniform, members, y, alpha).total
    return list(best_subset), float(value)


def run_pipeline(source, config: PruneConfig | None = None) -> PruneReport:
    """Full pruning run: tune, fit, threshold, vote, report.

    ``source`` is either a SyntheticSpec or a (tensor, labels, splits)
    triple.  Accuracies in the report come from the test split only.
    """
    if config is None:
        config = PruneConfig()
    if isinstance(source, SyntheticSpec):
        t, y, splits = generate_synthetic_ensemble(source)
    else:
        t, y, splits = source
    splits.validate_against(t.num_samples)

    anchor = None if _is_uniform_anchor(config.anchor) else config.anchor
    surrogate = build_surrogate(
        t.subset(splits.train_indices), y.subset(splits.train_indices),
        anchor=anchor, ridge=config.ridge,
    )
    best_alpha, best_lambda, cells = _run_grid(surrogate, t, y, splits, config)
    w = _fit_from_surrogate(
        surrogate, best_alpha, best_lambda, config.simplex_mode, config.solver
    )
    if config.threshold == _AUTO:
        h = auto_threshold(w, t, y, splits.valid_indices,
                           vote_mode=config.vote_mode)
    else:
        h = float(config.threshold)
    selected = prune_by_threshold(w, h)

    tt = t.subset(splits.test_indices)
    yt = y.subset(splits.test_indices)
    full_members = list(range(t.num_models))
    full_acc = accuracy(
        vote(tt, full_members, mode=config.vote_mode, weights=w), yt
    )
    pruned_acc = accuracy(
        vote(tt, selected, mode=config.vote_mode, weights=w), yt
    )
    return PruneReport(
        best_alpha=best_alpha,
        best_lambda=best_lambda,
        threshold_used=h,
        weights=w,
        selected=tuple(selected),
        full_accuracy=full_acc,
        pruned_accuracy=pruned_acc,
        num_models_full=t.num_models,
        num_models_pruned=len(selected),
        cells=cells,
    )
