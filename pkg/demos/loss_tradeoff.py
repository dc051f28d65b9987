"""Show how the trade-off weight moves the loss between its two terms.

Generates a small synthetic ensemble and evaluates the exact loss of
uniform weights over a sweep of alpha values.  The accuracy and
diversity terms are fixed properties of the ensemble; alpha only blends
them, which is why the columns below are constant and the total is an
affine function of alpha.
"""

import numpy as np

from socprune import SyntheticSpec, exact_loss, generate_synthetic_ensemble


def main():
    spec = SyntheticSpec(
        num_models=8, num_samples=400, num_classes=4,
        base_accuracy_range=(0.55, 0.85), correlation=0.3,
        sharpness=5.0, seed=7)
    t, y, _ = generate_synthetic_ensemble(spec)
    w = np.full(t.num_models, 1.0 / t.num_models)

    print(f"ensemble: {t.num_models} models, {t.num_samples} samples, "
          f"{t.num_classes} classes, uniform weights")
    print(f"{'alpha':>6}  {'total':>9}  {'accuracy':>9}  {'diversity':>9}")
    for alpha in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0):
        value = exact_loss(w, t, y, alpha)
        print(f"{alpha:6.2f}  {value.total:9.5f}  {value.accuracy_term:9.5f}"
              f"  {value.diversity_term:9.5f}")

    # dropping the least accurate half of the members changes both terms
    preds = np.argmax(t.probs, axis=2)
    accs = (preds == y.labels).mean(axis=1)
    best = np.argsort(accs)[4:]
    from socprune import PredictionTensor
    sub = PredictionTensor(probs=t.probs[np.sort(best)])
    w_sub = np.full(4, 0.25)
    print("\nbest four members only:")
    for alpha in (0.0, 0.5, 1.0):
        value = exact_loss(w_sub, sub, y, alpha)
        print(f"{alpha:6.2f}  {value.total:9.5f}  {value.accuracy_term:9.5f}"
              f"  {value.diversity_term:9.5f}")


if __name__ == "__main__":
    main()
