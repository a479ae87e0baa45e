"""Synthetic datasets with known structure for tests and demos.

Two generators:

* ``make_planted_dataset`` plants a few strongly class-separated features
  among pure-noise ones.  Its Bayes accuracy has a closed form, and a
  sparse layer trained on it should migrate its mask onto the planted
  features' one-hot components.

* ``make_surrogate_collisions`` builds a label + 28-feature table shaped
  like the collision-event CSV but with controllable difficulty.  Samples
  come from a mixture of cluster prototypes built in +/- quadruples whose
  twin prototypes share per-feature magnitudes, so every single feature's
  class-conditional distribution is identical for both classes: class
  information lives only in cross-feature sign correlations.  A model
  that sees a small fraction of the features therefore performs at
  chance, while wide receptive fields approach the ceiling set by the
  cluster class purity (0.5 + delta).
"""

from __future__ import annotations

import math

import numpy as np


def make_planted_dataset(
    n_samples: int,
    n_features: int = 28,
    n_informative: int = 2,
    mu: float = 1.0,
    sigma: float = 0.5,
    seed: int = 0,
):
    """Gaussian noise features plus class-shifted informative ones.

    Informative columns are the first ``n_informative``; they are
    N(+/-mu, sigma^2) depending on the class, everything else is N(0, 1)
    independent of the class.  Returns (features, labels).
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n_samples).astype(np.uint8)
    x = rng.standard_normal((n_samples, n_features))
    signs = 2.0 * y - 1.0
    for f in range(n_informative):
        x[:, f] = signs * mu + sigma * rng.standard_normal(n_samples)
    return x, y


def planted_bayes_accuracy(mu: float, sigma: float, n_informative: int = 2) -> float:
    """Exact Bayes accuracy of the planted dataset.

    The optimal rule thresholds the sum of the informative columns at 0,
    giving ``Phi(sqrt(k) * mu / sigma)``.
    """
    z = math.sqrt(n_informative) * mu / sigma
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def informative_components(n_informative: int, n_bins: int) -> np.ndarray:
    """Encoded component indices covered by the informative feature blocks."""
    return np.arange(n_informative * n_bins)


def make_surrogate_collisions(
    n_samples: int,
    n_features: int = 28,
    n_groups: int = 32,
    delta: float = 0.22,
    sigma: float = 1.5,
    seed: int = 0,
):
    """Cluster-mixture binary classification table; see module docstring.

    Each of ``n_groups`` groups contributes four cluster prototypes:
    ``+m``, ``-m`` (class-1 probability 0.5 + delta) and ``+m*e``,
    ``-m*e`` for a random sign pattern ``e`` (class-1 probability
    0.5 - delta).  Because ``|m*e| == |m|`` per feature, single-feature
    marginals are exactly class-symmetric.  Returns ``(x, y, info)``
    where ``info`` carries the prototypes, per-cluster class
    probabilities, cluster assignments and the accuracy ceiling.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must be in (0, 0.5), got {delta}")
    rng = np.random.default_rng(seed)

    base = rng.standard_normal((n_groups, n_features))
    flips = rng.integers(0, 2, size=(n_groups, n_features)) * 2 - 1
    # A uniform sign pattern would make the twin pair indistinguishable
    # from (or identical to) the base pair; reroll those rows.
    degenerate = np.abs(flips.sum(axis=1)) == n_features
    while degenerate.any():
        flips[degenerate] = rng.integers(0, 2, size=(int(degenerate.sum()), n_features)) * 2 - 1
        degenerate = np.abs(flips.sum(axis=1)) == n_features

    prototypes = np.concatenate([base, -base, base * flips, -base * flips], axis=0)
    p_signal = np.concatenate(
        [
            np.full(2 * n_groups, 0.5 + delta),
            np.full(2 * n_groups, 0.5 - delta),
        ]
    )

    n_clusters = prototypes.shape[0]
    assign = rng.integers(0, n_clusters, size=n_samples)
    x = prototypes[assign] + sigma * rng.standard_normal((n_samples, n_features))
    y = (rng.random(n_samples) < p_signal[assign]).astype(np.uint8)
    info = {
        "prototypes": prototypes,
        "p_signal": p_signal,
        "assignments": assign,
        "sigma": sigma,
        "ceiling": 0.5 + delta,
    }
    return x, y, info


def surrogate_bayes_accuracy(x: np.ndarray, y: np.ndarray, info: dict) -> float:
    """Accuracy of the exact posterior rule under the true generative model."""
    proto = info["prototypes"]
    sigma = info["sigma"]
    p_sig = info["p_signal"]
    acc = 0
    chunk = 4096
    for start in range(0, len(x), chunk):
        xa = x[start : start + chunk]
        d2 = ((xa[:, None, :] - proto[None, :, :]) ** 2).sum(axis=2)
        logp = -d2 / (2.0 * sigma * sigma)
        logp -= logp.max(axis=1, keepdims=True)
        w = np.exp(logp)
        w /= w.sum(axis=1, keepdims=True)
        post = w @ p_sig
        acc += int(np.sum((post > 0.5).astype(np.uint8) == y[start : start + chunk]))
    return acc / len(x)


def write_collision_csv(path, x: np.ndarray, y: np.ndarray) -> None:
    """Write rows in the ingestion layout: label first, then the features."""
    rows = np.column_stack([y.astype(np.float64), x])
    with open(path, "w") as fh:
        np.savetxt(fh, rows, fmt="%.8g", delimiter=",")
