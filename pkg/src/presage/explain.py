"""Local explanation of a black-box RUL prediction.

A perturbation neighborhood is generated around one window, a weighted
linear surrogate is fit to the model's outputs on it, and per-feature
importances are summarized two ways: averaging the per-step coefficients,
or distilling each feature to its first principal component and fitting
the surrogate in that J-dimensional space.  Fidelity and truthfulness
metrics quantify how much the surrogate can be trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Instance
from .mathcore import (
    DEFAULT_RIDGE_LAMBDA,
    LinearFit,
    Rng,
    first_principal_component,
    weighted_ridge_fit,
)

METHOD_MEAN = "mean_agg"
METHOD_IPCA = "ipca"

PredictFn = Callable[[np.ndarray], float]  # (J, N) window -> prediction


@dataclass
class NeighborConfig:
    noise_scale: float = 0.3  # gaussian sigma, in standardized units
    mask_probability: float = 0.3  # chance a feature gets a mean-filled sub-sequence


@dataclass
class Neighborhood:
    center: Instance
    neighbors: np.ndarray  # (count, J, N)
    distances: np.ndarray  # (count,)
    weights: np.ndarray  # (count,), in (0, 1]
    sigma: float

    @property
    def count(self) -> int:
        return self.neighbors.shape[0]


@dataclass
class Explanation:
    method: str
    ts: np.ndarray  # (J, N) per-step contributions
    s: np.ndarray  # (J,) per-feature importances
    surrogate: LinearFit
    local_prediction: float
    loadings: np.ndarray | None = None  # (J, N), ipca only
    pca_means: np.ndarray | None = None  # (J, N), ipca only
    degenerate: np.ndarray | None = None  # (J,) bool, ipca only


@dataclass
class MetricReport:
    fidelity_mae: float
    fidelity_r2: float  # nan when the model output has no variance
    truthfulness: float  # nan when every importance is zero
    probe_count: int


def generate_neighbors(
    instance: Instance,
    count: int,
    rng: Rng,
    config: NeighborConfig | None = None,
) -> Neighborhood:
    """Perturbed copies of a (standardized) window, kernel-weighted by distance.

    Independently per feature, a neighbor either has a random contiguous
    sub-sequence replaced by that feature's window mean (with the configured
    probability) or a single gaussian draw added to all of its steps.  The
    coherent shift keeps each feature's dominant variation aligned with its
    level, which is what the per-feature PCA reduction keys on; the masked
    sub-sequences provide step-level variation.  Kernel width is the median
    neighbor distance (1.0 when all distances vanish).
    """
    if count < 10:
        raise ValueError("neighborhood needs at least 10 neighbors")
    config = config or NeighborConfig()
    j, n = instance.values.shape
    stream = rng.child("neighbors")
    feature_means = instance.values.mean(axis=1)

    neighbors = np.repeat(instance.values[None, :, :], count, axis=0)
    for i in range(count):
        for f in range(j):
            if stream.uniform(0.0, 1.0) < config.mask_probability:
                start = int(stream.integers(0, n))
                length = int(stream.integers(1, n - start + 1))
                neighbors[i, f, start : start + length] = feature_means[f]
            elif config.noise_scale > 0.0:
                neighbors[i, f, :] += stream.normal(config.noise_scale)

    diffs = (neighbors - instance.values[None, :, :]).reshape(count, -1)
    distances = np.linalg.norm(diffs, axis=1)
    sigma = float(np.median(distances))
    if sigma <= 0.0:
        sigma = 1.0
    weights = np.exp(-(distances**2) / sigma**2)
    return Neighborhood(instance, neighbors, distances, weights, sigma)


def _predict_many(predict: PredictFn, windows: np.ndarray) -> np.ndarray:
    return np.array([predict(w) for w in windows])


def explain_mean(
    predict: PredictFn,
    neighborhood: Neighborhood,
    lam: float = DEFAULT_RIDGE_LAMBDA,
) -> Explanation:
    """Surrogate over the full J*N space; s[j] is the mean of feature j's steps."""
    j, n = neighborhood.center.values.shape
    X = neighborhood.neighbors.reshape(neighborhood.count, j * n)
    y = _predict_many(predict, neighborhood.neighbors)
    fit = weighted_ridge_fit(X, y, neighborhood.weights, lam)
    ts = fit.coefficients.reshape(j, n)
    center_flat = neighborhood.center.values.reshape(-1)
    return Explanation(
        method=METHOD_MEAN,
        ts=ts,
        s=ts.mean(axis=1),
        surrogate=fit,
        local_prediction=float(center_flat @ fit.coefficients + fit.intercept),
    )


def explain_ipca(
    predict: PredictFn,
    neighborhood: Neighborhood,
    lam: float = DEFAULT_RIDGE_LAMBDA,
    rng: Rng | None = None,
) -> Explanation:
    """Surrogate over per-feature first-principal-component scores.

    For each feature the center and neighbor step-vectors are reduced to a
    single score; the linear model fit on this J-dimensional representation
    yields importances that refer to features directly, and each feature's
    loading vector spreads its importance back over time steps.
    """
    if neighborhood.count < 2:
        raise ValueError("ipca needs at least 2 neighbors")
    rng = rng or Rng(0)
    j, n = neighborhood.center.values.shape
    count = neighborhood.count

    scores = np.zeros((count + 1, j))
    loadings = np.zeros((j, n))
    means = np.zeros((j, n))
    degenerate = np.zeros(j, dtype=bool)
    for f in range(j):
        stacked = np.vstack([neighborhood.center.values[f][None, :], neighborhood.neighbors[:, f, :]])
        pca = first_principal_component(stacked, rng.child("pca", f))
        loadings[f] = pca.loadings
        means[f] = pca.mean
        degenerate[f] = pca.degenerate
        scores[:, f] = pca.scores

    windows = np.concatenate([neighborhood.center.values[None, :, :], neighborhood.neighbors])
    y = _predict_many(predict, windows)
    weights = np.concatenate([[1.0], neighborhood.weights])  # center sits at distance 0
    fit = weighted_ridge_fit(scores, y, weights, lam)
    s = fit.coefficients
    return Explanation(
        method=METHOD_IPCA,
        ts=s[:, None] * loadings,
        s=s,
        surrogate=fit,
        local_prediction=float(scores[0] @ s + fit.intercept),
        loadings=loadings,
        pca_means=means,
        degenerate=degenerate,
    )


def surrogate_predict(explanation: Explanation, values: np.ndarray) -> float:
    """Evaluate the fitted surrogate on a bare (J, N) window."""
    if explanation.method == METHOD_MEAN:
        return float(values.reshape(-1) @ explanation.surrogate.coefficients + explanation.surrogate.intercept)
    scores = np.einsum("jn,jn->j", values - explanation.pca_means, explanation.loadings)
    return float(scores @ explanation.s + explanation.surrogate.intercept)


def evaluate_fidelity(
    predict: PredictFn,
    explanation: Explanation,
    neighborhood: Neighborhood,
) -> tuple[float, float]:
    """Weighted MAE and R^2 of the surrogate against the model on a neighborhood.

    R^2 is nan (flagged undefined) when the model output carries no variance.
    """
    sur = np.array([surrogate_predict(explanation, w) for w in neighborhood.neighbors])
    mod = _predict_many(predict, neighborhood.neighbors)
    w = neighborhood.weights
    wsum = w.sum()
    mae = float(np.abs(sur - mod) @ w / wsum)
    mod_mean = float(mod @ w / wsum)
    sst = float(((mod - mod_mean) ** 2) @ w)
    if sst <= 1e-20 * wsum * max(1.0, mod_mean**2):  # constant model output
        return mae, float("nan")
    sse = float(((mod - sur) ** 2) @ w)
    return mae, 1.0 - sse / sst


def evaluate_truthfulness(
    predict: PredictFn,
    instance: Instance,
    explanation: Explanation,
    delta: float = 0.5,
) -> tuple[float, int]:
    """Fraction of nonzero-importance features whose sign survives probing.

    Each tested feature is shifted up and down by `delta` across the whole
    window; the importance is truthful when the model moves with the shift
    in the direction the sign claims, both ways.  Returns (score, probes);
    the score is nan when no feature has nonzero importance.
    """
    if delta <= 0.0:
        raise ValueError("probe delta must be positive")
    base = predict(instance.values)
    tested = 0
    truthful = 0
    for f, s_j in enumerate(explanation.s):
        if s_j == 0.0:
            continue
        tested += 1
        up = instance.values.copy()
        up[f, :] += delta
        down = instance.values.copy()
        down[f, :] -= delta
        sign = math.copysign(1.0, s_j)
        if np.sign(predict(up) - base) == sign and np.sign(predict(down) - base) == -sign:
            truthful += 1
    if tested == 0:
        return float("nan"), 0
    return truthful / tested, 2 * tested


def explanation_to_json(explanation: Explanation) -> dict:
    """The documented wire shape for explanations."""
    return {
        "method": explanation.method,
        "s": explanation.s.tolist(),
        "ts": explanation.ts.tolist(),
        "loadings": explanation.loadings.tolist() if explanation.loadings is not None else None,
        "local_prediction": explanation.local_prediction,
        "degenerate": explanation.degenerate.tolist() if explanation.degenerate is not None else [False] * len(explanation.s),
    }
