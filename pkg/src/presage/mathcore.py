"""Deterministic numerical primitives: standardization, dominant principal
component via power iteration, weighted ridge regression, seeded RNG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1

POWER_ITER_TOL = 1e-10
POWER_ITER_MAX = 1000
ZERO_STD = 1e-12
DEFAULT_RIDGE_LAMBDA = 1e-3


class DimensionMismatchError(ValueError):
    """Shapes of two related arrays disagree."""


class SingularSystemError(ValueError):
    """Normal equations are singular; carries the failing pivot index."""

    def __init__(self, pivot_index: int):
        super().__init__(f"singular system: zero pivot at index {pivot_index}")
        self.pivot_index = pivot_index


def check_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D numeric array: at least 1x1, all entries finite."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


class Rng:
    """Seeded random stream backed by the Philox counter-based generator.

    Identical seeds produce identical streams on every platform.  Instances
    are not thread-safe; derive independent children with :meth:`child`.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, *tags) -> "Rng":
        """Deterministically derive an independent stream keyed by `tags`."""
        x = self.seed
        for tag in tags:
            x = _splitmix64(x ^ _fnv1a(repr(tag).encode()))
        return Rng(x)

    def normal(self, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Draw integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def unit_vector(self, dim: int) -> np.ndarray:
        v = self._gen.normal(0.0, 1.0, dim)
        norm = np.linalg.norm(v)
        while norm < ZERO_STD:
            v = self._gen.normal(0.0, 1.0, dim)
            norm = np.linalg.norm(v)
        return v / norm


@dataclass
class ColumnStats:
    """Per-column standardization statistics (population convention)."""

    mean: np.ndarray
    std: np.ndarray  # 1.0 for constant columns; see `constant`
    constant: np.ndarray  # bool per column


@dataclass
class PcaResult:
    loadings: np.ndarray  # unit-norm direction, length D
    scores: np.ndarray  # projection of each centered row, length M
    explained_variance: float
    mean: np.ndarray  # column means, length D
    degenerate: bool = False


@dataclass
class LinearFit:
    coefficients: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients + self.intercept


def standardize(data, stats: ColumnStats | None = None) -> tuple[np.ndarray, ColumnStats]:
    """Z-score columns; constant columns (std < 1e-12) are centered only.

    When `stats` is supplied it is applied as-is, so transformations are
    reproducible on new data.
    """
    arr = check_matrix(data, "data")
    if stats is None:
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population (ddof=0)
        constant = std < ZERO_STD
        std = np.where(constant, 1.0, std)
        stats = ColumnStats(mean=mean, std=std, constant=constant)
    elif stats.mean.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(
            f"stats cover {stats.mean.shape[0]} columns, data has {arr.shape[1]}"
        )
    return (arr - stats.mean) / stats.std, stats


def first_principal_component(data, rng: Rng) -> PcaResult:
    """Dominant eigenvector of the sample covariance, by power iteration.

    Iterates to relative tolerance 1e-10 (capped at 1000 rounds) from an
    rng-seeded start vector.  The sign is fixed so the largest-magnitude
    loading entry is positive (ties resolved to the lowest index).  A
    zero covariance short-circuits to uniform loadings and is flagged.
    """
    arr = check_matrix(data, "data")
    m, d = arr.shape
    if m < 2:
        raise ValueError(f"need at least 2 rows for a principal component, got {m}")
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = centered.T @ centered / (m - 1)

    if np.abs(cov).max() < ZERO_STD:
        loadings = np.full(d, 1.0 / np.sqrt(d))
        return PcaResult(
            loadings=loadings,
            scores=centered @ loadings,
            explained_variance=0.0,
            mean=mean,
            degenerate=True,
        )

    v = rng.unit_vector(d)
    for _ in range(POWER_ITER_MAX):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm < ZERO_STD:
            # start vector fell in the null space; re-seed and continue
            v = rng.unit_vector(d)
            continue
        w /= norm
        if np.dot(w, v) < 0.0:
            w = -w
        if np.linalg.norm(w - v) <= POWER_ITER_TOL:
            v = w
            break
        v = w

    pivot = int(np.argmax(np.abs(v)))
    if v[pivot] < 0.0:
        v = -v
    return PcaResult(
        loadings=v,
        scores=centered @ v,
        explained_variance=float(v @ cov @ v),
        mean=mean,
        degenerate=False,
    )


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting for a dense square system."""
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise DimensionMismatchError(f"incompatible system shapes {A.shape}, {b.shape}")
    aug = np.concatenate([A.astype(float), b.reshape(-1, 1).astype(float)], axis=1)
    tol = ZERO_STD * max(1.0, float(np.abs(A).max()))
    for k in range(n):
        p = k + int(np.argmax(np.abs(aug[k:, k])))
        if abs(aug[p, k]) <= tol:
            raise SingularSystemError(k)
        if p != k:
            aug[[k, p]] = aug[[p, k]]
        factors = aug[k + 1 :, k] / aug[k, k]
        aug[k + 1 :, k:] -= factors[:, None] * aug[k, k:]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (aug[k, -1] - aug[k, k + 1 : n] @ x[k + 1 :]) / aug[k, k]
    return x


def weighted_ridge_fit(X, y, w, lam: float = DEFAULT_RIDGE_LAMBDA) -> LinearFit:
    """argmin over (beta, b) of sum_m w_m (y_m - X_m beta - b)^2 + lam ||beta||^2.

    Solved through the normal equations; the intercept is unpenalized.
    """
    X = check_matrix(X, "X")
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    m, d = X.shape
    if y.shape != (m,):
        raise DimensionMismatchError(f"y has shape {y.shape}, expected ({m},)")
    if w.shape != (m,):
        raise DimensionMismatchError(f"w has shape {w.shape}, expected ({m},)")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if not np.any(w > 0.0):
        raise ValueError("at least one weight must be positive")
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")

    # accumulate in extended precision: the rounded f64 system is then
    # identical under any row ordering, so fits are permutation-invariant
    Xl = X.astype(np.longdouble)
    wl = w.astype(np.longdouble)
    yl = y.astype(np.longdouble)
    Xw = Xl * wl[:, None]
    A = np.empty((d + 1, d + 1))
    A[:d, :d] = (Xl.T @ Xw).astype(float) + lam * np.eye(d)
    col_sums = Xw.sum(axis=0).astype(float)
    A[:d, d] = col_sums
    A[d, :d] = col_sums
    A[d, d] = float(wl.sum())
    rhs = np.empty(d + 1)
    rhs[:d] = (Xw.T @ yl).astype(float)
    rhs[d] = float(wl @ yl)
    solution = solve_linear(A, rhs)
    return LinearFit(coefficients=solution[:d], intercept=float(solution[d]))
