"""Regression residuals and nonparametric independence tests.

Marginal independence uses the distance covariance statistic ``n * dCov^2``
with either a two-moment gamma approximation of its null or a permutation
null. Conditional independence uses the kernel conditional independence
statistic with Gaussian kernels, median-heuristic bandwidths and a gamma
null, or a Monte Carlo draw from its spectral null.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import linalg
from scipy import stats as sps
from scipy.spatial.distance import pdist, squareform
from sklearn.metrics.pairwise import polynomial_kernel, rbf_kernel

from .errors import DegenerateDataError, NumericalError, ParameterError

__all__ = [
    "TestConfig",
    "TestResult",
    "KernelSpec",
    "OlsFit",
    "STAGE2_KERNEL",
    "STAGE4_KERNEL",
    "ols_fit",
    "ols_residuals",
    "residualize_sequential",
    "krr_residuals",
    "distance_covariance_stat",
    "marginal_independent",
    "conditional_independent",
]

Method = Literal["asymptotic", "permutation"]


@dataclass(frozen=True)
class TestConfig:
    """Significance level and null-distribution settings shared by every test."""

    __test__ = False  # keep pytest from collecting this class

    alpha: float = 0.05
    method: Method = "asymptotic"
    permutations: int = 200
    seed: int | None = 0

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.method not in ("asymptotic", "permutation"):
            raise ParameterError(f"unknown test method {self.method!r}")
        if self.method == "permutation" and self.permutations < 50:
            raise ParameterError(f"need at least 50 permutations, got {self.permutations}")


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    independent: bool


def _verdict(statistic: float, p_value: float, cfg: TestConfig) -> TestResult:
    p = float(min(1.0, max(0.0, p_value)))
    return TestResult(float(statistic), p, p > cfg.alpha)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel for ridge regression.

    ``gamma`` is the RBF inverse squared length scale, or the inner-product
    scale of the polynomial kernel (``None`` means ``1 / n_features``).
    """

    kind: Literal["rbf", "polynomial"]
    ridge: float
    gamma: float | None = None
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("rbf", "polynomial"):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if not self.ridge > 0:
            raise ParameterError(f"ridge must be positive, got {self.ridge}")
        if self.kind == "rbf" and not (self.gamma is not None and self.gamma > 0):
            raise ParameterError("rbf kernel needs gamma > 0")
        if self.kind == "polynomial":
            if self.degree < 1:
                raise ParameterError(f"degree must be >= 1, got {self.degree}")
            if self.gamma is not None and not self.gamma > 0:
                raise ParameterError("polynomial scale must be positive")

    @classmethod
    def rbf(cls, gamma: float, ridge: float) -> KernelSpec:
        return cls("rbf", ridge, gamma=gamma)

    @classmethod
    def polynomial(cls, degree: int = 3, coef0: float = 1.0, scale: float | None = None, ridge: float = 1.0) -> KernelSpec:
        return cls("polynomial", ridge, gamma=scale, degree=degree, coef0=coef0)

    def gram(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "rbf":
            return rbf_kernel(X, gamma=self.gamma)
        return polynomial_kernel(X, degree=self.degree, gamma=self.gamma, coef0=self.coef0)


STAGE2_KERNEL = KernelSpec.polynomial(degree=3, coef0=1.0, ridge=1.0)
STAGE4_KERNEL = KernelSpec.rbf(gamma=0.01, ridge=0.1)


def _as_matrix(X, n: int) -> np.ndarray:
    if X is None:
        return np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ParameterError(f"regressors have {X.shape[0]} rows, response has {n}")
    return X


@dataclass(frozen=True)
class OlsFit:
    residuals: np.ndarray
    coef: np.ndarray
    intercept: float
    rank: int
    rank_deficient: bool


def ols_fit(y, X=None, fit_intercept: bool = True) -> OlsFit:
    """Least squares through the SVD pseudo-inverse; collinear designs are flagged, not refused."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    X = _as_matrix(X, n)
    p = X.shape[1] + int(fit_intercept)
    if n <= X.shape[1] + 1:
        raise ParameterError(f"need more than {X.shape[1] + 1} samples, got {n}")
    design = np.column_stack([np.ones(n), X]) if fit_intercept else X
    if p == 0:
        return OlsFit(y.copy(), np.empty(0), 0.0, 0, False)
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    intercept = float(beta[0]) if fit_intercept else 0.0
    coef = beta[1:] if fit_intercept else beta
    return OlsFit(resid, coef, intercept, int(rank), int(rank) < p)


def ols_residuals(y, X=None, fit_intercept: bool = True) -> np.ndarray:
    return ols_fit(y, X, fit_intercept).residuals


def residualize_sequential(y, Z: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Remove ``Z`` from ``y`` one univariate regression at a time.

    The regressors are orthogonalized against each other first, so the result
    equals a multivariate regression on all of ``Z`` regardless of the order.
    Near-collinear regressors are dropped.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(Z, (list, tuple)):
        Z = np.column_stack(Z) if len(Z) else None
    Z = _as_matrix(Z, y.shape[0])
    basis: list[np.ndarray] = []
    out = y - y.mean()
    for k in range(Z.shape[1]):
        q = Z[:, k] - Z[:, k].mean()
        scale = np.linalg.norm(q)
        for b in basis:
            q = q - (q @ b) / (b @ b) * b
        if scale == 0 or np.linalg.norm(q) <= 1e-10 * scale:
            continue
        basis.append(q)
        out = out - (out @ q) / (q @ q) * q
    return out


def krr_residuals(y, X, k: KernelSpec) -> np.ndarray:
    """In-sample kernel ridge residual ``y - K (K + ridge I)^-1 y``.

    Equivalently ``ridge (K + ridge I)^-1 y``. On an ill-conditioned solve the
    ridge is multiplied by 10, at most three times.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    X = _as_matrix(X, n)
    if X.shape[1] < 1:
        raise ParameterError("kernel regression needs at least one regressor")
    if n < 10:
        raise ParameterError(f"kernel regression needs at least 10 samples, got {n}")
    K = k.gram(X)
    ridge = k.ridge
    for _ in range(4):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", linalg.LinAlgWarning)
                sol = linalg.solve(K + ridge * np.eye(n), y, assume_a="pos")
            return ridge * sol
        except (linalg.LinAlgError, linalg.LinAlgWarning):
            ridge *= 10.0
    raise NumericalError(f"kernel system still singular at ridge {ridge / 10:g}")


def _column(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DegenerateDataError(f"{name} contains non-finite values")
    if np.ptp(x) <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise DegenerateDataError(f"{name} is constant")
    return x


def _mean_abs_distance(x: np.ndarray) -> float:
    """Mean of ``|x_s - x_t|`` over all ordered pairs (including s = t), in O(n log n)."""
    s = np.sort(x)
    n = s.shape[0]
    k = np.arange(n)
    return float(2.0 * np.sum(s * (2 * k - n + 1)) / n**2)


@functools.cache
def _dcor():
    # dcor compiles numba kernels on import (seconds), so load it on first use
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        import dcor
    return dcor


def _dcov2(x: np.ndarray, y: np.ndarray) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(_dcor().distance_covariance_sqr(x, y, method="mergesort"))


def distance_covariance_stat(x, y) -> float:
    """``n`` times the V-statistic estimate of the squared distance covariance."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    return x.shape[0] * _dcov2(x, y)


def marginal_independent(x, y, cfg: TestConfig = TestConfig()) -> TestResult:
    """Distance covariance test of ``x`` independent of ``y``."""
    x = _column(x, "x")
    y = _column(y, "y")
    n = x.shape[0]
    if y.shape[0] != n:
        raise ParameterError(f"length mismatch: {n} vs {y.shape[0]}")
    if n < 20:
        raise ParameterError(f"marginal test needs at least 20 samples, got {n}")
    stat = n * _dcov2(x, y)
    if cfg.method == "permutation":
        rng = np.random.default_rng(cfg.seed)
        hits = sum(n * _dcov2(x, rng.permutation(y)) >= stat for _ in range(cfg.permutations))
        return _verdict(stat, (1 + hits) / (1 + cfg.permutations), cfg)
    mean = _mean_abs_distance(x) * _mean_abs_distance(y)
    var = 2.0 * _dcov2(x, x) * _dcov2(y, y)
    if not (mean > 0 and var > 0):
        raise DegenerateDataError("distance covariance null has zero spread")
    return _verdict(stat, sps.gamma.sf(stat, mean**2 / var, scale=var / mean), cfg)


def _zscore_cols(a: np.ndarray) -> np.ndarray:
    sd = a.std(axis=0)
    if np.any(sd <= 1e-12):
        raise DegenerateDataError("conditioning set contains a constant column")
    return (a - a.mean(axis=0)) / sd


def _gaussian_gram(a: np.ndarray) -> np.ndarray:
    d2 = pdist(a, "sqeuclidean")
    width = np.median(np.sqrt(d2))
    if not width > 0:
        raise DegenerateDataError("median pairwise distance is zero")
    return squareform(np.exp(-d2 / (2.0 * width**2)), checks=False) + np.eye(a.shape[0])


def _center(K: np.ndarray) -> np.ndarray:
    return K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()


@dataclass
class _KciParts:
    statistic: float
    product: np.ndarray = field(repr=False)


def _kci_parts(x: np.ndarray, y: np.ndarray, z: np.ndarray, eps: float = 1e-3) -> _KciParts:
    n = x.shape[0]
    x, y, z = _zscore_cols(x[:, None]), _zscore_cols(y[:, None]), _zscore_cols(z)
    kx = _center(_gaussian_gram(np.hstack([x, 0.5 * z])))
    ky = _center(_gaussian_gram(y))
    kz = _center(_gaussian_gram(z))
    rz = eps * linalg.inv(kz + eps * np.eye(n))
    kx_r = rz @ kx @ rz
    ky_r = rz @ ky @ rz
    product = kx_r * ky_r
    return _KciParts(float(product.sum()), product)


def conditional_independent(x, y, Z=None, cfg: TestConfig = TestConfig()) -> TestResult:
    """Kernel conditional independence test of ``x`` and ``y`` given the columns of ``Z``.

    An empty ``Z`` delegates to :func:`marginal_independent`.
    """
    x = _column(x, "x")
    y = _column(y, "y")
    n = x.shape[0]
    Z = _as_matrix(Z, n)
    if y.shape[0] != n:
        raise ParameterError(f"length mismatch: {n} vs {y.shape[0]}")
    if Z.shape[1] == 0:
        return marginal_independent(x, y, cfg)
    if n < 20:
        raise ParameterError(f"conditional test needs at least 20 samples, got {n}")
    parts = _kci_parts(x, y, Z)
    prod = parts.product
    if cfg.method == "permutation":
        # permuting x breaks its link with z too, so sample the spectral null instead
        eig = linalg.eigvalsh(prod)
        eig = eig[eig > eig.max() * 1e-8]
        rng = np.random.default_rng(cfg.seed)
        draws = rng.chisquare(1, size=(cfg.permutations, eig.shape[0])) @ eig
        hits = int(np.sum(draws >= parts.statistic))
        return _verdict(parts.statistic, (1 + hits) / (1 + cfg.permutations), cfg)
    mean = float(np.trace(prod))
    var = 2.0 * float(np.sum(prod * prod))
    if not (mean > 0 and var > 0):
        raise DegenerateDataError("conditional null has zero spread")
    return _verdict(parts.statistic, sps.gamma.sf(parts.statistic, mean**2 / var, scale=var / mean), cfg)
