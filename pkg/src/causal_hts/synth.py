"""Synthetic observational data from linear and quadratic additive noise models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, ParameterError
from .graph import Dag, topological_order, vertex_index, vertex_name

__all__ = [
    "Mechanism",
    "Noise",
    "ScmConfig",
    "Dataset",
    "IdentifiabilityWarning",
    "draw_coefficients",
    "draw_noise",
    "sample_linear",
    "sample_quadratic",
    "sample",
    "standardize",
]


class Mechanism(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class Noise(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    UNIFORM = "uniform"


class IdentifiabilityWarning(UserWarning):
    """Linear data with Gaussian noise: the order is not identifiable from the distribution."""


@dataclass(frozen=True)
class ScmConfig:
    mechanism: Mechanism = Mechanism.LINEAR
    noise: Noise = Noise.UNIFORM
    noise_scale: float = 1.0
    coeff_low: float = 0.5
    coeff_high: float = 1.5
    standardize: bool = True
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "noise", Noise(self.noise))
        if not self.noise_scale > 0:
            raise ParameterError(f"noise_scale must be positive, got {self.noise_scale}")
        if not 0 < self.coeff_low <= self.coeff_high:
            raise ParameterError(
                f"need 0 < coeff_low <= coeff_high, got [{self.coeff_low}, {self.coeff_high}]"
            )


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x d`` sample matrix; column ``k`` holds vertex ``k``.

    ``coefficients`` keeps the edge weights used by the generator when known
    (``coefficients[i, j]`` is the weight of ``x_i`` in the equation of ``x_j``).
    """

    values: np.ndarray
    coefficients: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ParameterError(f"values must be a 2-D matrix, got shape {values.shape}")
        if values.shape[0] < 2:
            raise ParameterError(f"need at least 2 samples, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise DegenerateDataError("dataset contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [vertex_name(k) for k in range(self.d)]

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def columns(self, ks) -> np.ndarray:
        return self.values[:, list(ks)]

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.values, delimiter=",", header=",".join(self.names), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> Dataset:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        order = [vertex_index(name) for name in header]
        if sorted(order) != list(range(len(order))):
            raise ParameterError(f"{path}: header must name columns x0..x{len(order) - 1}")
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        out = np.empty_like(values)
        out[:, order] = values
        return cls(out)


def draw_coefficients(g: Dag, cfg: ScmConfig, rng: np.random.Generator) -> np.ndarray:
    """Edge weights with magnitude uniform on ``[coeff_low, coeff_high]`` and a random sign."""
    d = g.d
    mags = rng.uniform(cfg.coeff_low, cfg.coeff_high, size=(d, d))
    signs = rng.choice([-1.0, 1.0], size=(d, d))
    return np.where(g.adjacency, mags * signs, 0.0)


def draw_noise(noise: Noise, size: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean noise with variance ``scale**2``."""
    noise = Noise(noise)
    if noise is Noise.GAUSSIAN:
        return scale * rng.standard_normal(size)
    if noise is Noise.LAPLACE:
        return rng.laplace(0.0, scale / np.sqrt(2.0), size)
    return rng.uniform(-np.sqrt(3.0) * scale, np.sqrt(3.0) * scale, size)


def _check(n: int, cfg: ScmConfig, expected: Mechanism) -> None:
    if cfg.mechanism is not expected:
        raise ParameterError(f"config mechanism is {cfg.mechanism.value}, expected {expected.value}")
    if n < 2:
        raise ParameterError(f"need at least 2 samples, got {n}")


def _zscore(col: np.ndarray) -> np.ndarray:
    mean = col.mean()
    centered = col - mean
    # second pass removes the rounding left in the first mean
    centered -= centered.mean()
    sd = centered.std(ddof=1)
    if not sd > 1e-12 * max(1.0, abs(mean)):
        raise DegenerateDataError("cannot standardize a constant column")
    return centered / sd


def sample_linear(g: Dag, n: int, cfg: ScmConfig) -> Dataset:
    """Linear structural equations evaluated in topological order."""
    _check(n, cfg, Mechanism.LINEAR)
    if cfg.noise is Noise.GAUSSIAN:
        warnings.warn(
            "linear mechanisms with Gaussian noise are not identifiable",
            IdentifiabilityWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(cfg.seed)
    coef = draw_coefficients(g, cfg, rng)
    x = np.zeros((n, g.d))
    for v in topological_order(g).perm:
        x[:, v] = x @ coef[:, v] + draw_noise(cfg.noise, n, cfg.noise_scale, rng)
    ds = Dataset(x, coefficients=coef)
    return standardize(ds) if cfg.standardize else ds


def sample_quadratic(g: Dag, n: int, cfg: ScmConfig) -> Dataset:
    """Squares of each parent plus products of every parent pair, then additive noise.

    With ``standardize`` on, each column is standardized as soon as it is
    generated so that deep vertices do not blow up.
    """
    _check(n, cfg, Mechanism.QUADRATIC)
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros((n, g.d))
    for v in topological_order(g).perm:
        pa = sorted(g.parents(v))
        k = len(pa)
        signal = np.zeros(n)
        if k:
            c = rng.uniform(cfg.coeff_low, cfg.coeff_high, size=(k, k)) * rng.choice([-1.0, 1.0], size=(k, k))
            xp = x[:, pa]
            for a in range(k):
                signal += c[a, a] * xp[:, a] ** 2
                for b in range(a + 1, k):
                    signal += c[a, b] * xp[:, a] * xp[:, b]
        col = signal + draw_noise(cfg.noise, n, cfg.noise_scale, rng)
        x[:, v] = _zscore(col) if cfg.standardize else col
    return Dataset(x)


def sample(g: Dag, n: int, cfg: ScmConfig) -> Dataset:
    if cfg.mechanism is Mechanism.LINEAR:
        return sample_linear(g, n, cfg)
    return sample_quadratic(g, n, cfg)


def standardize(ds: Dataset) -> Dataset:
    """Column-wise ``(x - mean) / sd`` with the ``n - 1`` sample standard deviation."""
    cols = [_zscore(ds.values[:, k]) for k in range(ds.d)]
    return Dataset(np.column_stack(cols), coefficients=ds.coefficients)
