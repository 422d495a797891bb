"""Hierarchical topological sort for linear non-Gaussian models.

Pairwise ancestral relations are discovered in three passes (marginal
independence, pairwise regressions, regressions after removing known mutual
ancestors) and the resulting ancestor table is peeled into layers.

Two backends feed the same algorithm: :class:`DataBackend` runs statistical
tests on a dataset, :class:`PopulationBackend` works with exact noise
loadings of a known linear model and decides independence by whether two
linear combinations of independent noises share a noise term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Protocol

import numpy as np

from .errors import CausalHTSError, ParameterError
from .graph import Dag, HierarchicalOrder
from .stats import TestConfig, marginal_independent
from .synth import Dataset, ScmConfig, draw_coefficients

__all__ = [
    "ApRelation",
    "Ars",
    "LhtsDiagnostics",
    "LhtsResult",
    "LinearBackend",
    "DataBackend",
    "PopulationBackend",
    "lhts_stage1",
    "lhts_stage2",
    "lhts_stage3",
    "ancestor_sort",
    "lhts",
]


class ApRelation(IntEnum):
    """Relation of row vertex ``i`` to column vertex ``j``."""

    UNKNOWN = 0
    UNRELATED_AP1 = 1
    UNRELATED_AP2 = 2
    ANCESTOR_OF = 3
    DESCENDANT_OF = 4


_MIRROR = {
    ApRelation.UNKNOWN: ApRelation.UNKNOWN,
    ApRelation.UNRELATED_AP1: ApRelation.UNRELATED_AP1,
    ApRelation.UNRELATED_AP2: ApRelation.UNRELATED_AP2,
    ApRelation.ANCESTOR_OF: ApRelation.DESCENDANT_OF,
    ApRelation.DESCENDANT_OF: ApRelation.ANCESTOR_OF,
}


@dataclass
class Ars:
    """Pairwise ancestral relation table.

    ``stage[i, j]`` records which stage settled the pair (0 while unknown), so
    ancestry found by pairwise regression and ancestry found after removing
    mutual ancestors stay distinguishable.
    """

    relation: np.ndarray
    stage: np.ndarray

    @classmethod
    def empty(cls, d: int) -> Ars:
        return cls(np.zeros((d, d), dtype=np.int8), np.zeros((d, d), dtype=np.int8))

    @classmethod
    def from_dag(cls, g: Dag) -> Ars:
        """Table holding the true ancestry of ``g`` (non-ancestral pairs left unknown)."""
        ars = cls.empty(g.d)
        for i, j in zip(*np.nonzero(g.reach)):
            ars.set(int(i), int(j), ApRelation.ANCESTOR_OF, 0)
        return ars

    @property
    def d(self) -> int:
        return self.relation.shape[0]

    def get(self, i: int, j: int) -> ApRelation:
        return ApRelation(int(self.relation[i, j]))

    def set(self, i: int, j: int, rel: ApRelation, stage: int) -> None:
        self.relation[i, j] = rel
        self.relation[j, i] = _MIRROR[rel]
        self.stage[i, j] = self.stage[j, i] = stage

    def unknown_pairs(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.relation == ApRelation.UNKNOWN, k=1))
        return list(zip(ii.tolist(), jj.tolist()))

    def ancestor_matrix(self) -> np.ndarray:
        """``A[i, j]`` true iff ``x_i`` is recorded as an ancestor of ``x_j``."""
        return self.relation == ApRelation.ANCESTOR_OF

    def ancestor_closure(self) -> np.ndarray:
        reach = self.ancestor_matrix().copy()
        for k in range(self.d):
            reach |= reach[:, [k]] & reach[[k], :]
        return reach

    def known_ancestors(self, v: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.relation[:, v] == ApRelation.ANCESTOR_OF))

    def copy(self) -> Ars:
        return Ars(self.relation.copy(), self.stage.copy())

    def to_json(self) -> str:
        return json.dumps({"relation": self.relation.tolist(), "stage": self.stage.tolist()})

    @classmethod
    def from_json(cls, text: str) -> Ars:
        obj = json.loads(text)
        rel = np.asarray(obj["relation"], dtype=np.int8)
        return cls(rel, np.asarray(obj.get("stage", np.zeros_like(rel)), dtype=np.int8))


class LinearBackend(Protocol):
    """What the sort needs from its data: columns, univariate residuals, independence."""

    d: int
    tests: int
    errors: int

    def column(self, v: int) -> np.ndarray: ...

    def residual(self, y: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    def sq_norm(self, v: np.ndarray) -> float: ...

    def independent(self, a: np.ndarray, b: np.ndarray) -> bool: ...


@dataclass
class DataBackend:
    ds: Dataset
    cfg: TestConfig = field(default_factory=TestConfig)
    tests: int = 0
    errors: int = 0

    @property
    def d(self) -> int:
        return self.ds.d

    def column(self, v: int) -> np.ndarray:
        return self.ds.column(v)

    def residual(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        yc = y - y.mean()
        xc = x - x.mean()
        return yc - (xc @ yc) / (xc @ xc) * xc

    def sq_norm(self, v: np.ndarray) -> float:
        c = v - v.mean()
        return float(c @ c)

    def independent(self, a: np.ndarray, b: np.ndarray) -> bool:
        self.tests += 1
        return marginal_independent(a, b, self.cfg).independent


@dataclass
class PopulationBackend:
    """Exact verdicts for a linear model with independent, non-Gaussian, unit-variance noise.

    Each variable is represented by its loading vector on the noise terms, a
    row of ``(I - B^T)^-1``. Covariances are inner products of loadings, and two
    linear combinations of independent non-Gaussian noises are independent
    iff no noise term loads on both.
    """

    loadings: np.ndarray
    tol: float = 1e-9
    tests: int = 0
    errors: int = 0

    def __post_init__(self) -> None:
        # vectors are tiny, so plain tuples beat numpy call overhead here
        self._rows = [tuple(row) for row in np.asarray(self.loadings, dtype=float).tolist()]

    @classmethod
    def from_coefficients(cls, coefficients: np.ndarray) -> PopulationBackend:
        b = np.asarray(coefficients, dtype=float)
        d = b.shape[0]
        return cls(np.linalg.inv(np.eye(d) - b.T))

    @classmethod
    def random(cls, g: Dag, seed=None) -> PopulationBackend:
        return cls.from_coefficients(draw_coefficients(g, ScmConfig(), np.random.default_rng(seed)))

    @property
    def d(self) -> int:
        return len(self._rows)

    def column(self, v: int) -> tuple[float, ...]:
        return self._rows[v]

    def residual(self, y, x) -> tuple[float, ...]:
        c = sum(u * v for u, v in zip(x, y)) / sum(u * u for u in x)
        return tuple(v - c * u for u, v in zip(x, y))

    def sq_norm(self, v) -> float:
        return sum(u * u for u in v)

    def independent(self, a, b) -> bool:
        self.tests += 1
        shared = na = nb = 0.0
        for u, v in zip(a, b):
            p = u * v
            shared += p * p
            na += u * u
            nb += v * v
        return shared <= self.tol**2 * na * nb


def _guarded(backend: LinearBackend, a: np.ndarray, b: np.ndarray) -> bool | None:
    """Independence verdict, or ``None`` if the test could not be run."""
    try:
        return backend.independent(a, b)
    except CausalHTSError:
        backend.errors += 1
        return None


def _remove(backend: LinearBackend, y: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for q in basis:
        y = backend.residual(y, q)
    return y


def _orthogonal_basis(backend: LinearBackend, vertices: list[int]) -> list[np.ndarray]:
    # regressing the raw columns one after another would leave components of
    # earlier columns behind, so orthogonalize them first
    basis: list[np.ndarray] = []
    for m in vertices:
        raw = backend.column(m)
        q = _remove(backend, raw, basis)
        if backend.sq_norm(q) > 1e-20 * max(backend.sq_norm(raw), 1e-300):
            basis.append(q)
    return basis


def _pair_verdicts(backend: LinearBackend, xi: np.ndarray, xj: np.ndarray) -> tuple[bool | None, bool | None]:
    """(x_i independent of residual of x_j on x_i, x_j independent of residual of x_i on x_j)."""
    return (
        _guarded(backend, xi, backend.residual(xj, xi)),
        _guarded(backend, xj, backend.residual(xi, xj)),
    )


def _as_backend(data: Dataset | LinearBackend, cfg: TestConfig | None) -> LinearBackend:
    if isinstance(data, Dataset):
        return DataBackend(data, cfg or TestConfig())
    if cfg is not None:
        raise ParameterError("a test config only applies to dataset input")
    return data


def lhts_stage1(data: Dataset | LinearBackend, ars: Ars, cfg: TestConfig | None = None) -> Ars:
    """Mark marginally independent pairs as unrelated."""
    backend = _as_backend(data, cfg)
    for i, j in ars.unknown_pairs():
        if _guarded(backend, backend.column(i), backend.column(j)):
            ars.set(i, j, ApRelation.UNRELATED_AP1, 1)
    return ars


def lhts_stage2(data: Dataset | LinearBackend, ars: Ars, cfg: TestConfig | None = None) -> Ars:
    """Pairwise regressions; an independent residual in exactly one direction gives ancestry."""
    backend = _as_backend(data, cfg)
    for i, j in ars.unknown_pairs():
        fwd, bwd = _pair_verdicts(backend, backend.column(i), backend.column(j))
        if fwd is True and bwd is False:
            ars.set(i, j, ApRelation.ANCESTOR_OF, 2)
        elif fwd is False and bwd is True:
            ars.set(i, j, ApRelation.DESCENDANT_OF, 2)
    return ars


@dataclass
class Stage3Stats:
    passes: int = 0
    stalled_pairs: int = 0


def lhts_stage3(
    data: Dataset | LinearBackend,
    ars: Ars,
    cfg: TestConfig | None = None,
    stats: Stage3Stats | None = None,
) -> Ars:
    """Repeat pairwise regressions after removing known mutual ancestors until nothing changes.

    Each pass reads the ancestor table as it stood when the pass started. A
    pair is only re-tested when its mutual-ancestor set has grown. A pass that
    settles no pair marks the remaining pairs unrelated.
    """
    backend = _as_backend(data, cfg)
    stats = stats if stats is not None else Stage3Stats()
    tried: dict[tuple[int, int], frozenset[int]] = {}
    while True:
        pending = ars.unknown_pairs()
        if not pending:
            return ars
        stats.passes += 1
        closure = ars.ancestor_closure()
        updates: list[tuple[int, int, ApRelation]] = []
        for i, j in pending:
            mutual = frozenset(np.flatnonzero(closure[:, i] & closure[:, j]).tolist()) - {i, j}
            if tried.get((i, j)) == mutual:
                continue
            tried[(i, j)] = mutual
            basis = _orthogonal_basis(backend, sorted(mutual))
            xi = _remove(backend, backend.column(i), basis)
            xj = _remove(backend, backend.column(j), basis)
            fwd, bwd = _pair_verdicts(backend, xi, xj)
            if fwd is True and bwd is True:
                updates.append((i, j, ApRelation.UNRELATED_AP2))
            elif fwd is True and bwd is False:
                updates.append((i, j, ApRelation.ANCESTOR_OF))
            elif fwd is False and bwd is True:
                updates.append((i, j, ApRelation.DESCENDANT_OF))
        if not updates:
            for i, j in pending:
                ars.set(i, j, ApRelation.UNRELATED_AP2, 3)
            stats.stalled_pairs = len(pending)
            return ars
        for i, j, rel in updates:
            ars.set(i, j, rel, 3)


@dataclass(frozen=True)
class SortRepair:
    cycle_broken: bool
    forced: tuple[int, ...]


def ancestor_sort(ars: Ars) -> tuple[HierarchicalOrder, SortRepair]:
    """Peel off, layer by layer, the vertices with no unsorted known ancestor.

    If every remaining vertex still has an unsorted ancestor the table holds a
    cycle; the vertex with the fewest unsorted ancestors is then forced out
    alone and the repair is reported.
    """
    anc = ars.ancestor_matrix()
    pending = {v: set(np.flatnonzero(anc[:, v]).tolist()) for v in range(ars.d)}
    layers: list[frozenset[int]] = []
    forced: list[int] = []
    while pending:
        layer = frozenset(v for v, a in pending.items() if not a)
        if not layer:
            v = min(pending, key=lambda u: (len(pending[u]), u))
            layer = frozenset([v])
            forced.append(v)
        layers.append(layer)
        for v in layer:
            del pending[v]
        for a in pending.values():
            a -= layer
    return HierarchicalOrder(tuple(layers)), SortRepair(bool(forced), tuple(forced))


@dataclass(frozen=True)
class LhtsDiagnostics:
    tests: int
    test_errors: int
    stage_tests: tuple[int, int, int]
    stage3_passes: int
    stalled_pairs: int
    cycle_broken: bool

    def to_dict(self) -> dict:
        return {
            "tests": self.tests,
            "test_errors": self.test_errors,
            "stage_tests": list(self.stage_tests),
            "stage3_passes": self.stage3_passes,
            "stalled_pairs": self.stalled_pairs,
            "cycle_broken": self.cycle_broken,
        }


@dataclass(frozen=True)
class LhtsResult:
    order: HierarchicalOrder
    ars: Ars
    diagnostics: LhtsDiagnostics


def lhts(data: Dataset | LinearBackend, cfg: TestConfig | None = None) -> LhtsResult:
    """Run all stages on a dataset (or any backend) and return the layering."""
    backend = _as_backend(data, cfg)
    ars = Ars.empty(backend.d)
    counts = []
    lhts_stage1(backend, ars)
    counts.append(backend.tests)
    lhts_stage2(backend, ars)
    counts.append(backend.tests - sum(counts))
    s3 = Stage3Stats()
    lhts_stage3(backend, ars, stats=s3)
    counts.append(backend.tests - sum(counts))
    order, repair = ancestor_sort(ars)
    diag = LhtsDiagnostics(
        tests=backend.tests,
        test_errors=backend.errors,
        stage_tests=tuple(counts),
        stage3_passes=s3.passes,
        stalled_pairs=s3.stalled_pairs,
        cycle_broken=repair.cycle_broken,
    )
    return LhtsResult(order, ars, diag)
