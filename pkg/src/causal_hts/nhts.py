"""Hierarchical topological sort for nonlinear additive noise models.

The sort finds candidate parent-child pairs from pairwise kernel regressions,
picks the roots among the candidate parents, and then grows the layering one
round at a time: a vertex joins the next layer once its regression residual
on everything already sorted is independent of every sorted vertex.

:class:`DataBackend` answers the questions with statistical tests on a
dataset; :class:`OracleBackend` answers them from a known graph.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import CausalHTSError, ParameterError
from .graph import Dag, HierarchicalOrder, d_separated
from .stats import (
    STAGE2_KERNEL,
    STAGE4_KERNEL,
    KernelSpec,
    TestConfig,
    conditional_independent,
    krr_residuals,
    marginal_independent,
)
from .synth import Dataset

__all__ = [
    "Prs",
    "RegressionRecord",
    "SortTrace",
    "NonlinearBackend",
    "DataBackend",
    "OracleBackend",
    "NhtsResult",
    "nhts_stage1",
    "build_pij",
    "nhts_stage2",
    "nhts_stage3",
    "nhts_stage4",
    "nhts",
]


@dataclass(frozen=True)
class RegressionRecord:
    target: int
    covariates: int
    stage: int
    round: int = 0


@dataclass
class SortTrace:
    """Every kernel regression run, plus test and fallback counters."""

    regressions: list[RegressionRecord] = field(default_factory=list)
    tests: int = 0
    test_errors: int = 0
    layer_history: list[list[int]] = field(default_factory=list)
    stage4_stalls: int = 0
    degraded_roots: bool = False

    def stage_counts(self, stage: int) -> dict[int, int]:
        """Number of regressions per round within one stage."""
        return dict(sorted(Counter(r.round for r in self.regressions if r.stage == stage).items()))

    def to_dict(self) -> dict:
        return {
            "regressions": [[r.target, r.covariates, r.stage, r.round] for r in self.regressions],
            "tests": self.tests,
            "test_errors": self.test_errors,
            "layer_history": self.layer_history,
            "stage4_stalls": self.stage4_stalls,
            "degraded_roots": self.degraded_roots,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Verdict:
    independent: bool
    p_value: float


class NonlinearBackend(Protocol):
    d: int
    trace: SortTrace

    def marginal(self, i: int, j: int) -> Verdict: ...

    def residual_tests(
        self, target: int, covariates: Sequence[int], against: Sequence[int], stage: int, round: int = 0
    ) -> list[Verdict]: ...

    def conditional(self, i: int, j: int, z: Sequence[int]) -> bool: ...


@dataclass
class DataBackend:
    ds: Dataset
    cfg: TestConfig = field(default_factory=TestConfig)
    krr2: KernelSpec = STAGE2_KERNEL
    krr4: KernelSpec = STAGE4_KERNEL
    trace: SortTrace = field(default_factory=SortTrace)

    @property
    def d(self) -> int:
        return self.ds.d

    def marginal(self, i: int, j: int) -> Verdict:
        self.trace.tests += 1
        res = marginal_independent(self.ds.column(i), self.ds.column(j), self.cfg)
        return Verdict(res.independent, res.p_value)

    def residual_tests(self, target, covariates, against, stage, round=0) -> list[Verdict]:
        kernel = self.krr2 if stage == 2 else self.krr4
        self.trace.regressions.append(RegressionRecord(target, len(covariates), stage, round))
        r = krr_residuals(self.ds.column(target), self.ds.columns(covariates), kernel)
        out = []
        for a in against:
            self.trace.tests += 1
            res = marginal_independent(r, self.ds.column(a), self.cfg)
            out.append(Verdict(res.independent, res.p_value))
        return out

    def conditional(self, i, j, z) -> bool:
        self.trace.tests += 1
        return conditional_independent(self.ds.column(i), self.ds.column(j), self.ds.columns(z), self.cfg).independent


@dataclass
class OracleBackend:
    """Graph-truth answers.

    Marginal and conditional verdicts are d-separation. A regression residual
    of ``target`` on ``S`` is independent of the members of ``S`` exactly when
    ``S`` holds every parent of ``target`` and none of its descendants.
    """

    g: Dag
    trace: SortTrace = field(default_factory=SortTrace)

    @property
    def d(self) -> int:
        return self.g.d

    def marginal(self, i: int, j: int) -> Verdict:
        self.trace.tests += 1
        sep = d_separated(self.g, i, j)
        return Verdict(sep, float(sep))

    def residual_tests(self, target, covariates, against, stage, round=0) -> list[Verdict]:
        self.trace.regressions.append(RegressionRecord(target, len(covariates), stage, round))
        s = frozenset(covariates)
        ok = self.g.parents(target) <= s and not (s & self.g.descendants(target))
        self.trace.tests += len(against)
        return [Verdict(ok, float(ok)) for _ in against]

    def conditional(self, i, j, z) -> bool:
        self.trace.tests += 1
        return d_separated(self.g, i, j, z)


@dataclass
class Prs:
    """Parent-relation state.

    ``dependent`` is the symmetric pairwise dependence matrix; ``pp2`` holds
    ordered pairs ``(i, j)`` with ``x_i`` identified as a parent of ``x_j``;
    ``pp2_via`` records which regression (1: parent alone, 2: parent plus its
    independent co-parents) revealed each pair.
    """

    dependent: np.ndarray
    isolated: frozenset[int]
    pp2: set[tuple[int, int]] = field(default_factory=set)
    pp2_via: dict[tuple[int, int], int] = field(default_factory=dict)
    roots: frozenset[int] = frozenset()

    @property
    def d(self) -> int:
        return self.dependent.shape[0]

    @property
    def W(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.pp2)

    def pp2_children(self, i: int) -> frozenset[int]:
        return frozenset(j for p, j in self.pp2 if p == i)

    def pp2_reach(self) -> np.ndarray:
        reach = np.zeros((self.d, self.d), dtype=bool)
        for i, j in self.pp2:
            reach[i, j] = True
        for k in range(self.d):
            reach |= reach[:, [k]] & reach[[k], :]
        return reach

    def to_dict(self) -> dict:
        return {
            "dependent": self.dependent.astype(int).tolist(),
            "isolated": sorted(self.isolated),
            "pp2": sorted([list(p) for p in self.pp2]),
            "roots": sorted(self.roots),
        }


def _as_backend(data, cfg, krr2=STAGE2_KERNEL, krr4=STAGE4_KERNEL) -> NonlinearBackend:
    if isinstance(data, Dataset):
        return DataBackend(data, cfg or TestConfig(), krr2, krr4)
    if cfg is not None:
        raise ParameterError("a test config only applies to dataset input")
    return data


def nhts_stage1(data: Dataset | NonlinearBackend, cfg: TestConfig | None = None) -> Prs:
    """Pairwise marginal tests; vertices dependent on nothing are isolated."""
    backend = _as_backend(data, cfg)
    d = backend.d
    dep = np.zeros((d, d), dtype=bool)
    for i in range(d):
        for j in range(i + 1, d):
            try:
                indep = backend.marginal(i, j).independent
            except CausalHTSError:
                backend.trace.test_errors += 1
                indep = False
            dep[i, j] = dep[j, i] = not indep
    isolated = frozenset(v for v in range(d) if not dep[v].any())
    return Prs(dep, isolated)


def build_pij(prs: Prs, i: int, j: int) -> frozenset[int]:
    """Vertices independent of ``x_i`` but dependent on ``x_j``."""
    return frozenset(k for k in range(prs.d) if k not in (i, j) and not prs.dependent[k, i] and prs.dependent[k, j])


def nhts_stage2(
    data: Dataset | NonlinearBackend,
    prs: Prs,
    cfg: TestConfig | None = None,
    krr: KernelSpec = STAGE2_KERNEL,
) -> Prs:
    """Mark ``(i, j)`` as parent-child when ``x_i`` is independent of a residual of ``x_j``.

    The residual is taken on ``x_i`` alone, and failing that on ``x_i`` together
    with the vertices that are independent of ``x_i`` but dependent on ``x_j``.
    """
    backend = _as_backend(data, cfg, krr2=krr)
    d = prs.d
    for i in range(d):
        for j in range(d):
            if i == j or not prs.dependent[i, j]:
                continue
            try:
                if backend.residual_tests(j, (i,), (i,), stage=2)[0].independent:
                    prs.pp2.add((i, j))
                    prs.pp2_via[(i, j)] = 1
                    continue
                extra = build_pij(prs, i, j)
                if extra and backend.residual_tests(j, (i, *sorted(extra)), (i,), stage=2)[0].independent:
                    prs.pp2.add((i, j))
                    prs.pp2_via[(i, j)] = 2
            except CausalHTSError:
                backend.trace.test_errors += 1
    return prs


def nhts_stage3(data: Dataset | NonlinearBackend, prs: Prs, cfg: TestConfig | None = None) -> frozenset[int]:
    """Pick the roots among the candidate parents.

    A candidate survives if no other candidate reaches it through discovered
    parent links, and every other candidate is independent of it, is its
    discovered child, or is dependent on one of its discovered children given
    the candidate itself.
    """
    backend = _as_backend(data, cfg)
    W = sorted(prs.W)
    reach = prs.pp2_reach()
    roots = []
    for i in W:
        if any(reach[w, i] for w in W if w != i):
            continue
        kids = sorted(prs.pp2_children(i))
        ok = True
        for j in W:
            if j == i or not prs.dependent[i, j] or (i, j) in prs.pp2:
                continue
            opened = False
            for k in kids:
                if k == j:
                    continue
                try:
                    if not backend.conditional(j, k, (i,)):
                        opened = True
                        break
                except CausalHTSError:
                    backend.trace.test_errors += 1
            if not opened:
                ok = False
                break
        if ok:
            roots.append(i)
    if not roots:
        backend.trace.degraded_roots = True
        if W:
            roots = [max(W, key=lambda w: (len(prs.pp2_children(w)), -w))]
        else:
            candidates = [v for v in range(prs.d) if v not in prs.isolated]
            roots = candidates[:1]
    prs.roots = frozenset(roots)
    return prs.roots


def nhts_stage4(
    data: Dataset | NonlinearBackend,
    sorted0: frozenset[int] | set[int],
    cfg: TestConfig | None = None,
    krr: KernelSpec = STAGE4_KERNEL,
    one_per_round: bool = False,
) -> HierarchicalOrder:
    """Grow the layering: each round admits every vertex whose residual on the sorted set is independent of it.

    When no vertex qualifies, the one with the largest smallest p-value is
    admitted alone. With ``one_per_round`` that vertex is admitted alone in
    every round, which yields a total order after the first layer.
    """
    backend = _as_backend(data, cfg, krr4=krr)
    d = backend.d
    done = set(sorted0)
    layers = [frozenset(done)] if done else []
    unsorted = [v for v in range(d) if v not in done]
    if not done and unsorted:
        raise ParameterError("the first layer must not be empty")
    rnd = 1
    while unsorted:
        basis = tuple(sorted(done))
        ready: list[int] = []
        best, best_p = unsorted[0], -1.0
        for v in unsorted:
            try:
                verdicts = backend.residual_tests(v, basis, basis, stage=4, round=rnd)
            except CausalHTSError:
                backend.trace.test_errors += 1
                continue
            if all(r.independent for r in verdicts):
                ready.append(v)
            worst = min(r.p_value for r in verdicts)
            if worst > best_p:
                best, best_p = v, worst
        if not ready:
            backend.trace.stage4_stalls += 1
            ready = [best]
        elif one_per_round:
            ready = [best]
        layers.append(frozenset(ready))
        backend.trace.layer_history.append(sorted(ready))
        done.update(ready)
        unsorted = [v for v in unsorted if v not in done]
        rnd += 1
    return HierarchicalOrder(tuple(layers))


@dataclass(frozen=True)
class NhtsResult:
    order: HierarchicalOrder
    prs: Prs
    trace: SortTrace


def nhts(
    data: Dataset | NonlinearBackend,
    cfg: TestConfig | None = None,
    krr2: KernelSpec = STAGE2_KERNEL,
    krr4: KernelSpec = STAGE4_KERNEL,
    one_per_round: bool = False,
) -> NhtsResult:
    """Run all four stages and return the layering with its parent relations and trace."""
    backend = _as_backend(data, cfg, krr2, krr4)
    if backend.d == 0:
        raise ParameterError("dataset has no columns")
    prs = nhts_stage1(backend)
    nhts_stage2(backend, prs)
    roots = nhts_stage3(backend, prs)
    first = prs.isolated | roots
    backend.trace.layer_history.insert(0, sorted(first))
    order = nhts_stage4(backend, first, one_per_round=one_per_round)
    return NhtsResult(order, prs, backend.trace)
