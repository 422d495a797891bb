"""Edge discovery: prune the complete graph allowed by an order down to parent sets.

For each target the candidate parents are scanned from the nearest
predecessor backwards. A candidate is kept when it stays dependent on the
target given the parents already found for the candidate and for the target.

A sweep that conditions only on parents found so far can keep a spurious
candidate: when a true parent of the target that comes earlier in the order
is a collider between the candidate and the target, conditioning on a later
mediator opens the path. With ``refine`` on, every kept candidate is tested
once more against the final parent set of the target, which removes these.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Literal

from .errors import CausalHTSError, ParameterError
from .graph import Dag, HierarchicalOrder, LinearOrder, ParentSets, d_separated
from .stats import TestConfig, conditional_independent, marginal_independent
from .synth import Dataset

__all__ = ["EdConfig", "CiRecord", "EdTrace", "ed_linear", "ed_hierarchical", "ed_oracle_verdict"]


@dataclass(frozen=True)
class EdConfig:
    """``oracle`` replaces every test with d-separation in that graph.

    ``strict_confounders`` conditions only on the candidate's parents that are
    themselves dependent on the target, instead of all of them.
    """

    ci_config: TestConfig = field(default_factory=TestConfig)
    oracle: Dag | None = None
    strict_confounders: bool = False
    refine: bool = True


@dataclass(frozen=True)
class CiRecord:
    i: int
    j: int
    z_size: int
    phase: Literal["sweep", "refine"]
    independent: bool
    error: bool = False


@dataclass
class EdTrace:
    records: list[CiRecord] = field(default_factory=list)

    @property
    def tests(self) -> int:
        """Tests run by the first sweep."""
        return sum(r.phase == "sweep" for r in self.records)

    @property
    def refine_tests(self) -> int:
        return sum(r.phase == "refine" for r in self.records)

    @property
    def errors(self) -> int:
        return sum(r.error for r in self.records)

    @property
    def max_z(self) -> int:
        return max((r.z_size for r in self.records), default=0)

    def z_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(r.z_size for r in self.records).items()))

    def to_dict(self) -> dict:
        return {
            "tests": self.tests,
            "refine_tests": self.refine_tests,
            "errors": self.errors,
            "max_z": self.max_z,
            "z_histogram": {str(k): v for k, v in self.z_histogram().items()},
        }


def ed_oracle_verdict(g: Dag, i: int, j: int, z) -> bool:
    """True when ``x_i`` and ``x_j`` are d-separated by ``z``."""
    return d_separated(g, i, j, z)


class _Tester:
    def __init__(self, ds: Dataset | None, cfg: EdConfig, trace: EdTrace):
        if cfg.oracle is None and ds is None:
            raise ParameterError("a dataset is required unless an oracle graph is given")
        if cfg.oracle is not None and ds is not None and cfg.oracle.d != ds.d:
            raise ParameterError(f"oracle graph has {cfg.oracle.d} vertices, dataset has {ds.d}")
        self.ds = ds
        self.cfg = cfg
        self.trace = trace
        self.d = cfg.oracle.d if cfg.oracle is not None else ds.d
        self._marginal: dict[tuple[int, int], bool] = {}

    def independent(self, i: int, j: int, z: frozenset[int], phase: str) -> bool:
        zs = sorted(z)
        error = False
        if self.cfg.oracle is not None:
            indep = ed_oracle_verdict(self.cfg.oracle, i, j, zs)
        else:
            try:
                indep = conditional_independent(
                    self.ds.column(i), self.ds.column(j), self.ds.columns(zs), self.cfg.ci_config
                ).independent
            except CausalHTSError:
                # a failed test drops the edge
                indep, error = True, True
        self.trace.records.append(CiRecord(i, j, len(zs), phase, indep, error))
        return indep

    def dependent_marginal(self, a: int, b: int) -> bool:
        key = (min(a, b), max(a, b))
        if key not in self._marginal:
            if self.cfg.oracle is not None:
                dep = not d_separated(self.cfg.oracle, a, b)
            else:
                try:
                    dep = not marginal_independent(self.ds.column(a), self.ds.column(b), self.cfg.ci_config).independent
                except CausalHTSError:
                    dep = True
            self._marginal[key] = dep
        return self._marginal[key]

    def confounders(self, pa_i: set[int], j: int) -> frozenset[int]:
        if not self.cfg.strict_confounders:
            return frozenset(pa_i)
        return frozenset(p for p in pa_i if self.dependent_marginal(p, j))


def _refine(t: _Tester, parents: list[set[int]], j: int, scanned: list[int], first_z: dict[int, frozenset[int]]) -> None:
    for i in scanned:
        if i not in parents[j]:
            continue
        z = t.confounders(parents[i], j) | (parents[j] - {i})
        if z == first_z[i]:
            continue
        if t.independent(i, j, z, "refine"):
            parents[j].discard(i)


def ed_linear(
    ds: Dataset | None,
    order: LinearOrder,
    cfg: EdConfig = EdConfig(),
    trace: EdTrace | None = None,
) -> ParentSets:
    """Prune along a permutation; every earlier vertex is a candidate parent."""
    trace = trace if trace is not None else EdTrace()
    t = _Tester(ds, cfg, trace)
    if order.d != t.d:
        raise ParameterError(f"order covers {order.d} vertices, data has {t.d}")
    parents: list[set[int]] = [set() for _ in range(t.d)]
    perm = order.perm
    for pos in range(1, t.d):
        j = perm[pos]
        first_z: dict[int, frozenset[int]] = {}
        scanned = [perm[k] for k in range(pos - 1, -1, -1)]
        for i in scanned:
            z = t.confounders(parents[i], j) | parents[j]
            first_z[i] = z
            if not t.independent(i, j, z, "sweep"):
                parents[j].add(i)
        if cfg.refine:
            _refine(t, parents, j, scanned, first_z)
    return ParentSets(tuple(frozenset(p) for p in parents))


def ed_hierarchical(
    ds: Dataset | None,
    order: HierarchicalOrder,
    cfg: EdConfig = EdConfig(),
    trace: EdTrace | None = None,
) -> ParentSets:
    """Prune along a layering; vertices sharing a layer are never tested against each other.

    Candidates are scanned from the layer just above the target upwards, and
    the target side of the conditioning set holds only parents found in layers
    strictly between the candidate and the target.
    """
    trace = trace if trace is not None else EdTrace()
    t = _Tester(ds, cfg, trace)
    if order.d != t.d:
        raise ParameterError(f"order covers {order.d} vertices, data has {t.d}")
    layer_of = order.layer_of
    parents: list[set[int]] = [set() for _ in range(t.d)]
    for lj in range(1, order.n_layers):
        for j in sorted(order.layers[lj]):
            first_z: dict[int, frozenset[int]] = {}
            scanned = [i for li in range(lj - 1, -1, -1) for i in sorted(order.layers[li])]
            for i in scanned:
                li = layer_of[i]
                between = frozenset(p for p in parents[j] if li < layer_of[p] < lj)
                z = t.confounders(parents[i], j) | between
                first_z[i] = z
                if not t.independent(i, j, z, "sweep"):
                    parents[j].add(i)
            if cfg.refine:
                _refine(t, parents, j, scanned, first_z)
    return ParentSets(tuple(frozenset(p) for p in parents))
