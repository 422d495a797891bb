"""Exhaustive and random graph suites that check the sorts and the pruning against graph truth."""

from __future__ import annotations

import time
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from .ed import EdConfig, EdTrace, ed_hierarchical, ed_linear
from .graph import Dag, ParentSets, erdos_renyi_dag, linearize, true_hierarchical_order
from .lhts import PopulationBackend, lhts
from .nhts import OracleBackend, nhts

__all__ = [
    "upper_triangular_dags",
    "suite_dags",
    "check_ed",
    "check_ed_hierarchical",
    "check_lhts",
    "check_nhts",
    "SuiteReport",
    "run_oracle_suites",
    "SUITES",
]


def upper_triangular_dags(d: int) -> Iterator[Dag]:
    """Every DAG whose edges all point from a lower to a higher id.

    Up to relabeling this covers every DAG on ``d`` vertices, each together
    with every one of its topological orders.
    """
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    ii = np.array([p[0] for p in pairs], dtype=int)
    jj = np.array([p[1] for p in pairs], dtype=int)
    bits = np.arange(len(pairs))
    for mask in range(1 << len(pairs)):
        adj = np.zeros((d, d), dtype=bool)
        on = (mask >> bits) & 1 == 1
        adj[ii[on], jj[on]] = True
        yield Dag(adj)


def suite_dags(dmax: int = 6, n_random: int = 200, d_random: int = 8, seed: int = 0) -> Iterator[Dag]:
    """All upper-triangular DAGs up to ``dmax`` under a random relabeling, then random larger DAGs."""
    rng = np.random.default_rng(seed)
    for d in range(1, dmax + 1):
        for g in upper_triangular_dags(d):
            yield g.relabel(rng.permutation(d))
    max_edges = d_random * (d_random - 1) / 2
    for _ in range(n_random):
        yield erdos_renyi_dag(d_random, rng.uniform(0, max_edges), rng)


def check_ed(g: Dag, rng: np.random.Generator, refine: bool = True) -> bool:
    """Linear pruning along a random valid order recovers the graph exactly."""
    order = linearize(true_hierarchical_order(g), rng)
    trace = EdTrace()
    found = ed_linear(None, order, EdConfig(oracle=g, refine=refine), trace)
    return found == ParentSets.from_dag(g) and trace.tests == g.d * (g.d - 1) // 2


def check_ed_hierarchical(g: Dag, rng: np.random.Generator, refine: bool = True) -> bool:
    found = ed_hierarchical(None, true_hierarchical_order(g), EdConfig(oracle=g, refine=refine))
    return found == ParentSets.from_dag(g)


def check_lhts(g: Dag, rng: np.random.Generator) -> bool:
    res = lhts(PopulationBackend.random(g, rng))
    return res.order == true_hierarchical_order(g) and res.diagnostics.stalled_pairs == 0


def check_nhts(g: Dag, rng: np.random.Generator) -> bool:
    """Exact layering and exact root set (roots with at least one child)."""
    res = nhts(OracleBackend(g))
    truth = true_hierarchical_order(g)
    roots = frozenset(v for v in truth.layers[0] if g.children(v)) if truth.layers else frozenset()
    return res.order == truth and res.prs.roots == roots


SUITES = {
    "ed": check_ed,
    "ed_hierarchical": check_ed_hierarchical,
    "lhts": check_lhts,
    "nhts": check_nhts,
}


@dataclass
class SuiteReport:
    name: str
    checked: int = 0
    failures: list[Dag] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def exact(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        state = "exact" if self.exact else f"{len(self.failures)} mismatches"
        return f"{self.name}: {self.checked} graphs, {state} ({self.seconds:.1f}s)"


def run_oracle_suites(
    names=("ed", "lhts", "nhts"),
    dmax: int = 6,
    n_random: int = 200,
    d_random: int = 8,
    seed: int = 0,
) -> list[SuiteReport]:
    reports = []
    for name in names:
        check = SUITES[name]
        report = SuiteReport(name)
        rng = np.random.default_rng(seed + 1)
        start = time.perf_counter()
        for g in suite_dags(dmax, n_random, d_random, seed):
            report.checked += 1
            if not check(g, rng):
                report.failures.append(g)
        report.seconds = time.perf_counter() - start
        reports.append(report)
    return reports
