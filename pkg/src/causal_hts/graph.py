"""DAGs, vertex orders, d-separation, random graphs and evaluation metrics.

Vertices are the integers ``0..d-1``; the name of vertex ``k`` is ``"x{k}"``.
An adjacency entry ``adjacency[i, j]`` is true iff the graph has the edge
``x_i -> x_j``.
"""

from __future__ import annotations

import heapq
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Union

import numpy as np

from .errors import ParameterError, StructureError

__all__ = [
    "Dag",
    "LinearOrder",
    "HierarchicalOrder",
    "ParentSets",
    "EdgeScores",
    "vertex_name",
    "vertex_index",
    "erdos_renyi_dag",
    "relatives",
    "topological_order",
    "true_hierarchical_order",
    "d_separated",
    "a_top",
    "edge_f1",
    "linearize",
    "random_order",
    "order_from_json",
]


def vertex_name(v: int) -> str:
    return f"x{v}"


def vertex_index(name: str) -> int:
    if not name.startswith("x") or not name[1:].isdigit():
        raise ParameterError(f"not a vertex name: {name!r}")
    return int(name[1:])


def _kahn(adj: np.ndarray) -> list[int]:
    """Topological sort, smallest available id first. Raises on a cycle."""
    d = adj.shape[0]
    children: list[list[int]] = [[] for _ in range(d)]
    indeg = [0] * d
    for i, j in zip(*np.nonzero(adj)):
        children[i].append(int(j))
        indeg[j] += 1
    ready = [v for v in range(d) if indeg[v] == 0]
    heapq.heapify(ready)
    out: list[int] = []
    while ready:
        v = heapq.heappop(ready)
        out.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(out) != d:
        raise StructureError("graph contains a directed cycle")
    return out


@dataclass(frozen=True, eq=False)
class Dag:
    """Directed acyclic graph stored as a read-only boolean adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self) -> None:
        adj = np.array(self.adjacency, dtype=bool, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise StructureError(f"adjacency must be square, got shape {adj.shape}")
        if np.any(np.diag(adj)):
            raise StructureError("self-edges are not allowed")
        _kahn(adj)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> Dag:
        adj = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise ParameterError(f"edge ({i}, {j}) out of range for d={d}")
            adj[i, j] = True
        return cls(adj)

    @classmethod
    def empty(cls, d: int) -> Dag:
        return cls(np.zeros((d, d), dtype=bool))

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def parents(self, v: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.adjacency[:, v]))

    def children(self, v: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.adjacency[v]))

    @cached_property
    def _neighbours(self) -> tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, ...], ...]]:
        """Parent and child lists per vertex, for the graph walks."""
        adj = self.adjacency.tolist()
        d = self.d
        parents = tuple(tuple(u for u in range(d) if adj[u][v]) for v in range(d))
        children = tuple(tuple(u for u in range(d) if adj[v][u]) for v in range(d))
        return parents, children

    @cached_property
    def reach(self) -> np.ndarray:
        """``reach[i, j]`` is true iff a directed path ``x_i -> ... -> x_j`` exists."""
        d = self.d
        reach = np.zeros((d, d), dtype=bool)
        for v in reversed(_kahn(self.adjacency)):
            for c in np.flatnonzero(self.adjacency[v]):
                reach[v, c] = True
                reach[v] |= reach[c]
        reach.setflags(write=False)
        return reach

    def ancestors(self, v: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.reach[:, v]))

    def descendants(self, v: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.reach[v]))

    def relabel(self, perm: Sequence[int]) -> Dag:
        """Return the graph with vertex ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm)
        adj = np.zeros_like(self.adjacency)
        adj[np.ix_(perm, perm)] = self.adjacency
        return Dag(adj)

    def to_dict(self) -> dict:
        return {"d": self.d, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, obj: dict) -> Dag:
        try:
            return cls.from_edges(int(obj["d"]), [tuple(e) for e in obj["edges"]])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, StructureError):
                raise
            raise ParameterError(f"malformed DAG object: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> Dag:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self) -> int:
        return hash((self.d, self.adjacency.tobytes()))

    def __repr__(self) -> str:
        return f"Dag(d={self.d}, edges={self.edges})"


def _check_vertex_set(vertices: Sequence[int], d: int | None = None) -> int:
    n = len(vertices)
    if sorted(vertices) != list(range(n)):
        raise ParameterError(f"order must cover vertices 0..{n - 1} exactly once")
    if d is not None and n != d:
        raise ParameterError(f"order covers {n} vertices, graph has {d}")
    return n


@dataclass(frozen=True)
class LinearOrder:
    """A permutation of vertices; ``perm[k]`` is the vertex at position ``k``."""

    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        perm = tuple(int(v) for v in self.perm)
        _check_vertex_set(perm)
        object.__setattr__(self, "perm", perm)

    @property
    def d(self) -> int:
        return len(self.perm)

    @cached_property
    def position(self) -> dict[int, int]:
        return {v: k for k, v in enumerate(self.perm)}

    def to_dict(self) -> dict:
        return {"perm": list(self.perm)}


@dataclass(frozen=True)
class HierarchicalOrder:
    """Ordered, non-empty, disjoint vertex layers that partition ``0..d-1``."""

    layers: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        layers = tuple(frozenset(int(v) for v in layer) for layer in self.layers)
        if any(len(layer) == 0 for layer in layers):
            raise ParameterError("layers must be non-empty")
        _check_vertex_set([v for layer in layers for v in layer])
        object.__setattr__(self, "layers", layers)

    @property
    def d(self) -> int:
        return sum(len(layer) for layer in self.layers)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @cached_property
    def layer_of(self) -> dict[int, int]:
        return {v: k for k, layer in enumerate(self.layers) for v in layer}

    def to_dict(self) -> dict:
        return {"layers": [sorted(layer) for layer in self.layers]}

    def __repr__(self) -> str:
        return f"HierarchicalOrder({[sorted(layer) for layer in self.layers]})"


Order = Union[LinearOrder, HierarchicalOrder]


def order_from_json(obj: dict | str) -> Order:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if "layers" in obj:
        return HierarchicalOrder(tuple(frozenset(layer) for layer in obj["layers"]))
    if "perm" in obj:
        return LinearOrder(tuple(obj["perm"]))
    raise ParameterError("order object needs a 'layers' or 'perm' key")


@dataclass(frozen=True)
class ParentSets:
    """Predicted parent set of every vertex."""

    parents: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        parents = tuple(frozenset(int(u) for u in ps) for ps in self.parents)
        d = len(parents)
        for v, ps in enumerate(parents):
            if v in ps:
                raise ParameterError(f"vertex {v} listed as its own parent")
            if any(not 0 <= u < d for u in ps):
                raise ParameterError(f"parent of vertex {v} out of range")
        object.__setattr__(self, "parents", parents)

    @classmethod
    def empty(cls, d: int) -> ParentSets:
        return cls(tuple(frozenset() for _ in range(d)))

    @classmethod
    def from_dag(cls, g: Dag) -> ParentSets:
        return cls(tuple(g.parents(v) for v in range(g.d)))

    @property
    def d(self) -> int:
        return len(self.parents)

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for v, ps in enumerate(self.parents) for u in ps}

    def to_dict(self) -> dict:
        return {
            "parents": {
                vertex_name(v): [vertex_name(u) for u in sorted(ps)]
                for v, ps in enumerate(self.parents)
            }
        }

    @classmethod
    def from_dict(cls, obj: dict) -> ParentSets:
        table = obj["parents"]
        d = len(table)
        parents = [frozenset()] * d
        for name, ps in table.items():
            parents[vertex_index(name)] = frozenset(vertex_index(p) for p in ps)
        return cls(tuple(parents))


def erdos_renyi_dag(d: int, expected_edges: float, seed: int | np.random.Generator | None = None) -> Dag:
    """Random DAG: each pair ordered by a random permutation is an edge with a fixed probability.

    The edge probability is ``expected_edges / (d (d - 1) / 2)`` so the
    expected edge count is ``expected_edges``.
    """
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    n_pairs = d * (d - 1) / 2
    if expected_edges < 0 or (n_pairs > 0 and expected_edges > n_pairs):
        raise ParameterError(
            f"expected_edges must lie in [0, {n_pairs:g}] for d={d}, got {expected_edges}"
        )
    rng = np.random.default_rng(seed)
    if n_pairs == 0:
        return Dag.empty(d)
    p = expected_edges / n_pairs
    latent = rng.permutation(d)
    upper = np.triu(rng.random((d, d)) < p, k=1)
    adj = np.zeros((d, d), dtype=bool)
    adj[np.ix_(latent, latent)] = upper
    return Dag(adj)


Kind = Literal["parents", "children", "ancestors", "descendants"]


def relatives(g: Dag, v: int, kind: Kind) -> frozenset[int]:
    if not 0 <= v < g.d:
        raise ParameterError(f"vertex {v} out of range for d={g.d}")
    lookup = {
        "parents": g.parents,
        "children": g.children,
        "ancestors": g.ancestors,
        "descendants": g.descendants,
    }
    try:
        return lookup[kind](v)
    except KeyError:
        raise ParameterError(f"unknown kinship kind {kind!r}") from None


def topological_order(g: Dag) -> LinearOrder:
    return LinearOrder(tuple(_kahn(g.adjacency)))


def true_hierarchical_order(g: Dag | np.ndarray) -> HierarchicalOrder:
    """Longest-path layering: roots in layer 0, otherwise one past the deepest parent."""
    adj = g.adjacency if isinstance(g, Dag) else np.asarray(g, dtype=bool)
    layer = np.zeros(adj.shape[0], dtype=int)
    for v in _kahn(adj):
        ps = np.flatnonzero(adj[:, v])
        if ps.size:
            layer[v] = 1 + layer[ps].max()
    if adj.shape[0] == 0:
        return HierarchicalOrder(())
    return HierarchicalOrder(
        tuple(frozenset(np.flatnonzero(layer == k).tolist()) for k in range(layer.max() + 1))
    )


def d_separated(g: Dag, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """True iff every path between ``i`` and ``j`` is blocked given ``z``.

    Reachability over (vertex, direction) states, so the cost is linear in the
    number of edges rather than in the number of paths.
    """
    z = frozenset(z)
    d = g.d
    if not (0 <= i < d and 0 <= j < d) or any(not 0 <= k < d for k in z):
        raise ParameterError("vertex out of range")
    if i == j or i in z or j in z:
        raise ParameterError("i, j must be distinct and outside the conditioning set")
    parents, children = g._neighbours
    # colliders open when they, or a descendant, are conditioned on
    opens = set(z)
    frontier = list(z)
    while frontier:
        v = frontier.pop()
        for p in parents[v]:
            if p not in opens:
                opens.add(p)
                frontier.append(p)

    # "up": arrived from a child (or start); "down": arrived from a parent
    up, down = {i}, set()
    stack = [(i, True)]
    while stack:
        v, from_child = stack.pop()
        if v == j:
            return False
        if from_child and v in z:
            continue
        if from_child or v in opens:
            for p in parents[v]:
                if p not in up:
                    up.add(p)
                    stack.append((p, True))
        if from_child or v not in z:
            for c in children[v]:
                if c not in down:
                    down.add(c)
                    stack.append((c, False))
    return True


def a_top(order: Order, g: Dag) -> float:
    """Fraction of true edges whose parent is placed strictly before the child.

    Hierarchical orders need strict layer precedence: an edge inside a layer
    does not count as recovered. A graph with no edges scores 1.0.
    """
    if order.d != g.d:
        raise ParameterError(f"order covers {order.d} vertices, graph has {g.d}")
    edges = g.edges
    if not edges:
        return 1.0
    rank = order.position if isinstance(order, LinearOrder) else order.layer_of
    return sum(rank[u] < rank[v] for u, v in edges) / len(edges)


@dataclass(frozen=True)
class EdgeScores:
    precision: float
    recall: float
    f1: float


def edge_f1(pred: ParentSets, g: Dag) -> EdgeScores:
    """Directed-edge precision, recall and F1.

    An empty denominator counts as vacuous success (1.0) for precision and
    recall separately; F1 is 0 whenever precision + recall is 0.
    """
    if pred.d != g.d:
        raise ParameterError(f"prediction covers {pred.d} vertices, graph has {g.d}")
    predicted = pred.edges()
    truth = set(g.edges)
    hits = len(predicted & truth)
    precision = hits / len(predicted) if predicted else 1.0
    recall = hits / len(truth) if truth else 1.0
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom > 0 else 0.0
    return EdgeScores(precision, recall, f1)


def linearize(h: HierarchicalOrder, seed: int | np.random.Generator | None = None) -> LinearOrder:
    """Concatenate the layers, shuffling vertices within each layer."""
    rng = np.random.default_rng(seed)
    perm: list[int] = []
    for layer in h.layers:
        perm.extend(int(v) for v in rng.permutation(sorted(layer)))
    return LinearOrder(tuple(perm))


def random_order(d: int, seed: int | np.random.Generator | None = None) -> LinearOrder:
    return LinearOrder(tuple(int(v) for v in np.random.default_rng(seed).permutation(d)))
