"""Weighted undirected graphs, edge-list/DIMACS I/O, fixtures and cut evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np


class GraphFormatError(ValueError):
    """Raised when graph text cannot be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Graph:
    """Undirected graph on nodes 0..n-1 with canonical edges (i < j, no duplicates)."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("node count must be nonnegative")
        seen = set()
        for i, j, w in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) is not canonical for n={self.n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            if not (w >= 0) or not np.isfinite(w):
                raise ValueError(f"edge ({i}, {j}) has invalid weight {w}")
            seen.add((i, j))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        """Canonicalize (i < j), merge parallel edges by summing weights, sort."""
        merged: dict[tuple[int, int], float] = {}
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if w < 0:
                raise ValueError(f"negative weight {w} on edge ({i}, {j})")
            if i < 0 or j < 0 or i >= n or j >= n:
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            key = (i, j) if i < j else (j, i)
            merged[key] = merged.get(key, 0.0) + w
        return cls(n, tuple((i, j, w) for (i, j), w in sorted(merged.items())))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
        i, j, w = zip(*self.edges)
        return np.array(i, dtype=np.int64), np.array(j, dtype=np.int64), np.array(w, dtype=float)

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def neighbors(self, node: int) -> list[tuple[int, float]]:
        return [(j if i == node else i, w) for i, j, w in self.edges if node in (i, j)]

    def laplacian(self) -> np.ndarray:
        """Dense weighted Laplacian (small graphs only)."""
        L = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            L[i, i] += w
            L[j, j] += w
            L[i, j] -= w
            L[j, i] -= w
        return L


@dataclass(frozen=True)
class Cut:
    """A bipartition (S, V - S) of a graph with its crossing weight."""

    n: int
    side: frozenset[int]
    value: float
    size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "size", len(self.side))
        if not 1 <= self.size <= self.n - 1:
            raise ValueError("cut side must be a nonempty proper subset")

    @property
    def smaller_side(self) -> int:
        return min(self.size, self.n - self.size)

    @property
    def balance(self) -> float:
        return self.smaller_side / self.n

    @property
    def expansion(self) -> float:
        return self.value / self.smaller_side

    def is_balanced(self, c: float) -> bool:
        return is_c_balanced(self.n, self.side, c)

    def complement(self) -> frozenset[int]:
        return frozenset(range(self.n)) - self.side


def _check_side(graph: Graph, side) -> frozenset[int]:
    side = frozenset(int(x) for x in side)
    if not side or len(side) >= graph.n:
        raise ValueError("S must be a nonempty proper subset of V")
    if min(side) < 0 or max(side) >= graph.n:
        raise ValueError("S contains nodes outside 0..n-1")
    return side


def cut_value(graph: Graph, side) -> float:
    """Total weight of edges with exactly one endpoint in ``side``."""
    side = _check_side(graph, side)
    if graph.m == 0:
        return 0.0
    i, j, w = graph.arrays
    mask = np.zeros(graph.n, dtype=bool)
    mask[list(side)] = True
    return float(w[mask[i] != mask[j]].sum())


def make_cut(graph: Graph, side) -> Cut:
    side = _check_side(graph, side)
    return Cut(graph.n, side, cut_value(graph, side))


def edge_expansion(graph: Graph, side) -> float:
    side = _check_side(graph, side)
    return cut_value(graph, side) / min(len(side), graph.n - len(side))


def is_c_balanced(n: int, side, c: float) -> bool:
    k = len(side)
    return min(k, n - k) >= c * n


def dumbbell(k: int) -> Graph:
    """Two unit-weight k-cliques {0..k-1} and {k..2k-1} joined by the edge (k-1, k)."""
    if k < 1:
        raise ValueError("dumbbell needs k >= 1")
    edges = []
    for offset in (0, k):
        for a in range(k):
            for b in range(a + 1, k):
                edges.append((offset + a, offset + b, 1.0))
    edges.append((k - 1, k, 1.0))
    return Graph.from_edges(2 * k, edges)


def complete_graph(n: int, weight: float = 1.0) -> Graph:
    return Graph.from_edges(n, [(a, b, weight) for a in range(n) for b in range(a + 1, n)])


def random_graph(n: int, p: float, seed=None, weights: tuple[float, float] | None = None) -> Graph:
    """G(n, p) with unit weights, or uniform weights in ``weights`` if given."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                w = 1.0 if weights is None else float(rng.uniform(*weights))
                edges.append((a, b, w))
    return Graph.from_edges(n, edges)


def _parse_number(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise GraphFormatError(lineno, f"cannot parse {tok!r} as {kind.__name__}") from None


def load_graph(text: str, n: int | None = None) -> Graph:
    """Parse edge-list ("i j w", 0-based) or DIMACS-like ("p n m" / "e i j w", 1-based) text.

    The format is detected from the first non-comment line. Missing weights default to 1.
    """
    lines = [(no, ln.split("#", 1)[0].strip()) for no, ln in enumerate(text.splitlines(), 1)]
    lines = [(no, ln) for no, ln in lines if ln and not ln.startswith("c ")]
    dimacs = bool(lines) and lines[0][1].split()[0] == "p"
    edges = []
    declared_n = n
    for lineno, line in lines:
        tok = line.split()
        if dimacs:
            if tok[0] == "p":
                if len(tok) < 3:
                    raise GraphFormatError(lineno, "expected 'p <n> <m>'")
                # allow "p edge n m" as well as "p n m"
                nums = [t for t in tok[1:] if t.lstrip("-").isdigit()]
                if len(nums) < 2:
                    raise GraphFormatError(lineno, "expected 'p <n> <m>'")
                declared_n = _parse_number(nums[0], lineno, int)
                continue
            if tok[0] != "e" or len(tok) not in (3, 4):
                raise GraphFormatError(lineno, "expected 'e <i> <j> [w]'")
            i = _parse_number(tok[1], lineno, int) - 1
            j = _parse_number(tok[2], lineno, int) - 1
            w = _parse_number(tok[3], lineno) if len(tok) == 4 else 1.0
        else:
            if len(tok) not in (2, 3):
                raise GraphFormatError(lineno, "expected 'i j [w]'")
            i = _parse_number(tok[0], lineno, int)
            j = _parse_number(tok[1], lineno, int)
            w = _parse_number(tok[2], lineno) if len(tok) == 3 else 1.0
        if i == j:
            raise GraphFormatError(lineno, f"self-loop at node {i}")
        if w < 0:
            raise GraphFormatError(lineno, f"negative weight {w}")
        if i < 0 or j < 0:
            raise GraphFormatError(lineno, "negative node id")
        edges.append((i, j, w))
    if declared_n is None:
        declared_n = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    if any(max(i, j) >= declared_n for i, j, _ in edges):
        raise ValueError(f"edge endpoint exceeds declared node count {declared_n}")
    return Graph.from_edges(declared_n, edges)


def read_graph(path) -> Graph:
    with open(path) as fh:
        return load_graph(fh.read())


def serialize(graph: Graph, fmt: str = "dimacs") -> str:
    """Text form that ``load_graph`` reads back bit-exactly (``repr`` keeps all float digits)."""
    if fmt == "dimacs":
        out = [f"p {graph.n} {graph.m}"]
        out += [f"e {i + 1} {j + 1} {w!r}" for i, j, w in graph.edges]
    elif fmt == "edgelist":
        out = [f"{i} {j} {w!r}" for i, j, w in graph.edges]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(out) + "\n"
