"""Exact s-t maximum flow (Dinic), residual min cut, and endpoint-only flow decomposition."""

from __future__ import annotations

import sys
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .graph import Graph


class FlowInvariantError(RuntimeError):
    """A flow handed to the decomposition does not satisfy conservation or capacities."""


@dataclass(frozen=True)
class FlowNetwork:
    """Undirected capacitated network; each edge is a shared budget usable in either direction."""

    n: int
    edges: tuple[tuple[int, int, float], ...]
    s: int
    t: int

    def __post_init__(self):
        if self.s == self.t:
            raise ValueError("source and sink must differ")
        for a, b, cap in self.edges:
            if cap < 0:
                raise ValueError("capacities must be nonnegative")
            if not (0 <= a < self.n and 0 <= b < self.n) or a == b:
                raise ValueError(f"bad edge ({a}, {b})")

    @classmethod
    def from_graph(cls, graph: Graph, s: int, t: int) -> "FlowNetwork":
        return cls(graph.n, graph.edges, s, t)

    @classmethod
    def with_terminals(cls, graph: Graph, sources: Iterable[int], sinks: Iterable[int],
                       capacity: float) -> "FlowNetwork":
        """Add a super source s = n and sink t = n + 1 joined to the given nodes."""
        s, t = graph.n, graph.n + 1
        extra = [(s, x, capacity) for x in sources] + [(y, t, capacity) for y in sinks]
        return cls(graph.n + 2, graph.edges + tuple(extra), s, t)


@dataclass(frozen=True)
class FlowResult:
    value: float
    edge_flows: np.ndarray  # net flow on edges[e], positive in the a -> b direction
    source_side: frozenset[int]
    cut_capacity: float


@dataclass(frozen=True)
class PathFlow:
    """Decomposed flow, keeping only the first and last internal node of every s-t path."""

    paths: tuple[tuple[int, int, float], ...]

    @property
    def value(self) -> float:
        return float(sum(a for _, _, a in self.paths))

    def demands(self) -> dict[tuple[int, int], float]:
        d: dict[tuple[int, int], float] = {}
        for x, y, a in self.paths:
            d[(x, y)] = d.get((x, y), 0.0) + a
        return d


def max_flow(net: FlowNetwork) -> FlowResult:
    """Dinic's blocking-flow algorithm; deterministic in the edge order of ``net``."""
    n, s, t = net.n, net.s, net.t
    m = len(net.edges)
    to = [0] * (2 * m)
    res = [0.0] * (2 * m)
    adj: list[list[int]] = [[] for _ in range(n)]
    maxcap = 0.0
    for e, (a, b, cap) in enumerate(net.edges):
        to[2 * e], to[2 * e + 1] = b, a
        res[2 * e] = res[2 * e + 1] = float(cap)
        adj[a].append(2 * e)
        adj[b].append(2 * e + 1)
        maxcap = max(maxcap, cap)
    eps = 1e-12 * max(1.0, maxcap)

    level = [-1] * n

    def bfs() -> bool:
        for v in range(n):
            level[v] = -1
        level[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            for arc in adj[v]:
                u = to[arc]
                if level[u] < 0 and res[arc] > eps:
                    level[u] = level[v] + 1
                    q.append(u)
        return level[t] >= 0

    it = [0] * n

    def dfs(v: int, pushed: float) -> float:
        if v == t:
            return pushed
        arcs = adj[v]
        while it[v] < len(arcs):
            arc = arcs[it[v]]
            u = to[arc]
            if res[arc] > eps and level[u] == level[v] + 1:
                d = dfs(u, min(pushed, res[arc]))
                if d > 0:
                    res[arc] -= d
                    res[arc ^ 1] += d
                    return d
            it[v] += 1
        return 0.0

    limit = sys.getrecursionlimit()
    if limit < n + 100:
        sys.setrecursionlimit(n + 100)
    value = 0.0
    while bfs():
        it = [0] * n
        while True:
            f = dfs(s, float("inf"))
            if f <= 0:
                break
            value += f

    flows = np.array([(res[2 * e + 1] - res[2 * e]) / 2 for e in range(m)])
    # source side of the min cut: residual reachability from s
    seen = [False] * n
    seen[s] = True
    q = deque([s])
    while q:
        v = q.popleft()
        for arc in adj[v]:
            u = to[arc]
            if not seen[u] and res[arc] > eps:
                seen[u] = True
                q.append(u)
    side = frozenset(v for v in range(n) if seen[v])
    cap = sum(c for a, b, c in net.edges if seen[a] != seen[b])
    return FlowResult(value, flows, side, float(cap))


def _find_cycle(out: dict[int, dict[int, float]], nodes: list[int]) -> list[int] | None:
    """Some directed cycle in the positive-flow graph, found by deterministic DFS."""
    state: dict[int, int] = {}
    for root in nodes:
        if state.get(root):
            continue
        stack = [(root, iter(sorted(out.get(root, {}))))]
        path = [root]
        state[root] = 1
        while stack:
            v, children = stack[-1]
            nxt = next(children, None)
            if nxt is None:
                state[v] = 2
                stack.pop()
                path.pop()
                continue
            st = state.get(nxt, 0)
            if st == 1:
                return path[path.index(nxt):] + [nxt]
            if st == 0:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(sorted(out.get(nxt, {})))))
    return None


def flow_decompose(net: FlowNetwork, result: FlowResult, A: Iterable[int], B: Iterable[int]
                   ) -> PathFlow:
    """Remove flow cycles, then strip s-t paths; report (first, last internal node, amount).

    Every stripped path is re-accumulated against the edge capacities as it is removed.
    """
    A, B = frozenset(A), frozenset(B)
    s, t = net.s, net.t
    tol = 1e-12 * max(1.0, abs(result.value), max((c for *_, c in net.edges), default=0.0))
    out: dict[int, dict[int, float]] = {}
    capacity: dict[tuple[int, int], float] = {}
    for (a, b, cap), f in zip(net.edges, result.edge_flows):
        key = (min(a, b), max(a, b))
        capacity[key] = capacity.get(key, 0.0) + cap
        f = float(f)
        if f > tol:
            out.setdefault(a, {})[b] = out.get(a, {}).get(b, 0.0) + f
        elif f < -tol:
            out.setdefault(b, {})[a] = out.get(b, {}).get(a, 0.0) - f
    # opposite arcs between the same pair (parallel edges) net out
    for a in list(out):
        for b in list(out[a]):
            back = out.get(b, {}).get(a)
            if back and a < b:
                f = out[a][b]
                common = min(f, back)
                out[a][b] -= common
                out[b][a] -= common

    def prune(a: int, b: int):
        if out[a][b] <= tol:
            del out[a][b]

    for a in list(out):
        for b in list(out[a]):
            prune(a, b)

    nodes = sorted(set(out) | {b for d in out.values() for b in d})
    while (cycle := _find_cycle(out, nodes)) is not None:
        amount = min(out[a][b] for a, b in zip(cycle, cycle[1:]))
        for a, b in zip(cycle, cycle[1:]):
            out[a][b] -= amount
            prune(a, b)

    usage: dict[tuple[int, int], float] = {}
    paths = []
    while out.get(s):
        path = [s]
        while path[-1] != t:
            nxt = out.get(path[-1])
            if not nxt:
                raise FlowInvariantError(f"flow conservation violated at node {path[-1]}")
            path.append(min(nxt))
            if len(path) > len(nodes) + 1:
                raise FlowInvariantError("cycle survived cancellation")
        amount = min(out[a][b] for a, b in zip(path, path[1:]))
        for a, b in zip(path, path[1:]):
            out[a][b] -= amount
            prune(a, b)
            key = (min(a, b), max(a, b))
            usage[key] = usage.get(key, 0.0) + amount
            if usage[key] > capacity[key] * (1 + 1e-9) + tol:
                raise FlowInvariantError(f"capacity exceeded on edge {key}")
        if len(path) < 4:
            raise FlowInvariantError("s-t path without internal nodes")
        x, y = path[1], path[-2]
        if x not in A or y not in B:
            raise FlowInvariantError(f"path endpoints ({x}, {y}) not in A x B")
        paths.append((x, y, amount))
    leftover = sum(sum(d.values()) for d in out.values())
    if leftover > tol * (1 + len(nodes)):
        raise FlowInvariantError("flow left after stripping all s-t paths")
    total = sum(a for *_, a in paths)
    if abs(total - result.value) > 1e-9 * max(1.0, abs(result.value)):
        raise FlowInvariantError(f"decomposed {total} but flow value is {result.value}")
    return PathFlow(tuple(paths))
