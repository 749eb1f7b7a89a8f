"""The Matching(u) oracle: project, pick extreme sets, maxflow, then cut / flow / matching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .graph import Cut, Graph, make_cut
from .maxflow import FlowNetwork, PathFlow, flow_decompose, max_flow
from .sketch import Embedding


class OraclePreconditionError(ValueError):
    """The active node set is too small for the extreme sets A and B."""


@dataclass(frozen=True)
class MatchingConfig:
    """c_prime: balance constant; delta: squared-distance scale; sigma: stretch threshold."""

    alpha: float
    delta: float
    c_prime: float = 1 / 32
    sigma: float = 0.05

    def __post_init__(self):
        if not 0 < self.c_prime < 0.25:
            raise ValueError("c_prime must lie in (0, 1/4)")
        if self.delta <= 0 or self.sigma <= 0 or self.alpha <= 0:
            raise ValueError("alpha, delta and sigma must be positive")

    def pi(self, n: int) -> float:
        return 6 * self.alpha / (self.c_prime * n * self.delta)

    def side_size(self, n: int) -> int:
        return math.ceil(2 * self.c_prime * n - 1e-12)

    @property
    def cut_threshold(self) -> float:
        # c' n pi, independent of n
        return 6 * self.alpha / self.delta


@dataclass(frozen=True)
class CutFound:
    cut: Cut
    capacity: float  # of the s-t cut in the augmented network


@dataclass(frozen=True)
class SaturatedFlow:
    flow: PathFlow
    observed: float  # sum_xy d_xy ||v_x - v_y||^2 on the sketch
    flow_edges: tuple[tuple[int, int, float], ...]  # |f_e| on original graph edges
    pi: float


@dataclass(frozen=True)
class Matched:
    edges: tuple[tuple[int, int], ...]
    n_all: int = 0
    n_short: int = 0
    stretch_complete: bool = False  # every demand pair passed the stretch filter

    def __len__(self):
        return len(self.edges)


MatchingOutcome = Union[CutFound, SaturatedFlow, Matched]


def canonical_sign(u: np.ndarray) -> tuple[np.ndarray, bool]:
    """Flip u so its first nonzero coordinate is positive."""
    u = np.asarray(u, dtype=float)
    nz = np.flatnonzero(u)
    if len(nz) == 0:
        raise ValueError("direction must be nonzero")
    if u[nz[0]] < 0:
        return -u, True
    return u, False


def extreme_sets(w: np.ndarray, nodes: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((nodes, w))  # by w, ties by node id
    return nodes[order[:size]], nodes[order[len(order) - size:]]


def matching(u: np.ndarray, emb: Embedding, graph: Graph, cfg: MatchingConfig) -> MatchingOutcome:
    """One call of the procedure for an already sign-canonical direction ``u``."""
    nodes = emb.active
    n = len(nodes)
    size = cfg.side_size(n)
    if size < 1 or n < 2 * size:
        raise OraclePreconditionError(f"{n} active nodes cannot host two disjoint sets of {size}")
    pts = emb.points
    w_all = np.zeros(emb.n_total)
    w_all[nodes] = pts[nodes] @ u
    A, B = extreme_sets(w_all[nodes], nodes, size)
    pi = cfg.pi(n)
    net = FlowNetwork.with_terminals(graph, A.tolist(), B.tolist(), pi)
    res = max_flow(net)
    if res.cut_capacity < cfg.cut_threshold:
        side = [v for v in res.source_side if v < graph.n]
        return CutFound(make_cut(graph, side), res.cut_capacity)

    flow = flow_decompose(net, res, A.tolist(), B.tolist())
    demands = flow.demands()
    observed = 0.0
    for (x, y), d in demands.items():
        diff = pts[x] - pts[y]
        observed += d * float(diff @ diff)
    if observed >= 2 * cfg.alpha:
        m = graph.m
        flow_edges = tuple((a, b, abs(float(f))) for (a, b, _), f in zip(graph.edges, res.edge_flows[:m]))
        return SaturatedFlow(flow, observed, flow_edges, pi)

    m_all = []
    for (x, y), d in demands.items():
        stretch = w_all[y] - w_all[x]
        if d > 0 and stretch >= cfg.sigma:
            m_all.append((stretch, x, y))
    stretch_complete = len(m_all) == sum(1 for d in demands.values() if d > 0)
    m_short = [(s, x, y) for s, x, y in m_all
               if float((pts[x] - pts[y]) @ (pts[x] - pts[y])) <= cfg.delta]
    m_short.sort(key=lambda e: (-e[0], e[1], e[2]))
    used_tail, used_head, edges = set(), set(), []
    for _, x, y in m_short:
        if x not in used_tail and y not in used_head:
            used_tail.add(x)
            used_head.add(y)
            edges.append((x, y))
    return Matched(tuple(edges), len(m_all), len(m_short), stretch_complete)


def reverse_outcome(out: MatchingOutcome) -> MatchingOutcome:
    if isinstance(out, Matched):
        return Matched(tuple((y, x) for x, y in out.edges), out.n_all, out.n_short,
                       out.stretch_complete)
    if isinstance(out, SaturatedFlow):
        flow = PathFlow(tuple((y, x, a) for x, y, a in out.flow.paths))
        return SaturatedFlow(flow, out.observed, out.flow_edges, out.pi)
    return out


def matching_cover(u: np.ndarray, emb: Embedding, graph: Graph, cfg: MatchingConfig
                   ) -> MatchingOutcome:
    """Skew-symmetric Matching: the result for -u is exactly the edge reversal of the one for u."""
    ustar, flipped = canonical_sign(u)
    out = matching(ustar, emb, graph, cfg)
    return reverse_outcome(out) if flipped else out


def matching_size_estimate(emb: Embedding, graph: Graph, cfg: MatchingConfig, trials: int,
                           rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo (E_u |Matching(u)| / n, Pr[oracle terminates]) over u ~ N(0, I_d).

    Terminating calls count as empty matchings.
    """
    if trials < 30:
        raise ValueError("need at least 30 trials")
    total, terminated = 0, 0
    for _ in range(trials):
        out = matching_cover(rng.standard_normal(emb.d), emb, graph, cfg)
        if isinstance(out, Matched):
            total += len(out)
        else:
            terminated += 1
    return total / (trials * emb.n), terminated / trials
