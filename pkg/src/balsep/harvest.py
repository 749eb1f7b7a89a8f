"""Collect node-disjoint violating paths from many independent chaining runs, and turn
them into a feedback operator."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chaining import GeneralizedMatching, GPath, Oracle, Termination, sample_paths
from .graph import Graph
from .matching import MatchingConfig, matching_cover
from .randomness import PHASE_HARVEST, rng_stream
from .sketch import Diagonal, EdgeLaplacian, Embedding, StructuredOperator


@dataclass(frozen=True)
class HarvestConfig:
    N: int
    K: int
    option: int = 2
    target: int = 1
    seed: int = 0
    stream: tuple[int, ...] = ()  # extra stream key, e.g. (alpha index, iteration, attempt)

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise ValueError("N and K must be positive")
        if self.option not in (1, 2):
            raise ValueError("option must be 1 or 2")
        if self.target < 1:
            raise ValueError("target must be at least 1")

    @property
    def h(self) -> int:
        return 0 if self.option == 1 else 3


def harvest_target(delta_hat: float, n: int, K: int, h: int) -> int:
    return max(1, math.ceil(delta_hat * n / (16 * K ** (1 + h))))


@dataclass(frozen=True)
class HarvestResult:
    paths: tuple[GPath, ...] = ()
    termination: Termination | None = None
    terminating_run: int | None = None
    run_sizes: tuple[int, ...] = ()  # |violating subpaths| per finished run
    revisits: int = 0  # composed paths that revisit a node

    @property
    def terminated(self) -> bool:
        return self.termination is not None


@dataclass
class RunOutcome:
    index: int
    violating: list[GPath] = field(default_factory=list)
    termination: Termination | None = None
    revisits: int = 0


def _one_run(i: int, emb: Embedding, cfg: HarvestConfig, delta: float, oracle: Oracle
             ) -> RunOutcome:
    rng = rng_stream(cfg.seed, PHASE_HARVEST, *cfg.stream, i)
    u1 = rng.standard_normal(emb.d)
    out = sample_paths(u1, cfg.K, oracle, rng, emb.points, delta)
    if not isinstance(out, GeneralizedMatching):
        return RunOutcome(i, termination=out)
    return RunOutcome(i, [p.violating_subpath() for p in out.violating], revisits=len(out.revisiting()))


def greedy_disjoint(paths: Sequence[GPath], used: set[int] | None = None) -> list[GPath]:
    """Scan in order; keep a path iff it shares no node with what was kept (or ``used``)."""
    used = set() if used is None else used
    kept = []
    for p in paths:
        nodes = set(p.nodes)
        if used.isdisjoint(nodes):
            kept.append(p)
            used |= nodes
    return kept


def merge_disjoint(ma: Sequence[GPath], mb: Sequence[GPath]) -> list[GPath]:
    """All of ``ma`` plus every path of ``mb`` (in order) avoiding the nodes kept so far."""
    used = {v for p in ma for v in p.nodes}
    return list(ma) + greedy_disjoint(mb, used)


def tree_merge(parts: Sequence[Sequence[GPath]]) -> list[GPath]:
    """Pairwise reduction over a fixed tree; the leaf count is padded to a power of two."""
    level = [list(p) for p in parts]
    size = 1
    while size < len(level):
        size *= 2
    level += [[] for _ in range(size - len(level))]
    while len(level) > 1:
        level = [merge_disjoint(level[k], level[k + 1]) for k in range(0, len(level), 2)]
    return level[0] if level else []


def harvest(graph: Graph, emb: Embedding, cfg: HarvestConfig, mcfg: MatchingConfig,
            workers: int = 1, oracle: Oracle | None = None) -> HarvestResult:
    """Run N independent chains and combine their violating subpaths.

    The result does not depend on ``workers``: runs use their own random streams, a
    terminating run is chosen by lowest index, and merges follow run order.
    ``oracle`` replaces Matching(u) on (graph, emb) when given.
    """
    if oracle is None:
        oracle = lambda u: matching_cover(u, emb, graph, mcfg)  # noqa: E731
    if workers <= 1:
        runs = []
        for i in range(cfg.N):
            r = _one_run(i, emb, cfg, mcfg.delta, oracle)
            runs.append(r)
            if r.termination is not None:
                break
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda i: _one_run(i, emb, cfg, mcfg.delta, oracle), range(cfg.N)))

    for r in runs:
        if r.termination is not None:
            done = runs[:r.index]
            return HarvestResult(termination=r.termination, terminating_run=r.index,
                                 run_sizes=tuple(len(x.violating) for x in done),
                                 revisits=sum(x.revisits for x in done))

    sizes = tuple(len(r.violating) for r in runs)
    revisits = sum(r.revisits for r in runs)
    if cfg.option == 1:
        kept = greedy_disjoint([p for r in runs for p in r.violating])
    else:
        parts = [greedy_disjoint(r.violating) for r in runs]
        merged = tree_merge(parts)
        # the tree only sees each run's reduced set; one more ordered pass restores
        # maximality with respect to every violating subpath that was found
        used = {v for p in merged for v in p.nodes}
        kept = merged + greedy_disjoint([p for r in runs for p in r.violating], used)
    return HarvestResult(tuple(kept), run_sizes=sizes, revisits=revisits)


@dataclass(frozen=True)
class Feedback:
    op: StructuredOperator
    rho: float
    kind: str  # "easy", "flow" or "paths"
    pi_f: float = 0.0
    pi_d: float = 0.0


def lemma1_feedback(paths: Sequence[GPath], delta: float, alpha: float, active: np.ndarray,
                    n_total: int) -> Feedback:
    """(alpha/|S|) I_S + (2 alpha / (|M| delta)) (F - D) for violating paths M.

    F holds each hop of each path with unit weight, D joins each path's two endpoints.
    """
    if not paths:
        raise ValueError("need at least one violating path")
    n = len(active)
    f = 2 * alpha / (len(paths) * delta)
    hops = [(a, b, 1.0) for p in paths for a, b in zip(p.nodes, p.nodes[1:])]
    ends = [(p.start, p.end, 1.0) for p in paths]
    F = EdgeLaplacian.from_edges(hops, f)
    D = EdgeLaplacian.from_edges(ends, -f)
    pi_f = float(F.weighted_degrees(n_total).max())  # unit multiplicities, scale excluded
    pi_d = float(D.weighted_degrees(n_total).max())
    y = np.zeros(n_total)
    y[active] = alpha / n
    op = StructuredOperator(n_total, [Diagonal(y), F, D])
    rho = alpha / n + 4 * alpha * (pi_f + pi_d) / (len(paths) * delta)
    return Feedback(op, rho, "paths", pi_f, pi_d)
