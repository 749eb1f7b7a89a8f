"""Generalized matchings: composition, violating subpaths, truncation, and the two
ways of chaining Matching calls along correlated Gaussian directions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .matching import CutFound, Matched, MatchingOutcome, SaturatedFlow
from .randomness import chain, merge_by_bits

Termination = Union[CutFound, SaturatedFlow]


@dataclass(frozen=True)
class GPath:
    nodes: tuple[int, ...]
    violating: bool = False
    span: tuple[int, int] | None = None  # (start, end) indices of a certifying subpath

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def end(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    def violating_subpath(self) -> "GPath":
        s, e = self.span
        return GPath(self.nodes[s:e + 1], True, (0, e - s))

    def reversed(self) -> "GPath":
        span = None if self.span is None else (self.hops - self.span[1], self.hops - self.span[0])
        return GPath(self.nodes[::-1], self.violating, span)


@dataclass(frozen=True)
class GeneralizedMatching:
    paths: tuple[GPath, ...] = ()

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    @property
    def violating(self) -> list[GPath]:
        return [p for p in self.paths if p.violating]

    @property
    def nonviolating(self) -> list[GPath]:
        return [p for p in self.paths if not p.violating]

    def degrees_ok(self) -> bool:
        starts = [p.start for p in self.paths]
        ends = [p.end for p in self.paths]
        return len(set(starts)) == len(starts) and len(set(ends)) == len(ends)

    def revisiting(self) -> list[GPath]:
        """Paths that pass through some node twice (allowed, reported for diagnostics)."""
        return [p for p in self.paths if len(set(p.nodes)) < len(p.nodes)]


def detect_violating(nodes: Sequence[int], points: np.ndarray, delta: float
                     ) -> tuple[int, int] | None:
    """First contiguous (s, e), e > s, ordered by s then e, with
    sum_{j=s+1..e} ||q_j - q_{j-1}||^2 <= ||q_e - q_s||^2 - delta."""
    q = points[list(nodes)]
    if len(q) < 2:
        return None
    step = q[1:] - q[:-1]
    hop = np.einsum("ij,ij->i", step, step)
    for s in range(len(q) - 1):
        acc = np.cumsum(hop[s:])
        diff = q[s + 1:] - q[s]
        direct = np.einsum("ij,ij->i", diff, diff)
        hit = np.flatnonzero(acc <= direct - delta)
        if len(hit):
            return s, s + 1 + int(hit[0])
    return None


def make_path(nodes: Sequence[int], points: np.ndarray, delta: float) -> GPath:
    span = detect_violating(nodes, points, delta)
    return GPath(tuple(int(x) for x in nodes), span is not None, span)


def from_matching(m: Matched, points: np.ndarray, delta: float) -> GeneralizedMatching:
    return GeneralizedMatching(tuple(make_path((x, y), points, delta) for x, y in m.edges))


def compose(m1: GeneralizedMatching, m2: GeneralizedMatching, points: np.ndarray, delta: float
            ) -> GeneralizedMatching:
    """{(p, x, q) : (p, x) in m1, (x, q) in m2}; the joined path's status is recomputed."""
    by_start = {q.start: q for q in m2.paths}
    out = []
    for p in m1.paths:
        q = by_start.get(p.end)
        if q is not None:
            out.append(make_path(p.nodes + q.nodes[1:], points, delta))
    return GeneralizedMatching(tuple(out))


def truncate(m: GeneralizedMatching, u: np.ndarray, sigma: float, points: np.ndarray
             ) -> GeneralizedMatching:
    """Keep violating paths, and nonviolating (x, ..., y) with <y - x, u> >= sigma."""
    keep = [p for p in m.paths
            if p.violating or float((points[p.end] - points[p.start]) @ u) >= sigma]
    return GeneralizedMatching(tuple(keep))


Oracle = Callable[[np.ndarray], MatchingOutcome]


def _compose_sequence(directions: Sequence[np.ndarray], oracle: Oracle, points: np.ndarray,
                      delta: float) -> GeneralizedMatching | Termination:
    acc = None
    for u in directions:
        out = oracle(u)
        if not isinstance(out, Matched):
            return out
        gm = from_matching(out, points, delta)
        acc = gm if acc is None else compose(acc, gm, points, delta)
    return acc


def sample_paths(u1: np.ndarray, K: int, oracle: Oracle, rng: np.random.Generator,
                 points: np.ndarray, delta: float) -> GeneralizedMatching | Termination:
    """Matching(u_1) o ... o Matching(u_K) along a chain with omega = 1 - 1/K.

    A Matching call that terminates the oracle (cut or saturated flow) ends the chain
    and is returned as is.
    """
    if K < 1:
        raise ValueError("K must be positive")
    omega = 1.0 - 1.0 / K
    return _compose_sequence(chain(u1, omega, K, rng), oracle, points, delta)


def sample_paths_sherman(u1: np.ndarray, bits: Sequence[int], oracle: Oracle,
                         rng: np.random.Generator, points: np.ndarray, delta: float
                         ) -> GeneralizedMatching | Termination:
    """Chaining with a 0/1 pattern: 1-slots follow a correlated chain from u1 with
    omega = 1 - 1/k (k = number of ones), 0-slots get fresh independent directions."""
    bits = [int(b) for b in bits]
    if not bits:
        raise ValueError("bit string must be nonempty")
    k = sum(bits)
    correlated = chain(u1, 1.0 - 1.0 / k, k, rng) if k else []
    independent = [rng.standard_normal(len(u1)) for _ in range(len(bits) - k)]
    return _compose_sequence(merge_by_bits(bits, correlated, independent), oracle, points, delta)
