"""Structured symmetric operators and Gram sketches of n exp(A) / Tr(exp(A)).

Operators are kept as sums of cheap terms (identity, diagonal, weighted edge Laplacians,
complete-subset Laplacians) so a matrix-vector product costs O(n + edges). The sketch
applies exp(A/2) to a block of Gaussian vectors with a truncated Taylor series, which
needs nothing but those products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np
import scipy.sparse as sp

TAYLOR_TOL = 1e-6


@dataclass(frozen=True)
class ScaledIdentity:
    s: float


@dataclass(frozen=True)
class Diagonal:
    y: np.ndarray


@dataclass(frozen=True)
class EdgeLaplacian:
    """scale * sum_e w_e (e_i - e_j)(e_i - e_j)^T; weights may be signed after merging."""

    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    scale: float = 1.0

    @classmethod
    def from_edges(cls, edges: Sequence[tuple[int, int, float]], scale: float = 1.0) -> "EdgeLaplacian":
        if len(edges) == 0:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z, np.zeros(0), scale)
        i, j, w = zip(*edges)
        return cls(np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64),
                   np.asarray(w, dtype=float), float(scale))

    def weighted_degrees(self, n: int) -> np.ndarray:
        aw = np.abs(self.w)
        return np.bincount(self.i, aw, minlength=n) + np.bincount(self.j, aw, minlength=n)


@dataclass(frozen=True)
class CompleteSubsetLaplacian:
    """scale * Laplacian of the complete graph on ``nodes`` (the K_S matrix)."""

    nodes: np.ndarray
    scale: float = 1.0


Term = Union[ScaledIdentity, Diagonal, EdgeLaplacian, CompleteSubsetLaplacian]


class StructuredOperator:
    """Lazily evaluated symmetric n x n matrix given as a sum of structured terms."""

    def __init__(self, n: int, terms: Sequence[Term] = ()):
        self.n = int(n)
        self.terms = list(terms)
        for t in self.terms:
            if isinstance(t, Diagonal) and len(t.y) != self.n:
                raise ValueError("diagonal term has wrong length")

    def __repr__(self):
        kinds = ", ".join(type(t).__name__ for t in self.terms)
        return f"StructuredOperator(n={self.n}, terms=[{kinds}])"

    def __add__(self, other: "StructuredOperator") -> "StructuredOperator":
        if other.n != self.n:
            raise ValueError("operator sizes differ")
        return StructuredOperator(self.n, self.terms + other.terms)

    def scaled(self, c: float) -> "StructuredOperator":
        out = []
        for t in self.terms:
            if isinstance(t, ScaledIdentity):
                out.append(ScaledIdentity(c * t.s))
            elif isinstance(t, Diagonal):
                out.append(Diagonal(c * t.y))
            elif isinstance(t, EdgeLaplacian):
                out.append(EdgeLaplacian(t.i, t.j, t.w, c * t.scale))
            else:
                out.append(CompleteSubsetLaplacian(t.nodes, c * t.scale))
        return StructuredOperator(self.n, out)

    def coalesce(self) -> "StructuredOperator":
        """Equivalent operator with at most one identity, diagonal and edge term,
        and one subset term per distinct node set."""
        s = 0.0
        diag = None
        edges: dict[tuple[int, int], float] = {}
        subsets: dict[tuple[int, ...], float] = {}
        for t in self.terms:
            if isinstance(t, ScaledIdentity):
                s += t.s
            elif isinstance(t, Diagonal):
                diag = t.y.copy() if diag is None else diag + t.y
            elif isinstance(t, EdgeLaplacian):
                for a, b, w in zip(t.i.tolist(), t.j.tolist(), (t.scale * t.w).tolist()):
                    key = (a, b) if a < b else (b, a)
                    edges[key] = edges.get(key, 0.0) + w
            else:
                key = tuple(sorted(int(x) for x in t.nodes))
                subsets[key] = subsets.get(key, 0.0) + t.scale
        terms: list[Term] = []
        if s != 0.0:
            terms.append(ScaledIdentity(s))
        if diag is not None and np.any(diag):
            terms.append(Diagonal(diag))
        edges = {k: w for k, w in edges.items() if w != 0.0}
        if edges:
            terms.append(EdgeLaplacian.from_edges([(a, b, w) for (a, b), w in sorted(edges.items())]))
        for key, c in sorted(subsets.items()):
            if c != 0.0:
                terms.append(CompleteSubsetLaplacian(np.array(key, dtype=np.int64), c))
        return StructuredOperator(self.n, terms)

    @cached_property
    def _sparse_edges(self) -> list[sp.csr_matrix]:
        mats = []
        for t in self.terms:
            if isinstance(t, EdgeLaplacian) and len(t.w):
                w = t.scale * t.w
                rows = np.concatenate([t.i, t.j, t.i, t.j])
                cols = np.concatenate([t.i, t.j, t.j, t.i])
                data = np.concatenate([w, w, -w, -w])
                mats.append(sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n)))
        return mats

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """A @ v for a vector (n,) or a block of column vectors (n, k)."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: operator is {self.n}, vector is {v.shape[0]}")
        out = np.zeros_like(v)
        for t in self.terms:
            if isinstance(t, ScaledIdentity):
                out += t.s * v
            elif isinstance(t, Diagonal):
                out += t.y[:, None] * v if v.ndim == 2 else t.y * v
            elif isinstance(t, CompleteSubsetLaplacian):
                idx = t.nodes
                if len(idx):
                    sub = v[idx]
                    out[idx] += t.scale * (len(idx) * sub - sub.sum(axis=0))
        for L in self._sparse_edges:
            out += L @ v
        return out

    __matmul__ = matvec

    def dense(self) -> np.ndarray:
        """Explicit matrix, expanded term by term (small n only)."""
        M = np.zeros((self.n, self.n))
        for t in self.terms:
            if isinstance(t, ScaledIdentity):
                M += t.s * np.eye(self.n)
            elif isinstance(t, Diagonal):
                M += np.diag(t.y)
            elif isinstance(t, EdgeLaplacian):
                for a, b, w in zip(t.i, t.j, t.scale * t.w):
                    M[a, a] += w
                    M[b, b] += w
                    M[a, b] -= w
                    M[b, a] -= w
            else:
                idx = np.asarray(t.nodes)
                k = len(idx)
                if k:
                    M[np.ix_(idx, idx)] += t.scale * (k * np.eye(k) - np.ones((k, k)))
        return M

    def norm_bound(self) -> float:
        """Triangle-inequality bound: sum of per-term spectral norm bounds."""
        total = 0.0
        for t in self.terms:
            if isinstance(t, ScaledIdentity):
                total += abs(t.s)
            elif isinstance(t, Diagonal):
                total += float(np.abs(t.y).max()) if len(t.y) else 0.0
            elif isinstance(t, EdgeLaplacian):
                if len(t.w):
                    total += 2 * abs(t.scale) * float(t.weighted_degrees(self.n).max())
            else:
                k = len(t.nodes)
                total += abs(t.scale) * k if k > 1 else 0.0
        return total


def matvec(op: StructuredOperator, v: np.ndarray) -> np.ndarray:
    return op.matvec(v)


class NormEstimate(NamedTuple):
    estimate: float  # power iteration, a lower bound on ||op||
    upper: float  # term-wise bound


def operator_norm_estimate(op: StructuredOperator, iterations: int = 200,
                           rng: np.random.Generator | None = None) -> NormEstimate:
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(op.n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = op.matvec(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        est = max(est, nw)
        v = w / nw
    upper = op.norm_bound()
    # rounding can push the iterate a few ulps past a tight term-wise bound
    return NormEstimate(min(est, upper), upper)


@dataclass(frozen=True)
class Embedding:
    """Observed vectors: row i of ``points`` stands for node i; only ``active`` nodes are in play."""

    points: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        act = np.arange(len(pts)) if self.active is None else np.asarray(self.active, dtype=np.int64)
        object.__setattr__(self, "active", np.sort(act))

    @property
    def n_total(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return len(self.active)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def active_points(self) -> np.ndarray:
        return self.points[self.active]

    def sq_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.points, self.points)

    def restricted(self, nodes) -> "Embedding":
        return Embedding(self.points, np.asarray(sorted(nodes), dtype=np.int64))


@dataclass(frozen=True)
class SketchParams:
    gamma: float
    tau: float
    d: int
    k: int  # Taylor terms per step
    lam: float  # bound on ||A||
    steps: int = 1  # exp(A/2) = exp(A/(2 steps))^steps

    def __post_init__(self):
        if not 0 < self.gamma <= 0.5:
            raise ValueError("gamma must lie in (0, 1/2]")
        if self.tau <= 0 or self.d < 1 or self.k < 1 or self.steps < 1 or self.lam < 0:
            raise ValueError("invalid sketch parameters")


def taylor_tail_floor(b: float, tol: float = TAYLOR_TOL) -> int:
    """Smallest k with sum_{j >= k} b^j / j! <= tol, bounded by b^k / k! * e^b."""
    k, term = 0, 1.0
    while term * math.exp(b) > tol:
        k += 1
        term *= b / k
    return max(k, 1)


def required_terms(n: int, lam: float, tau: float, steps: int = 1, c_k: float = 4.0) -> int:
    """k = ceil(max(C_k lam_step^2, ln(n^{5/2}/tau))), raised to the Taylor tail floor."""
    lam_step = lam / steps
    k = math.ceil(max(c_k * lam_step ** 2, math.log(max(n, 2) ** 2.5 / tau)))
    return max(k, taylor_tail_floor(lam_step / 2))


def choose_params(n: int, alpha: float, pi: float, delta: float, K: int, a: float, *,
                  lam: float = 2.0, c_d: float = 8.0, c_k: float = 4.0,
                  step_norm: float = 2.0, max_dim: int | None = None) -> SketchParams:
    """Sketch accuracy needed by the flow test (gamma <= alpha/(20 n pi)), the path test
    (gamma <= delta/(20(K+1))) and the easy case (gamma <= 1/2, tau <= a/2)."""
    for name, val in (("n", n), ("alpha", alpha), ("pi", pi), ("delta", delta), ("K", K), ("a", a)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    gamma = min(alpha / (20 * n * pi), delta / (20 * (K + 1)), 0.5)
    tau = min(2.0, a / 2)
    d = math.ceil(c_d * math.log(max(n, 2)) / gamma ** 2)
    if max_dim is not None:
        d = min(d, int(max_dim))
    steps = max(1, math.ceil(lam / step_norm))
    k = required_terms(n, lam, tau, steps, c_k)
    return SketchParams(gamma, tau, d, k, float(lam), steps)


def taylor_expm_apply(op: StructuredOperator, Y: np.ndarray, scale: float, k: int,
                      steps: int = 1, normalize: bool = True) -> np.ndarray:
    """exp(scale * A) @ Y by ``steps`` rounds of a k-term Taylor series.

    With ``normalize`` the block is rescaled by a common scalar after each round, which
    is enough for callers that need exp(scale A) Y only up to a positive factor.
    """
    h = scale / steps
    Y = np.array(Y, dtype=float)
    for _ in range(steps):
        term = Y
        acc = Y.copy()
        for j in range(1, k):
            term = op.matvec(term) * (h / j)
            acc += term
        m = np.abs(acc).max()
        Y = acc / m if normalize and m > 0 else acc
    return Y


def exp_sketch(op: StructuredOperator, params: SketchParams, rng: np.random.Generator) -> Embedding:
    """Vectors whose Gram matrix approximates X = n exp(A) / Tr(exp(A)), with trace exactly n.

    Rows of Y = exp(A/2) G / sqrt(d) with G an n x d standard Gaussian matrix; then
    one global rescale fixes sum_i ||v_i||^2 = n.
    """
    n = op.n
    floor = required_terms(n, params.lam, params.tau, params.steps, c_k=0.0)
    if params.k < floor:
        raise ValueError(f"k={params.k} is below the floor {floor} implied by lam and tau")
    G = rng.standard_normal((n, params.d))
    Y = taylor_expm_apply(op, G, 0.5, params.k, params.steps) / math.sqrt(params.d)
    total = float(np.einsum("ij,ij->", Y, Y))
    Y *= math.sqrt(n / total)
    return Embedding(Y)
