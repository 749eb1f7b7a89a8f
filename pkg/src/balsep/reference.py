"""Brute-force ground truth for tiny instances.

Everything here enumerates or eigendecomposes densely, so the guards are hard errors:
these functions define the expected values other modules are tested against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats

from .graph import Graph

MAX_ST_CUT_NODES = 16
MAX_SEPARATOR_NODES = 20
MAX_DENSE_EXP = 64


def brute_force_min_st_cut(graph: Graph, s: int, t: int) -> tuple[float, frozenset[int]]:
    """Minimum s-t cut by enumerating every S with s in S and t not in S."""
    n = graph.n
    if n > MAX_ST_CUT_NODES:
        raise ValueError(f"brute-force s-t cut limited to n <= {MAX_ST_CUT_NODES}")
    if s == t:
        raise ValueError("s and t must differ")
    others = [v for v in range(n) if v not in (s, t)]
    i, j, w = graph.arrays
    best, best_side = math.inf, None
    for mask in range(1 << len(others)):
        inside = np.zeros(n, dtype=bool)
        inside[s] = True
        for b, v in enumerate(others):
            if mask >> b & 1:
                inside[v] = True
        val = float(w[inside[i] != inside[j]].sum()) if graph.m else 0.0
        if val < best:
            best, best_side = val, frozenset(np.flatnonzero(inside).tolist())
    return best, best_side


def brute_force_balanced_separator(graph: Graph, c: float, reverse: bool = False
                                   ) -> tuple[float, frozenset[int]]:
    """Exact minimum cut over all S with min(|S|, n - |S|) >= c n.

    Node n-1 is kept outside S so each bipartition is visited once. ``reverse`` walks
    the subsets in the opposite order; the optimum value does not depend on it.
    """
    n = graph.n
    if n > MAX_SEPARATOR_NODES:
        raise ValueError(f"brute-force separator limited to n <= {MAX_SEPARATOR_NODES}")
    lo = max(1, math.ceil(c * n - 1e-12))
    if c > 0.5 or n < 2 or lo > n // 2:
        raise ValueError(f"no {c}-balanced cut exists for n={n}")
    i, j, w = graph.arrays
    masks = np.arange(1, 1 << (n - 1), dtype=np.int64)
    if reverse:
        masks = masks[::-1]
    best, best_side = math.inf, None
    for chunk in np.array_split(masks, max(1, len(masks) // 65536)):
        inside = ((chunk[:, None] >> np.arange(n - 1)) & 1).astype(bool)
        inside = np.hstack([inside, np.zeros((len(chunk), 1), dtype=bool)])
        k = inside.sum(axis=1)
        ok = np.minimum(k, n - k) >= lo
        if not ok.any():
            continue
        inside = inside[ok]
        vals = (inside[:, i] != inside[:, j]).astype(float) @ w if graph.m else np.zeros(len(inside))
        a = int(np.argmin(vals))
        if vals[a] < best:
            best, best_side = float(vals[a]), frozenset(np.flatnonzero(inside[a]).tolist())
    return best, best_side


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise ValueError("matrix must be symmetric")
    return 0.5 * (A + A.T)


def dense_expm(A: np.ndarray) -> np.ndarray:
    """exp(A) for symmetric A by eigendecomposition."""
    A = _check_symmetric(A)
    lam, Q = np.linalg.eigh(A)
    return (Q * np.exp(lam - lam.max())) @ Q.T * np.exp(lam.max())


def dense_gram_exp(A: np.ndarray) -> np.ndarray:
    """X = n exp(A) / Tr(exp(A)), computed shift-invariantly so large norms do not overflow."""
    A = _check_symmetric(A)
    n = A.shape[0]
    if n > MAX_DENSE_EXP:
        raise ValueError(f"dense exponential limited to n <= {MAX_DENSE_EXP}")
    lam, Q = np.linalg.eigh(A)
    e = np.exp(lam - lam.max())
    X = (Q * e) @ Q.T
    X = 0.5 * (X + X.T)
    return n * X / np.trace(X)


def gram_vectors(X: np.ndarray) -> np.ndarray:
    """Columns v_i with V^T V = X for PSD X (tiny negative eigenvalues clipped)."""
    lam, Q = np.linalg.eigh(X)
    return (Q * np.sqrt(np.clip(lam, 0, None))).T


def spectral_norm(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(_check_symmetric(A)))))


def bivariate_orthant(q: float, omega: float) -> float:
    """Pr[u <= q, u' <= q] for standard normals with correlation omega, by 1-D quadrature.

    Integrates phi(x) * Phi((q - omega x) / sqrt(1 - omega^2)) over x <= q.
    """
    if omega == 0:
        return float(stats.norm.cdf(q) ** 2)
    s = math.sqrt(1 - omega * omega)
    val, _ = integrate.quad(lambda x: stats.norm.pdf(x) * stats.norm.cdf((q - omega * x) / s),
                            -np.inf, q, epsabs=1e-13, epsrel=1e-11)
    return float(val)
