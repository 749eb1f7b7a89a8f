"""Seeded Gaussian directions, omega-correlated chains, regular directions, and the
Monte Carlo check of Gaussian measure concentration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

# stream tags, so that different phases of one run never share random numbers
PHASE_SKETCH = 1
PHASE_HARVEST = 2
PHASE_ESTIMATE = 3
PHASE_MISC = 4


def rng_stream(seed: int, *index: int) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, index...)``.

    Philox is counter based and ``SeedSequence`` spawn keys give statistically
    independent streams, so a worker's draws do not depend on scheduling.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


def sample_gaussian(d: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be positive")
    return rng.standard_normal(d)


def correlate(u: np.ndarray, omega: float, rng: np.random.Generator) -> np.ndarray:
    """omega-correlated copy: independent components with mean omega*u_i, variance 1-omega^2."""
    if not 0 <= omega < 1:
        raise ValueError("omega must lie in [0, 1)")
    u = np.asarray(u, dtype=float)
    return omega * u + math.sqrt(1.0 - omega * omega) * rng.standard_normal(u.shape)


def chain(u1: np.ndarray, omega: float, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """(u1, u2 ~ u1, ..., uk ~ u_{k-1}) with each step an omega-correlated copy."""
    if k < 1:
        raise ValueError("chain length must be positive")
    out = [np.asarray(u1, dtype=float)]
    for _ in range(k - 1):
        out.append(correlate(out[-1], omega, rng))
    return out


def _unit_differences(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    a, b = np.triu_indices(len(points), k=1)
    diff = points[b] - points[a]
    norm = np.linalg.norm(diff, axis=1)
    keep = norm > 0  # coincident nodes are the same point
    return diff[keep] / norm[keep, None]


def regularity_threshold(n: int) -> float:
    return math.sqrt(6.0 * math.log(n)) if n > 1 else 0.0


def is_regular(u: np.ndarray, points: np.ndarray) -> bool:
    """True iff <y - x, u> < sqrt(6 ln n) ||y - x|| for every ordered pair of distinct points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.asarray(u, dtype=float)
    if points.shape[1] != u.shape[0]:
        raise ValueError("direction and points differ in dimension")
    units = _unit_differences(points)
    if len(units) == 0:
        return True
    # both orientations of each pair: compare |<unit, u>|
    return bool(np.abs(units @ u).max() < regularity_threshold(len(points)))


def irregular_fraction(points: np.ndarray, n_directions: int, rng: np.random.Generator,
                       batch: int = 2000) -> float:
    """Fraction of Gaussian directions that are not regular for ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    units = _unit_differences(points)
    thr = regularity_threshold(len(points))
    bad = 0
    done = 0
    while done < n_directions:
        k = min(batch, n_directions - done)
        U = rng.standard_normal((points.shape[1], k))
        if len(units):
            bad += int((np.abs(units @ U).max(axis=0) >= thr).sum())
        done += k
    return bad / n_directions


@dataclass(frozen=True)
class ConcentrationEstimate:
    omega: float
    delta: float
    trials: int
    estimate: float
    stderr: float
    bound: float  # delta ** (2 / (1 - omega))

    @property
    def holds(self) -> bool:
        return self.estimate >= self.bound - 3 * self.stderr


def normal_quantile(delta: float) -> float:
    return float(stats.norm.ppf(delta))


def concentration_estimate(omega: float, delta: float, d: int, trials: int,
                           rng: np.random.Generator) -> ConcentrationEstimate:
    """Estimate Pr[(u, u') in A x B] for (u, u') ~ N_omega, with A = B = {u : u_1 <= q_delta}."""
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    q = normal_quantile(delta)
    u = rng.standard_normal((trials, d))
    v = correlate(u, omega, rng)
    hits = (u[:, 0] <= q) & (v[:, 0] <= q)
    p = float(hits.mean())
    stderr = math.sqrt(max(p * (1 - p), 1.0 / trials) / trials)
    return ConcentrationEstimate(omega, delta, trials, p, stderr, delta ** (2.0 / (1.0 - omega)))


def merge_by_bits(bits: Sequence[int], correlated: Sequence[np.ndarray],
                  independent: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Interleave two direction sequences: slot i takes the next correlated one iff bits[i] == 1."""
    ci, ii = iter(correlated), iter(independent)
    return [next(ci) if b else next(ii) for b in bits]
