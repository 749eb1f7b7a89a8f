"""Matrix multiplicative weights loop, the oracle that feeds it, the parameter schedule,
and the threshold search that turns it into a balanced-separator solver."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .graph import Cut, Graph, make_cut
from .harvest import (Feedback, HarvestConfig, harvest, harvest_target, lemma1_feedback)
from .matching import (CutFound, MatchingConfig, OraclePreconditionError, SaturatedFlow,
                       matching_size_estimate)
from .randomness import PHASE_ESTIMATE, PHASE_SKETCH, rng_stream
from .reference import dense_gram_exp
from .sketch import (CompleteSubsetLaplacian, Diagonal, EdgeLaplacian, Embedding,
                     ScaledIdentity, StructuredOperator, choose_params, exp_sketch)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- schedule

@dataclass(frozen=True)
class Schedule:
    eps_param: float
    n: int
    delta: float
    K: int
    K_raw: float  # A * delta * ln n before rounding up to a power of two
    A: float = 1.0
    B: float = 1.0

    @property
    def omega(self) -> float:
        return 1.0 - 1.0 / self.K

    @property
    def clamped(self) -> bool:
        """True when A delta ln n < 1 and K was held at 1."""
        return self.K_raw < 1


def next_pow2(z: float) -> int:
    if z <= 1:
        return 1
    return 2 ** math.ceil(math.log2(z))


def make_schedule(eps_param: float, n: int, A: float = 1.0, B: float = 1.0) -> Schedule:
    if n < 2:
        raise ValueError("need at least two nodes")
    if eps_param <= 0 or A <= 0 or B <= 0:
        raise ValueError("eps_param, A and B must be positive")
    ln = math.log(n)
    delta = B * math.sqrt(eps_param / ln)
    k_raw = A * delta * ln
    if k_raw < 1:
        log.warning("A*delta*ln n = %.3g < 1; chain length K held at 1", k_raw)
    return Schedule(eps_param, n, delta, next_pow2(k_raw), k_raw, A, B)


def mw_step_size(eps: float, rho: float, n: int) -> float:
    return eps / (2 * rho * rho * n)


def mw_iterations(eps: float, rho: float, n: int) -> int:
    return math.ceil(4 * rho * rho * n * n * math.log(n) / (eps * eps))


# ---------------------------------------------------------------- oracle pieces

def balance_factor(c: float) -> float:
    return 3 * c - 4 * c * c


def restrict_to_S(emb: Embedding) -> tuple[np.ndarray, Embedding]:
    """Nodes whose squared norm is at most 2; at least half of them when the trace is n."""
    S = np.flatnonzero(emb.sq_norms() <= 2.0)
    if 2 * len(S) < emb.n_total:
        raise RuntimeError(f"only {len(S)} of {emb.n_total} nodes have squared norm <= 2; "
                           "the embedding is not trace-normalized")
    return S, emb.restricted(S)


def spread(points: np.ndarray) -> float:
    """sum_{i<j} ||v_i - v_j||^2 via |S| sum ||v_i||^2 - ||sum v_i||^2."""
    total = points.sum(axis=0)
    return float(len(points) * np.einsum("ij,ij->", points, points) - total @ total)


def easy_case_check(emb_S: Embedding, a: float, alpha: float, n_orig: int) -> Feedback | None:
    S = emb_S.active
    if spread(emb_S.active_points) >= a * n_orig ** 2 / 4:
        return None
    z = 2 * alpha / (a * n_orig ** 2)
    op = StructuredOperator(n_orig, [ScaledIdentity(-alpha / n_orig), CompleteSubsetLaplacian(S, z)])
    rho = alpha / n_orig + z * len(S)
    return Feedback(op, rho, "easy")


def flow_feedback(sat: SaturatedFlow, alpha: float, active: np.ndarray, n_total: int) -> Feedback:
    """(alpha/|S|) I_S - D, D the Laplacian of the routed demands."""
    demands = sat.flow.demands()
    if not demands:
        raise ValueError("flow carries no demands")
    y = np.zeros(n_total)
    y[active] = alpha / len(active)
    D = EdgeLaplacian.from_edges([(x, yy, d) for (x, yy), d in sorted(demands.items())], -1.0)
    rho = alpha / len(active) + 2 * sat.pi
    return Feedback(StructuredOperator(n_total, [Diagonal(y), D]), rho, "flow")


def flow_capacity_gap(graph: Graph, sat: SaturatedFlow) -> np.ndarray:
    """Edge weights of C - F, where F is the Laplacian of |flow| on graph edges."""
    return np.array([w - f for (_, _, w), (_, _, f) in zip(graph.edges, sat.flow_edges)])


# ---------------------------------------------------------------- solver config

@dataclass(frozen=True)
class SolverConfig:
    c: float = 0.25
    eps_param: float = 0.1
    c_prime: float = 1 / 32
    sigma: float = 0.05
    A: float = 1.0
    B: float = 1.0
    option: int = 2
    n_runs: int | None = None  # harvest runs; default max(4, ceil(n^eps / K))
    max_retries: int = 8
    max_iterations: int = 10_000
    strict: bool = False
    max_dim: int | None = 128
    estimate_trials: int = 30
    exact_check_max_n: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.c < 0.5:
            raise ValueError("c must lie in (0, 1/2)")
        if self.option not in (1, 2):
            raise ValueError("option must be 1 or 2")
        if self.max_iterations < 1 or self.max_retries < 1:
            raise ValueError("iteration and retry caps must be positive")


def runs_per_harvest(cfg: SolverConfig, n: int, K: int) -> int:
    if cfg.n_runs is not None:
        return cfg.n_runs
    return max(4, math.ceil(n ** cfg.eps_param / K))


def width_budget(alpha: float, n: int, schedule: Schedule, cfg: SolverConfig, target: int) -> float:
    """Largest width any accepted feedback operator may have, fixed before the loop."""
    a = balance_factor(cfg.c)
    n_min = math.ceil(n / 2)
    easy = alpha / n + 2 * alpha / (a * n)
    pi = 6 * alpha / (cfg.c_prime * n_min * schedule.delta)
    flow = alpha / n_min + 2 * pi
    rho = max(easy, flow)
    if schedule.K >= 2:
        # node-disjoint paths: hop degree <= 2, endpoint degree <= 1
        rho = max(rho, alpha / n_min + 12 * alpha / (target * schedule.delta))
    return rho


# ---------------------------------------------------------------- oracle

@dataclass
class Tally:
    easy: int = 0
    flow: int = 0
    paths: int = 0
    harvests: int = 0
    width_rejections: int = 0
    unverified: int = 0
    max_width: float = 0.0


@dataclass(frozen=True)
class OracleStep:
    feedback: Feedback | None = None
    cut: CutFound | None = None
    failure: str | None = None


def oracle_step(graph: Graph, emb: Embedding, schedule: Schedule, mcfg: MatchingConfig,
                hcfg: HarvestConfig, cfg: SolverConfig, rho_budget: float, tally: Tally,
                workers: int = 1) -> OracleStep:
    n = graph.n
    S, emb_S = restrict_to_S(emb)
    easy = easy_case_check(emb_S, balance_factor(cfg.c), mcfg.alpha, n)
    if easy is not None:
        tally.easy += 1
        return OracleStep(feedback=easy)
    for attempt in range(cfg.max_retries):
        h = HarvestConfig(hcfg.N, hcfg.K, hcfg.option, hcfg.target, hcfg.seed,
                          hcfg.stream + (attempt,))
        tally.harvests += 1
        try:
            res = harvest(graph, emb_S, h, mcfg, workers)
        except OraclePreconditionError as exc:
            return OracleStep(failure=str(exc))
        if isinstance(res.termination, CutFound):
            return OracleStep(cut=res.termination)
        if isinstance(res.termination, SaturatedFlow):
            tally.flow += 1
            return OracleStep(feedback=flow_feedback(res.termination, mcfg.alpha, S, n))
        if len(res.paths) >= hcfg.target:
            fb = lemma1_feedback(res.paths, mcfg.delta, mcfg.alpha, S, n)
            if fb.rho <= rho_budget:
                tally.paths += 1
                return OracleStep(feedback=fb)
            tally.width_rejections += 1
    return OracleStep(failure=f"no feedback after {cfg.max_retries} harvests")


# ---------------------------------------------------------------- MW loop

@dataclass(frozen=True)
class BalancedCut:
    cut: Cut


@dataclass(frozen=True)
class LowerBound:
    alpha: float
    eps: float

    @property
    def implied_opt_bound(self) -> float:
        return (self.alpha - self.eps) / 4


@dataclass(frozen=True)
class Inconclusive:
    reason: str


SolveResult = Union[BalancedCut, LowerBound, Inconclusive]


@dataclass
class AlphaRun:
    alpha: float
    result: SolveResult
    iterations: int
    T: int
    rho: float
    eta: float
    delta_hat: float
    target: int
    d: int
    dim_capped: bool
    tally: Tally = field(default_factory=Tally)
    seconds: float = 0.0

    def to_dict(self, timings: bool = False) -> dict:
        r = self.result
        out = {
            "alpha": self.alpha,
            "outcome": {BalancedCut: "cut", LowerBound: "lower_bound",
                        Inconclusive: "inconclusive"}[type(r)],
            "iterations": self.iterations,
            "T": self.T,
            "rho": self.rho,
            "eta": self.eta,
            "delta_hat": self.delta_hat,
            "target": self.target,
            "sketch_dim": self.d,
            "sketch_dim_capped": self.dim_capped,
            "tally": asdict(self.tally),
        }
        if isinstance(r, BalancedCut):
            out["cut_value"] = r.cut.value
        elif isinstance(r, LowerBound):
            out["lower_bound"] = r.implied_opt_bound
        else:
            out["reason"] = r.reason
        if timings:
            out["seconds"] = self.seconds
        return out


def _dense_dot(op: StructuredOperator, X: np.ndarray) -> float:
    return float(np.einsum("ij,ij->", op.dense(), X))


def mw_solve_for_alpha(graph: Graph, alpha: float, schedule: Schedule, cfg: SolverConfig,
                       alpha_index: int = 0, workers: int = 1) -> AlphaRun:
    """Run the MW loop at threshold alpha with eps = alpha/2.

    A lower bound is claimed only after the full T iterations; with ``strict`` off the
    loop stops at ``max_iterations`` and the result is inconclusive instead. On small
    graphs every feedback operator is also checked against the exact X; a failed check
    makes a lower bound at this alpha unclaimable.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    start = time.perf_counter()
    n = graph.n
    eps = alpha / 2
    a = balance_factor(cfg.c)
    mcfg = MatchingConfig(alpha, schedule.delta, cfg.c_prime, cfg.sigma)
    K = schedule.K
    h = 0 if cfg.option == 1 else 3

    # delta_hat on the starting embedding X = I
    d0 = choose_params(n, alpha, mcfg.pi(n), schedule.delta, K, a, lam=0.0,
                       max_dim=cfg.max_dim)
    emb0 = exp_sketch(StructuredOperator(n), d0, rng_stream(cfg.seed, PHASE_ESTIMATE, alpha_index, 0))
    delta_hat, _ = matching_size_estimate(emb0, graph, mcfg, cfg.estimate_trials,
                                          rng_stream(cfg.seed, PHASE_ESTIMATE, alpha_index, 1))
    target = harvest_target(delta_hat, n, K, h)

    rho = width_budget(alpha, n, schedule, cfg, target)
    eta = mw_step_size(eps, rho, n)
    T = mw_iterations(eps, rho, n)
    cap = T if cfg.strict else min(T, cfg.max_iterations)
    N = runs_per_harvest(cfg, n, K)
    exact = n <= cfg.exact_check_max_n

    tally = Tally()
    history = StructuredOperator(n)
    d_used, capped = d0.d, False
    result: SolveResult | None = None
    t = 0
    while t < cap:
        A_t = history.scaled(eta)
        lam = A_t.norm_bound()
        params = choose_params(n, alpha, mcfg.pi(math.ceil(n / 2)), schedule.delta, K, a,
                               lam=lam, max_dim=cfg.max_dim)
        uncapped = choose_params(n, alpha, mcfg.pi(math.ceil(n / 2)), schedule.delta, K, a,
                                 lam=lam).d
        d_used, capped = params.d, capped or params.d < uncapped
        emb = exp_sketch(A_t, params, rng_stream(cfg.seed, PHASE_SKETCH, alpha_index, t))
        hcfg = HarvestConfig(N, K, cfg.option, target, cfg.seed, (alpha_index, t))
        step = oracle_step(graph, emb, schedule, mcfg, hcfg, cfg, rho, tally, workers)
        t += 1
        if step.cut is not None:
            result = BalancedCut(step.cut.cut)
            break
        if step.failure is not None:
            result = Inconclusive(f"oracle failed at iteration {t}: {step.failure}")
            break
        fb = step.feedback
        tally.max_width = max(tally.max_width, fb.rho)
        if exact and _dense_dot(fb.op, dense_gram_exp(A_t.dense())) > 1e-9 * max(1.0, alpha):
            tally.unverified += 1
        history = (history + fb.op).coalesce()

    if result is None:
        if t < T:
            result = Inconclusive(f"iteration cap {cap} reached before T = {T}")
        elif tally.unverified:
            result = Inconclusive(f"{tally.unverified} feedback steps failed the exact check")
        else:
            result = LowerBound(alpha, eps)
    return AlphaRun(alpha, result, t, T, rho, eta, delta_hat, target, d_used, capped, tally,
                    time.perf_counter() - start)


# ---------------------------------------------------------------- threshold search

def alpha_grid(graph: Graph, delta: float) -> list[float]:
    """Doubling alphas whose cut thresholds 6 alpha / delta run from the lightest edge
    weight to just above the total weight, where the cut test fires for any A, B."""
    w_min = min(e[2] for e in graph.edges if e[2] > 0)
    grid = [w_min * delta / 6]
    while 6 * grid[-1] / delta <= graph.total_weight:
        grid.append(grid[-1] * 2)
    return grid


@dataclass
class SolveReport:
    status: str  # "cut" or "inconclusive"
    cut: Cut | None
    lower_bound: float | None  # best certified (alpha - eps) / 4
    runs: list[AlphaRun]
    schedule: Schedule
    config: SolverConfig
    grid: list[float]

    @property
    def ratio(self) -> float | None:
        if self.cut is None or not self.lower_bound:
            return None
        return self.cut.value / self.lower_bound

    def to_dict(self, timings: bool = False) -> dict:
        cut = None
        if self.cut is not None:
            side = sorted(self.cut.side)
            other = sorted(self.cut.complement())
            if len(other) < len(side) or (len(other) == len(side) and other < side):
                side = other
            cut = {
                "side": side,
                "value": self.cut.value,
                "balance": self.cut.balance,
                "expansion": self.cut.expansion,
                "c_balanced": self.cut.is_balanced(self.config.c),
                "c_prime_balanced": self.cut.is_balanced(self.config.c_prime),
            }
        sch = self.schedule
        return {
            "status": self.status,
            "n": sch.n,
            "cut": cut,
            "lower_bound": self.lower_bound,
            "ratio": self.ratio,
            "schedule": {"eps_param": sch.eps_param, "delta": sch.delta, "K": sch.K,
                         "K_raw": sch.K_raw, "K_clamped": sch.clamped, "A": sch.A, "B": sch.B},
            "config": asdict(self.config),
            "alpha_grid": self.grid,
            "alphas": [r.to_dict(timings) for r in self.runs],
        }


def trivial_cut(graph: Graph) -> Cut:
    return make_cut(graph, range(graph.n // 2))


def solve_balanced_separator(graph: Graph, cfg: SolverConfig = SolverConfig(),
                             workers: int = 1) -> SolveReport:
    """Binary search over a doubling alpha grid for the smallest alpha whose MW run ends in a cut."""
    if graph.n < 2:
        raise ValueError("need at least two nodes")
    schedule = make_schedule(cfg.eps_param, graph.n, cfg.A, cfg.B)
    if not any(e[2] > 0 for e in graph.edges):
        return SolveReport("cut", trivial_cut(graph), None, [], schedule, cfg, [])
    grid = alpha_grid(graph, schedule.delta)
    done: dict[int, AlphaRun] = {}

    def run(i: int) -> AlphaRun:
        if i not in done:
            done[i] = mw_solve_for_alpha(graph, grid[i], schedule, cfg, i, workers)
        return done[i]

    lo, hi = 0, len(grid) - 1
    if not isinstance(run(hi).result, BalancedCut):
        hi = len(grid)  # no cut anywhere we looked; search the rest for lower bounds
    while lo < hi:
        mid = (lo + hi) // 2
        if isinstance(run(mid).result, BalancedCut):
            hi = mid
        else:
            lo = mid + 1

    runs = [done[i] for i in sorted(done)]
    cuts = [r.result.cut for r in runs if isinstance(r.result, BalancedCut)]
    # c-balanced cuts first, then the lightest
    best = min(cuts, key=lambda c: (not c.is_balanced(cfg.c), c.value, sorted(c.side))) if cuts else None
    bounds = [r.result.implied_opt_bound for r in runs if isinstance(r.result, LowerBound)]
    return SolveReport("cut" if best else "inconclusive", best, max(bounds) if bounds else None,
                       runs, schedule, cfg, grid)
