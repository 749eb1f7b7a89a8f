"""Command-line front end: ``balsep solve|matching|harvest|concentration|bench-chaining``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .chaining import GeneralizedMatching, sample_paths, sample_paths_sherman
from .graph import GraphFormatError, read_graph
from .harvest import HarvestConfig, harvest, harvest_target
from .matching import CutFound, MatchingConfig, Matched, SaturatedFlow, matching_cover
from .mw import (BalancedCut, LowerBound, SolveReport, SolverConfig, alpha_grid, make_schedule,
                 mw_solve_for_alpha, restrict_to_S, runs_per_harvest, solve_balanced_separator)
from .randomness import PHASE_MISC, concentration_estimate, rng_stream
from .sketch import StructuredOperator, choose_params, exp_sketch

SEED_ENV = "BALSEP_SEED"
EXIT_OK, EXIT_FILE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def positive(kind):
    def parse(text):
        val = kind(text)
        if val <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="balsep", description="Balanced separator solver and pipeline probes.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph=True, alpha=False):
        if graph:
            sp.add_argument("--input", required=True, help="graph file (DIMACS or edge list)")
            sp.add_argument("--epsilon", type=positive(float), default=0.1, help="accuracy knob eps")
            sp.add_argument("--c", type=float, default=0.25, help="balance constant c in (0, 1/2)")
            sp.add_argument("--c-prime", type=float, default=1 / 32)
            sp.add_argument("--sigma", type=positive(float), default=0.05)
            sp.add_argument("--A", type=positive(float), default=1.0, help="chain length constant")
            sp.add_argument("--B", type=positive(float), default=1.0, help="distance scale constant")
            sp.add_argument("--max-dim", type=positive(int), default=128, help="sketch dimension cap")
        if alpha:
            sp.add_argument("--alpha", type=positive(float), default=None, help="fixed threshold alpha")
        sp.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or 0)")
        sp.add_argument("--format", choices=("json", "csv", "text"), default="json")

    s = sub.add_parser("solve", help="balanced separator by alpha search")
    common(s, alpha=True)
    s.add_argument("--workers", type=positive(int), default=1)
    s.add_argument("--option", type=int, choices=(1, 2), default=2)
    s.add_argument("--strict", action="store_true", help="run the full T iterations")
    s.add_argument("--max-iterations", type=positive(int), default=10_000)
    s.add_argument("--timings", action="store_true", help="add wall-clock seconds to the report")

    m = sub.add_parser("matching", help="one Matching(u) call on the starting embedding")
    common(m, alpha=True)

    h = sub.add_parser("harvest", help="one violating-path harvest with per-run stats")
    common(h)
    h.add_argument("--workers", type=positive(int), default=1)
    h.add_argument("--option", type=int, choices=(1, 2), default=2)
    h.add_argument("--runs", type=positive(int), default=None)
    h.add_argument("--K", type=positive(int), default=None, help="chain length (default from schedule)")

    c = sub.add_parser("concentration", help="Monte Carlo check of Gaussian concentration")
    common(c, graph=False)
    c.add_argument("--omega", type=float, nargs="+", default=[0.0, 0.5, 0.9])
    c.add_argument("--delta", type=float, nargs="+", default=[0.1, 0.25, 0.5])
    c.add_argument("--trials", type=int, default=100_000)
    c.add_argument("--dim", type=positive(int), default=1)

    b = sub.add_parser("bench-chaining", help="bit-pattern chaining vs correlated chaining")
    common(b)
    b.add_argument("--K", type=positive(int), default=None, help="chain length (default from schedule)")
    b.add_argument("--trials", type=positive(int), default=50)
    return p


# ---------------------------------------------------------------- commands

def _solver_config(args, **extra) -> SolverConfig:
    return SolverConfig(c=args.c, eps_param=args.epsilon, c_prime=args.c_prime, sigma=args.sigma,
                        A=args.A, B=args.B, max_dim=args.max_dim, seed=args.seed, **extra)


def _start(args):
    """Graph, schedule, alpha and the starting sketch (X = I) shared by the probe commands."""
    graph = read_graph(args.input)
    if graph.m == 0 or graph.total_weight <= 0:
        raise UsageError("this command needs a graph with positive edge weight")
    cfg = _solver_config(args)
    sch = make_schedule(cfg.eps_param, graph.n, cfg.A, cfg.B)
    alpha = getattr(args, "alpha", None) or alpha_grid(graph, sch.delta)[0]
    mcfg = MatchingConfig(alpha, sch.delta, cfg.c_prime, cfg.sigma)
    params = choose_params(graph.n, alpha, mcfg.pi(graph.n), sch.delta, sch.K,
                           3 * cfg.c - 4 * cfg.c ** 2, lam=0.0, max_dim=cfg.max_dim)
    emb = exp_sketch(StructuredOperator(graph.n), params, rng_stream(args.seed, PHASE_MISC, 0))
    _, emb_S = restrict_to_S(emb)
    return graph, cfg, sch, mcfg, emb_S


def cmd_solve(args) -> dict:
    graph = read_graph(args.input)
    cfg = _solver_config(args, option=args.option, strict=args.strict,
                         max_iterations=args.max_iterations)
    if args.alpha is None:
        rep = solve_balanced_separator(graph, cfg, workers=args.workers)
    else:
        sch = make_schedule(cfg.eps_param, graph.n, cfg.A, cfg.B)
        run = mw_solve_for_alpha(graph, args.alpha, sch, cfg, 0, args.workers)
        r = run.result
        rep = SolveReport("cut" if isinstance(r, BalancedCut) else "inconclusive",
                          r.cut if isinstance(r, BalancedCut) else None,
                          r.implied_opt_bound if isinstance(r, LowerBound) else None,
                          [run], sch, cfg, [args.alpha])
    out = rep.to_dict(timings=args.timings)
    if out["status"] == "inconclusive" and out["lower_bound"] is not None:
        out["status"] = "lower_bound"
    return {"command": "solve", **out}


def _outcome_dict(out) -> dict:
    if isinstance(out, CutFound):
        side = sorted(out.cut.side)
        return {"branch": "cut", "side": side, "value": out.cut.value, "capacity": out.capacity}
    if isinstance(out, SaturatedFlow):
        return {"branch": "saturated_flow", "observed": out.observed, "pi": out.pi,
                "demands": [[x, y, a] for x, y, a in out.flow.paths]}
    return {"branch": "matched", "edges": [list(e) for e in out.edges],
            "candidates": out.n_all, "short": out.n_short}


def cmd_matching(args) -> dict:
    graph, cfg, sch, mcfg, emb = _start(args)
    u = rng_stream(args.seed, PHASE_MISC, 1).standard_normal(emb.d)
    out = matching_cover(u, emb, graph, mcfg)
    return {"command": "matching", "status": "ok", "n": graph.n, "alpha": mcfg.alpha,
            "delta": sch.delta, "pi": mcfg.pi(emb.n), "sketch_dim": emb.d,
            "outcome": _outcome_dict(out)}


def cmd_harvest(args) -> dict:
    graph, cfg, sch, mcfg, emb = _start(args)
    h = 0 if args.option == 1 else 3
    K = args.K or sch.K
    N = args.runs or runs_per_harvest(cfg, graph.n, K)
    hcfg = HarvestConfig(N, K, args.option, harvest_target(1.0, graph.n, K, h), args.seed)
    res = harvest(graph, emb, hcfg, mcfg, workers=args.workers)
    out = {"command": "harvest", "status": "ok", "n": graph.n, "alpha": mcfg.alpha,
           "delta": sch.delta, "K": K, "runs": N, "option": args.option,
           "run_sizes": list(res.run_sizes), "revisiting_paths": res.revisits,
           "paths": [list(p.nodes) for p in res.paths], "termination": None}
    if res.terminated:
        out["termination"] = {"run": res.terminating_run, **_outcome_dict(res.termination)}
    return out


def cmd_concentration(args) -> dict:
    if args.trials < 1000:
        raise UsageError("--trials must be at least 1000")
    rows = []
    for k, (delta, omega) in enumerate((d, o) for d in args.delta for o in args.omega):
        if not 0 < delta < 1 or not 0 <= omega < 1:
            raise UsageError("need 0 < delta < 1 and 0 <= omega < 1")
        est = concentration_estimate(omega, delta, args.dim, args.trials,
                                     rng_stream(args.seed, PHASE_MISC, 2, k))
        rows.append({"delta": delta, "omega": omega, "trials": est.trials, "estimate": est.estimate,
                     "stderr": est.stderr, "bound": est.bound, "holds": est.holds})
    return {"command": "concentration", "status": "ok", "rows": rows}


def cmd_bench_chaining(args) -> dict:
    graph, cfg, sch, mcfg, emb = _start(args)
    K = args.K or sch.K
    oracle = lambda u: matching_cover(u, emb, graph, mcfg)  # noqa: E731
    rows = []
    for name in ("correlated", "bits"):
        sizes, viol, stretch, term = [], [], [], 0
        for i in range(args.trials):
            rng = rng_stream(args.seed, PHASE_MISC, 3, i)
            u1 = rng.standard_normal(emb.d)
            if name == "correlated":
                out = sample_paths(u1, K, oracle, rng, emb.points, sch.delta)
            else:
                bits = rng.integers(0, 2, K)
                out = sample_paths_sherman(u1, bits, oracle, rng, emb.points, sch.delta)
            if not isinstance(out, GeneralizedMatching):
                term += 1
                continue
            sizes.append(len(out))
            viol.append(len(out.violating))
            stretch += [float((emb.points[p.end] - emb.points[p.start]) @ u1) for p in out.nonviolating]
        rows.append({"algorithm": name, "K": K, "trials": args.trials, "terminated": term,
                     "mean_size": float(np.mean(sizes)) if sizes else 0.0,
                     "mean_violating": float(np.mean(viol)) if viol else 0.0,
                     "mean_stretch": float(np.mean(stretch)) if stretch else None})
    return {"command": "bench-chaining", "status": "ok", "n": graph.n, "alpha": mcfg.alpha,
            "delta": sch.delta, "rows": rows}


COMMANDS = {"solve": cmd_solve, "matching": cmd_matching, "harvest": cmd_harvest,
            "concentration": cmd_concentration, "bench-chaining": cmd_bench_chaining}


# ---------------------------------------------------------------- output

def _table(report: dict) -> list[dict]:
    cmd = report["command"]
    if cmd == "solve":
        return [{k: v for k, v in a.items() if k != "tally"} | {f"tally_{k}": v for k, v in a["tally"].items()}
                for a in report["alphas"]]
    if cmd in ("concentration", "bench-chaining"):
        return report["rows"]
    if cmd == "harvest":
        rows = [{"run": i, "violating": s, "terminated": False}
                for i, s in enumerate(report["run_sizes"])]
        if report["termination"] is not None:
            rows.append({"run": report["termination"]["run"], "violating": 0, "terminated": True})
        return rows
    o = report["outcome"]
    return [{"branch": o["branch"], "alpha": report["alpha"], "delta": report["delta"]}]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    rows = _table(report)
    if fmt == "csv":
        buf = io.StringIO()
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    lines = [f"{report['command']}: {report['status']}"]
    if report["command"] == "solve":
        cut = report["cut"]
        if cut:
            lines.append(f"cut value {cut['value']:g}, balance {cut['balance']:.3f}, "
                         f"expansion {cut['expansion']:g}, side {cut['side']}")
        lines.append(f"certified lower bound: {report['lower_bound']}")
        lines.append(f"ratio: {report['ratio']}")
    for r in rows:
        lines.append("  " + ", ".join(f"{k}={v}" for k, v in r.items()))
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.seed is None:
            args.seed = default_seed()
        if hasattr(args, "c") and not 0 < args.c < 0.5:
            raise UsageError("--c must lie in (0, 1/2)")
        if hasattr(args, "c_prime") and not 0 < args.c_prime < 0.25:
            raise UsageError("--c-prime must lie in (0, 1/4)")
        start = time.perf_counter()
        report = COMMANDS[args.command](args)
        if getattr(args, "timings", False):
            report["seconds"] = time.perf_counter() - start
    except UsageError as exc:
        print(f"balsep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, GraphFormatError) as exc:
        print(f"balsep: {exc}", file=sys.stderr)
        return EXIT_FILE
    sys.stdout.write(render(report, args.format))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
