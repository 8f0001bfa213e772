"""Command-line front end.

Subcommands ``trend``, ``graph`` and ``cluster`` solve one problem;
``compare`` runs several algorithms on the same problem and writes a table;
``diagnose`` fits the linear rate of simplified GDGA and, on small
instances, runs the error-bound ratio study.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .admm import AdmmConfig, admm_solve
from .diagnostics import error_bound_ratio_study, fit_linear_rate
from .dual import (
    StepPolicy,
    format_float,
    make_problem,
    solve_framework,
    solve_simplified,
    write_trace_csv,
)
from .exceptions import ConfigError, FcsolveError, InsufficientData, NoClosedForm, NumericalError
from .io import build_image_problem, load_points, load_signal, read_edge_list, write_pgm, write_solution
from .losses import FiniteSumLoss, SquaredLoss
from .operators import ClusterSpec, build_cluster_diff, build_graph_diff, build_univariate_diff
from .oracle import ENUMERATION_MAX_M
from .subroutines import SubroutineKind

logger = logging.getLogger("fcsolve")

ALGOS = ("gdga", "gdga-agd", "gdga-svrg", "gdga-sgd", "admm")
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
COMPARE_HEADER = "algo,iters,final_obj,gap,wall_ms"


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str
    fmt: str | None = None
    order: int = 0
    lam: float = 0.0
    algo: str = "gdga"
    step: str = "bb"
    eta: float | None = None
    tol: float = 1e-8
    max_iters: int = 100_000
    seed: int = 0
    trace_out: str | None = None
    solution_out: str | None = None
    edges: str | None = None
    n_sam: int = 10
    spread: float = 1e-5
    algos: tuple = ("gdga", "admm")
    problem: str | None = None
    table_out: str | None = None
    samples: int = 1000

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError(f"--lambda must be >= 0, got {self.lam}")
        if self.order < 0:
            raise ConfigError(f"--order must be >= 0, got {self.order}")
        if not self.tol > 0:
            raise ConfigError(f"--tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError("--max-iters must be >= 1")
        for a in (self.algo, *self.algos):
            if a not in ALGOS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {', '.join(ALGOS)}")
        if self.step not in ("fixed", "bb"):
            raise ConfigError(f"--step must be fixed or bb, got {self.step!r}")


@dataclass
class Loaded:
    problem: object
    dims: tuple | None


def _load_problem(cfg: RunConfig, kind: str) -> Loaded:
    if kind == "cluster":
        pts = load_points(cfg.input)
        op = build_cluster_diff(ClusterSpec(pts.shape[0], pts.shape[1]))
        return Loaded(make_problem(SquaredLoss(pts.ravel()), op, cfg.lam, seed=cfg.seed), None)
    y, dims = load_signal(cfg.input, cfg.fmt)
    if kind == "trend":
        if dims is not None and min(dims) > 1:
            raise ConfigError("trend filtering needs a 1-D signal; use the graph command for images")
        op = build_univariate_diff(y.size, cfg.order)
        return Loaded(make_problem(SquaredLoss(y), op, cfg.lam, seed=cfg.seed), dims)
    if cfg.edges:
        g = read_edge_list(cfg.edges, n_vertices=y.size)
        op = build_graph_diff(g, cfg.order)
        return Loaded(make_problem(SquaredLoss(y), op, cfg.lam, seed=cfg.seed), dims)
    if dims is None:
        raise ConfigError("graph input needs --edges, or a PGM image for the pixel grid")
    return Loaded(build_image_problem(y, dims, cfg.order, cfg.lam), dims)


def _policy(cfg: RunConfig):
    return StepPolicy.fixed(cfg.eta) if cfg.step == "fixed" else StepPolicy.bb(cfg.eta)


def run_algo(p, algo, cfg: RunConfig):
    """Solve ``p`` with one algorithm. Returns ``(report, wall_ms)``."""
    start = time.perf_counter()
    if algo == "gdga":
        rep = solve_simplified(p, _policy(cfg), tol=cfg.tol, max_iters=cfg.max_iters)
    elif algo == "gdga-agd":
        rep = solve_framework(
            p, SubroutineKind.agd(), _policy(cfg), tol=cfg.tol, max_iters=cfg.max_iters, seed=cfg.seed
        )
    elif algo in ("gdga-svrg", "gdga-sgd"):
        if p.loss.kind != "squared":
            raise NoClosedForm("stochastic runs split a squared loss into components")
        fs = FiniteSumLoss.from_squared(p.loss.y, cfg.n_sam, cfg.spread, seed=cfg.seed)
        sub = SubroutineKind.svrg() if algo == "gdga-svrg" else SubroutineKind.sgd()
        rep = solve_framework(
            replace(p, loss=fs), sub, _policy(cfg), tol=cfg.tol, max_iters=cfg.max_iters, seed=cfg.seed
        )
    else:
        rep = admm_solve(p, AdmmConfig(tol=cfg.tol, max_iters=cfg.max_iters))
    return rep, (time.perf_counter() - start) * 1e3


def summary_line(algo, rep, wall_ms):
    return (
        f"algo={algo} iters={rep.iters} final_obj={format_float(rep.final_obj)} "
        f"gap={format_float(rep.final_gap)} wall_ms={wall_ms:.3f}"
    )


def _warn_unconverged(algo, rep):
    if rep.termination not in ("gap_tol", "residual_tol"):
        print(f"fcsolve: warning: {algo} stopped on {rep.termination}", file=sys.stderr)


def _write_solution(cfg: RunConfig, beta, dims):
    if not cfg.solution_out:
        return
    write_solution(cfg.solution_out, beta)
    if dims is not None:
        write_pgm(Path(cfg.solution_out).with_suffix(".pgm"), beta, dims)


def _suffixed(path, algo):
    p = Path(path)
    return p.with_name(f"{p.stem}.{algo}{p.suffix or '.csv'}")


def thread_cap():
    raw = os.environ.get("FCSOLVE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FCSOLVE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"FCSOLVE_THREADS must be a positive integer, got {raw!r}")
    return n


def run(cfg: RunConfig, out=None):
    """Execute one configuration; returns the process exit code."""
    out = out or sys.stdout
    if cfg.command in ("trend", "graph", "cluster"):
        loaded = _load_problem(cfg, cfg.command)
        rep, wall_ms = run_algo(loaded.problem, cfg.algo, cfg)
        if cfg.trace_out:
            write_trace_csv(rep, cfg.trace_out)
        _write_solution(cfg, rep.beta, loaded.dims)
        print(summary_line(cfg.algo, rep, wall_ms), file=out)
        _warn_unconverged(cfg.algo, rep)
        return 0
    if cfg.command == "compare":
        kind = cfg.problem or ("graph" if (cfg.edges or _infer_pgm(cfg)) else "trend")
        loaded = _load_problem(cfg, kind)
        workers = max(1, min(thread_cap(), len(cfg.algos)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: run_algo(loaded.problem, a, cfg), cfg.algos))
        # all writes happen after every solve finished, in request order
        lines = [COMPARE_HEADER]
        for algo, (rep, wall_ms) in zip(cfg.algos, results):
            if cfg.trace_out:
                write_trace_csv(rep, _suffixed(cfg.trace_out, algo))
            if cfg.solution_out:
                sol_cfg = replace(cfg, solution_out=str(_suffixed(cfg.solution_out, algo)))
                _write_solution(sol_cfg, rep.beta, loaded.dims)
            print(summary_line(algo, rep, wall_ms), file=out)
            _warn_unconverged(algo, rep)
            lines.append(
                f"{algo},{rep.iters},{format_float(rep.final_obj)},{format_float(rep.final_gap)},{wall_ms:.3f}"
            )
        table = "\n".join(lines) + "\n"
        if cfg.table_out:
            Path(cfg.table_out).write_text(table)
        else:
            out.write(table)
        return 0
    if cfg.command == "diagnose":
        kind = cfg.problem or ("graph" if (cfg.edges or _infer_pgm(cfg)) else "trend")
        p = _load_problem(cfg, kind).problem
        rep = solve_simplified(p, StepPolicy.fixed(cfg.eta), tol=min(cfg.tol, 1e-10), max_iters=cfg.max_iters)
        doc = {"iters": rep.iters, "termination": rep.termination}
        try:
            fit = fit_linear_rate(rep)
            doc["rate"] = {"slope": fit.slope, "r2": fit.r2, "window": list(fit.window), "flat": fit.flat}
        except InsufficientData as exc:
            doc["rate"] = None
            doc["rate_note"] = str(exc)
        if p.m <= ENUMERATION_MAX_M and p.lam > 0:
            doc["error_bound"] = error_bound_ratio_study(p, cfg.samples, cfg.seed)
        print(json.dumps(doc, sort_keys=True), file=out)
        return 0
    raise ConfigError(f"unknown command {cfg.command!r}")


def _infer_pgm(cfg):
    return (cfg.fmt or "").lower() == "pgm" or str(cfg.input).lower().endswith(".pgm")


def build_parser():
    parser = argparse.ArgumentParser(prog="fcsolve", description="Matrix-free filtering-clustering solvers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("trend", "univariate trend filtering"),
        ("graph", "graph trend filtering (edge list or PGM grid)"),
        ("cluster", "l1 convex clustering of CSV points"),
        ("compare", "run several algorithms on one problem"),
        ("diagnose", "rate fit and error-bound study"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--input", required=True)
        sp.add_argument("--format", dest="fmt", choices=("csv", "pgm"))
        sp.add_argument("--order", type=int, default=0)
        sp.add_argument("--lambda", dest="lam", type=float, required=True)
        sp.add_argument("--algo", default="gdga", choices=ALGOS)
        sp.add_argument("--step", default="bb", choices=("fixed", "bb"))
        sp.add_argument("--eta", type=float)
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--max-iters", type=int, default=100_000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trace-out")
        sp.add_argument("--solution-out")
        sp.add_argument("--edges", help="edge list 'u v [w]' for graph problems")
        sp.add_argument("--n-sam", type=int, default=10, help="components for stochastic runs")
        sp.add_argument("--spread", type=float, default=1e-5, help="component spread for stochastic runs")
        if name in ("compare", "diagnose"):
            sp.add_argument("--problem", choices=("trend", "graph", "cluster"))
        if name == "compare":
            sp.add_argument("--algos", default="gdga,admm", help="comma-separated list")
            sp.add_argument("--table-out")
        if name == "diagnose":
            sp.add_argument("--samples", type=int, default=1000)
    return parser


def config_from_args(ns) -> RunConfig:
    algos = tuple(a.strip() for a in getattr(ns, "algos", "gdga,admm").split(",") if a.strip())
    return RunConfig(
        command=ns.command, input=ns.input, fmt=ns.fmt, order=ns.order, lam=ns.lam, algo=ns.algo,
        step=ns.step, eta=ns.eta, tol=ns.tol, max_iters=ns.max_iters, seed=ns.seed,
        trace_out=ns.trace_out, solution_out=ns.solution_out, edges=ns.edges, n_sam=ns.n_sam,
        spread=ns.spread, algos=algos, problem=getattr(ns, "problem", None),
        table_out=getattr(ns, "table_out", None), samples=getattr(ns, "samples", 1000),
    )


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return run(config_from_args(ns))
    except NumericalError as exc:
        print(f"fcsolve: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FcsolveError, OSError) as exc:
        print(f"fcsolve: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
