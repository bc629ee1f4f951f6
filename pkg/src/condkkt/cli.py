"""Command-line front end: solve, bench, sweep-gamma, sweep-tau, spectrum.

Exit codes: 0 success, 1 solver did not reach Optimal (solve only),
2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diagnostics
from .ipm import TRACE_COLUMNS, IpmOptions, solve
from .kkt import OracleTooLarge
from .nlp import NlpProblem, QpParseError, load_qp_json
from .problems import REFERENCE_OBJECTIVES, get_problem, problem_names
from .sparse import StructuralError
from .strategies import STRATEGIES, HyKkt

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

BENCH_COLUMNS = [
    "problem", "strategy", "status", "iterations", "objective", "kkt_residual",
    "cg_iterations", "init_time", "linsol_time", "total_time",
]
GAMMA_COLUMNS = [
    "problem", "gamma", "status", "iterations", "cg_iterations", "objective", "kkt_residual", "schur_clustering",
]
TAU_COLUMNS = [
    "problem", "tau", "status", "iterations", "objective", "reference_objective", "objective_error",
    "eq_violation",
]
TIMER_KEYS = ("analysis", "assembly", "factorization", "backsolve", "cg")

DEFAULT_GAMMAS = (1e4, 1e5, 1e6, 1e7, 1e8)
DEFAULT_TAUS = (1e-4, 1e-5, 1e-6, 1e-7)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: Optional[str] = None
    qp: Optional[str] = None
    strategy: str = "k1"
    tol: float = 1e-8
    gamma: Optional[float] = None
    tau: Optional[float] = None
    max_iters: int = 200
    trace: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    jobs: int = 1

    def validate(self, need_problem: bool = True) -> "RunConfig":
        if need_problem and (self.problem is None) == (self.qp is None):
            raise ConfigError("give exactly one problem source: a builtin name or --qp FILE")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.gamma is not None and self.strategy != "hykkt":
            raise ConfigError("--gamma only applies to --strategy hykkt")
        if self.tau is not None and self.strategy != "lifted":
            raise ConfigError("--tau only applies to --strategy lifted")
        if not self.tol > 0:
            raise ConfigError("--tol must be positive")
        if self.max_iters < 0:
            raise ConfigError("--max-iters must be non-negative")
        return self

    def options(self) -> IpmOptions:
        return IpmOptions(tol=self.tol, max_iters=self.max_iters, strategy=self.strategy,
                          gamma=self.gamma, tau=self.tau)


def load_problem(cfg: RunConfig) -> NlpProblem:
    if cfg.qp is not None:
        try:
            return load_qp_json(cfg.qp)
        except FileNotFoundError:
            raise ConfigError(f"QP file not found: {cfg.qp}") from None
        except (QpParseError, StructuralError) as exc:
            raise ConfigError(f"invalid QP file {cfg.qp}: {exc}") from None
    try:
        return get_problem(cfg.problem)
    except KeyError:
        raise ConfigError(f"unknown problem {cfg.problem!r}; available: {', '.join(problem_names())}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_csv(rows, columns, path: Optional[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if path is None or path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


# --- solve -------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    cfg.validate()
    P = load_problem(cfg)
    res = solve(P, cfg.options())
    t = res.timers
    print(f"problem      {P.name}  (n={P.n}, m_e={P.m_e}, m_i={P.m_i})")
    print(f"strategy     {res.strategy}")
    print(f"status       {res.status}  {res.message}")
    print(f"objective    {res.objective:.10g}")
    print(f"iterations   {res.iterations}")
    print(f"kkt residual {res.kkt_residual:.3e}")
    print(f"cg iters     {res.total_cg_iterations}")
    print("time (s)     " + "  ".join(f"{k} {t.get(k, 0.0):.4f}" for k in TIMER_KEYS)
          + f"  total {t['total']:.4f}")
    if cfg.trace:
        write_csv(([getattr(r, c) for c in TRACE_COLUMNS] for r in res.trace), TRACE_COLUMNS, cfg.trace)
    return EXIT_OK if res.optimal else EXIT_FAIL


# --- bench -------------------------------------------------------------------


def _bench_one(args):
    name, strategy, tol, max_iters = args
    P = get_problem(name)
    res = solve(P, IpmOptions(tol=tol, max_iters=max_iters, strategy=strategy))
    t = res.timers
    return [name, strategy, res.status, res.iterations, res.objective, res.kkt_residual,
            res.total_cg_iterations, t["init"], t["linsol"], t["total"]]


def _run_jobs(fn, tasks, jobs: int) -> list:
    """Map in task order; results are ordered identically for any ``jobs``."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _split(text: Optional[str]) -> list:
    if text is None:
        return []
    return [p.strip() for p in text.split(",") if p.strip()]


def cmd_bench(cfg: RunConfig, problems: Optional[str] = None, strategies: Optional[str] = None) -> int:
    names = problem_names() if problems is None else _split(problems)
    kinds = ["k1", "hykkt", "lifted"] if strategies is None else _split(strategies)
    for name in names:
        if name not in problem_names():
            raise ConfigError(f"unknown problem {name!r}; available: {', '.join(problem_names())}")
    for kind in kinds:
        if kind not in STRATEGIES:
            raise ConfigError(f"unknown strategy {kind!r}; choose from {', '.join(STRATEGIES)}")
    tasks = [(n, k, cfg.tol, cfg.max_iters) for n in names for k in kinds]
    write_csv(_run_jobs(_bench_one, tasks, cfg.jobs), BENCH_COLUMNS, cfg.out)
    return EXIT_OK


# --- sweeps --------------------------------------------------------------------


def _parse_values(text: Optional[str], default) -> list:
    if text is None:
        return list(default)
    try:
        vals = [float(v) for v in _split(text)]
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r}") from None
    if any(not v > 0 for v in vals):
        raise ConfigError("sweep values must be positive")
    return vals


def cmd_sweep_gamma(cfg: RunConfig, values: Optional[str] = None) -> int:
    if cfg.strategy != "hykkt":
        raise ConfigError("sweep-gamma runs the hykkt strategy")
    cfg.validate()
    P = load_problem(cfg)
    gammas = _parse_values(values, DEFAULT_GAMMAS)
    late = None
    if P.m_e and P.n <= diagnostics.DENSE_CAP:
        late = diagnostics.late_iterate(P, strategy="k1")
    rows = []
    for g in gammas:
        res = solve(P, IpmOptions(tol=cfg.tol, max_iters=cfg.max_iters, strategy="hykkt", gamma=g))
        clus = math.nan
        if late is not None:
            try:
                clus = diagnostics.schur_clustering(diagnostics.schur_spectrum(P, late, g), g)
            except diagnostics.ContractError:
                pass
        rows.append([P.name, g, res.status, res.iterations, res.total_cg_iterations, res.objective,
                     res.kkt_residual, clus])
    write_csv(rows, GAMMA_COLUMNS, cfg.out)
    return EXIT_OK


def _reference_objective(P: NlpProblem, builtin: bool, tol: float = 1e-10) -> float:
    """Frozen value for builtin problems, otherwise a fresh tight reference solve."""
    if builtin and REFERENCE_OBJECTIVES.get(P.name) is not None:
        return float(REFERENCE_OBJECTIVES[P.name])
    kind = "oracle" if P.n + 2 * P.m_i + P.m_e <= 400 else "k1"
    res = solve(P, IpmOptions(tol=tol, strategy=kind))
    return res.objective if res.optimal else math.nan


def cmd_sweep_tau(cfg: RunConfig, values: Optional[str] = None) -> int:
    if cfg.strategy != "lifted":
        raise ConfigError("sweep-tau runs the lifted strategy")
    cfg.validate()
    P = load_problem(cfg)
    taus = _parse_values(values, DEFAULT_TAUS)
    ref = _reference_objective(P, builtin=cfg.qp is None)
    rows = []
    for tau in taus:
        # the solver tolerance follows tau, as with the default tau = tol
        res = solve(P, IpmOptions(tol=tau, max_iters=cfg.max_iters, strategy="lifted", tau=tau))
        viol = float(np.max(np.abs(P.g(res.x)))) if P.m_e else 0.0
        rows.append([P.name, tau, res.status, res.iterations, res.objective, ref, abs(res.objective - ref), viol])
    write_csv(rows, TAU_COLUMNS, cfg.out)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, values: Optional[str] = None, noise: Optional[float] = None) -> int:
    cfg.validate()
    P = load_problem(cfg)
    if P.n > diagnostics.DENSE_CAP:
        raise ConfigError(f"spectrum needs n <= {diagnostics.DENSE_CAP}, got {P.n}")
    gammas = _parse_values(values, DEFAULT_GAMMAS)
    # final iterate of a solve at --tol: late enough to resolve the clusters
    # while the step itself is still above roundoff
    kind = "oracle" if P.n + 2 * P.m_i + P.m_e <= 400 else "k1"
    it = diagnostics.late_iterate(P, strategy=kind, tol=cfg.tol, max_iters=cfg.max_iters)
    columns = list(diagnostics.SPECTRUM_COLUMNS)
    if noise is not None:
        columns += ["probe_error", "probe_bound"]
    rows = []
    for g in gammas:
        rep = diagnostics.spectrum_report(P, it, g)
        try:
            cg = HyKkt(g).compute_step(P, it).cg_iterations
        except Exception:  # strategy failure at this gamma is reported, not fatal
            cg = -1
        row = rep.csv_row(cg)
        if noise is not None:
            pr = diagnostics.perturbation_probe(P, it, g, noise, seed=cfg.seed)
            row += [pr.error, pr.naive_bound]
        rows.append(row)
    write_csv(rows, columns, cfg.out)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------


def _common(p: argparse.ArgumentParser, strategy_default="k1") -> None:
    p.add_argument("target", nargs="?", help="builtin problem name or QP JSON file")
    p.add_argument("--problem", help="builtin problem name")
    p.add_argument("--qp", help="QP JSON file")
    p.add_argument("--strategy", default=strategy_default, choices=sorted(STRATEGIES))
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condkkt", description="Condensed-space interior-point solver.")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("solve", help="solve one problem"))
    b = sub.add_parser("bench", help="problems x strategies table (CSV)")
    _common(b)
    b.add_argument("--problems", help="comma-separated names (default: whole suite; empty for none)")
    b.add_argument("--strategies", help="comma-separated strategies (default k1,hykkt,lifted)")
    g = sub.add_parser("sweep-gamma", help="HyKKT over gamma values (CSV)")
    _common(g, "hykkt")
    g.add_argument("--values", help="comma-separated gamma values")
    t = sub.add_parser("sweep-tau", help="LiftedKKT over tau values (CSV)")
    _common(t, "lifted")
    t.add_argument("--values", help="comma-separated tau values")
    s = sub.add_parser("spectrum", help="K_gamma spectrum at a late iterate (CSV)")
    _common(s)
    s.add_argument("--values", help="comma-separated gamma values")
    s.add_argument("--noise", type=float, help="also run a perturbation probe at this relative noise")
    return ap


def _config(ns) -> RunConfig:
    problem, qp = ns.problem, ns.qp
    if ns.target is not None:
        if problem is not None or qp is not None:
            raise ConfigError("give the problem either positionally or with --problem/--qp, not both")
        if ns.target.endswith(".json") or os.path.isfile(ns.target):
            qp = ns.target
        else:
            problem = ns.target
    return RunConfig(problem=problem, qp=qp, strategy=ns.strategy, tol=ns.tol, gamma=ns.gamma, tau=ns.tau,
                     max_iters=ns.max_iters, trace=ns.trace, out=ns.out, seed=ns.seed, jobs=max(1, ns.jobs))


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = _config(ns)
        np.random.seed(cfg.seed)
        if ns.command == "solve":
            return cmd_solve(cfg)
        if ns.command == "bench":
            cfg.validate(need_problem=False)
            return cmd_bench(cfg, ns.problems, ns.strategies)
        if ns.command == "sweep-gamma":
            return cmd_sweep_gamma(cfg, ns.values)
        if ns.command == "sweep-tau":
            return cmd_sweep_tau(cfg, ns.values)
        return cmd_spectrum(cfg, ns.values, ns.noise)
    except (ConfigError, OracleTooLarge, diagnostics.ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
