"""Primal-dual interior-point loop with a monotone barrier and an l1-merit line search."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kkt import Direction, Iterate
from .nlp import NlpProblem
from .strategies import KktStrategy, StrategyFailure, make_strategy

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
STRATEGY_FAILURE = "StrategyFailure"
LINE_SEARCH_FAILURE = "LineSearchFailure"
DIVERGED = "Diverged"


@dataclass
class IpmOptions:
    tol: float = 1e-8
    max_iters: int = 200
    mu_init: float = 0.1
    strategy: str = "k1"
    gamma: Optional[float] = None
    tau: Optional[float] = None
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    kappa_eps: float = 10.0
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    tau_min: float = 0.99
    kappa_sigma: float = 1e10
    bound_push: float = 1e-2
    scaling_cap: float = 100.0
    divergence_limit: float = 1e20  # on max |x|
    objective_limit: float = 1e15  # on |f|
    keep_iterates: bool = False  # store the iterate at which each step is computed

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.mu_init > 0:
            raise ValueError("mu_init must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class TraceRecord:
    iteration: int
    mu: float
    xi: float
    objective: float
    conv_error: float
    inf_pr: float
    inf_du: float
    alpha_primal: float
    alpha_dual: float
    residual_unreduced: float
    inertia_corrections: int
    cg_iterations: int
    delta_w: float
    delta_c: float
    backtracks: int
    min_interior: float
    degraded: bool


TRACE_COLUMNS = list(TraceRecord.__dataclass_fields__)


@dataclass
class IpmResult:
    status: str
    iterate: Iterate
    objective: float
    iterations: int
    trace: list
    timers: dict
    message: str = ""
    strategy: str = ""
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    conv_error: float = math.inf
    kkt_residual: float = math.inf
    iterates: list = field(default_factory=list)
    total_cg_iterations: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.iterate.x

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --- small building blocks --------------------------------------------------


def _bounded(it: Iterate, bounded):
    return it.u > 0 if bounded is None else np.asarray(bounded, dtype=bool)


def duality_measure(it: Iterate, bounded=None) -> float:
    """Average complementarity (s^T v + x_B^T u_B) / (m_i + |B|).

    Without ``bounded`` the bound set is read off the iterate (u_i > 0).
    """
    B = _bounded(it, bounded)
    count = it.s.size + int(B.sum())
    if count == 0:
        return 0.0
    return float(it.s @ it.v + it.x[B] @ it.u[B]) / count


@dataclass
class CentralityReport:
    satisfied: bool
    gradient_ok: bool
    products_ok: bool
    gradient_ratio: float
    worst_product_ratio: float
    worst_index: int


def centrality_check(it: Iterate, C: float, alpha: float, grad_lagrangian=None, bounded=None) -> CentralityReport:
    """||grad_p L|| <= C xi and every complementarity product >= alpha xi.

    Products are ordered (s_i v_i for all i, then x_j u_j for bounded j);
    ``worst_index`` points into that list, -1 when it is empty.
    """
    xi = duality_measure(it, bounded)
    B = _bounded(it, bounded)
    prods = np.concatenate([it.s * it.v, it.x[B] * it.u[B]])
    if grad_lagrangian is None:
        gnorm = 0.0
    else:
        gnorm = float(np.linalg.norm(grad_lagrangian))
    gratio = gnorm / xi if xi > 0 else (0.0 if gnorm == 0 else math.inf)
    if prods.size == 0 or xi == 0:
        worst, wratio = -1, math.inf
    else:
        worst = int(np.argmin(prods))
        wratio = float(prods[worst] / xi)
    g_ok = gnorm <= C * xi
    p_ok = prods.size == 0 or wratio >= alpha
    return CentralityReport(bool(g_ok and p_ok), bool(g_ok), bool(p_ok), gratio, wratio, worst)


def _max_step(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def fraction_to_boundary(it: Iterate, d: Direction, tau_ftb: float, bounded=None):
    """Largest (alpha_primal, alpha_dual) in (0, 1] keeping (x_B, s) and (u_B, v) >= (1 - tau) of current."""
    B = _bounded(it, bounded)
    ap = min(_max_step(it.x[B], d.dx[B], tau_ftb), _max_step(it.s, d.ds, tau_ftb))
    ad = min(_max_step(it.u[B], d.du[B], tau_ftb), _max_step(it.v, d.dv, tau_ftb))
    return ap, ad


def update_barrier(mu, tol: float, kappa_mu: float = 0.2, theta_mu: float = 1.5) -> float:
    mu = mu.mu if isinstance(mu, Iterate) else float(mu)
    return max(tol / 10.0, min(kappa_mu * mu, mu**theta_mu))


# --- merit line search ------------------------------------------------------


@dataclass
class LineSearchResult:
    alpha: float
    accepted: bool
    backtracks: int
    nu: float
    merit: float
    directional_derivative: float


def merit(P: NlpProblem, x, s, mu: float, nu: float) -> float:
    B = P.bounded
    if np.any(x[B] <= 0) or np.any(s <= 0):
        return math.inf
    f = P.f(x)
    c = np.concatenate([P.g(x), P.h(x) + s])
    val = f - mu * np.sum(np.log(x[B])) - mu * np.sum(np.log(s)) + nu * np.sum(np.abs(c))
    return float(val) if np.isfinite(val) else math.inf


def _merit_slope(P, it, d, grad, c, dc, nu):
    B = P.bounded
    barrier = grad @ d.dx - it.mu * np.sum(d.dx[B] / it.x[B]) - it.mu * np.sum(d.ds / it.s)
    nz = c != 0
    l1 = np.sum(np.sign(c[nz]) * dc[nz]) + np.sum(np.abs(dc[~nz]))
    return float(barrier), float(l1)


def penalty_update(P, it, d, nu, rho=0.1):
    """Penalty above the new multipliers and large enough for descent.

    Recomputed every iteration rather than kept monotone: transient large
    multipliers early in a run would otherwise leave nu so large that
    second-order constraint terms block every later step.
    """
    x = it.x
    grad = P.grad(x)
    c = np.concatenate([P.g(x), P.h(x) + it.s])
    dc = np.concatenate([P.jac_g(x) @ d.dx if P.m_e else np.zeros(0), (P.jac_h(x) @ d.dx if P.m_i else np.zeros(0)) + d.ds])
    barrier, _ = _merit_slope(P, it, d, grad, c, dc, nu)
    cn = float(np.sum(np.abs(c)))
    mult = np.concatenate([it.y + d.dy, it.z + d.dz])
    trial = float(np.max(np.abs(mult))) if mult.size else 0.0
    if cn > 0 and barrier > 0:
        trial = max(trial, barrier / ((1 - rho) * cn))
    return 1.1 * trial


def line_search(P: NlpProblem, it: Iterate, d: Direction, alpha_max: float, nu: float = 0.0,
                armijo: float = 1e-4, backtrack: float = 0.5, max_backtracks: int = 30) -> LineSearchResult:
    """Backtracking Armijo search on the l1 merit, starting at alpha_max."""
    x = it.x
    grad = P.grad(x)
    c = np.concatenate([P.g(x), P.h(x) + it.s])
    dc = np.concatenate([P.jac_g(x) @ d.dx if P.m_e else np.zeros(0), (P.jac_h(x) @ d.dx if P.m_i else np.zeros(0)) + d.ds])
    barrier, l1 = _merit_slope(P, it, d, grad, c, dc, nu)
    slope = barrier + nu * l1
    phi0 = merit(P, x, it.s, it.mu, nu)
    slack = 1e-14 * max(1.0, abs(phi0))
    alpha = alpha_max
    for k in range(max_backtracks + 1):
        phi = merit(P, x + alpha * d.dx, it.s + alpha * d.ds, it.mu, nu)
        if phi <= phi0 + armijo * alpha * min(slope, 0.0) + slack:
            return LineSearchResult(alpha, True, k, nu, phi, slope)
        alpha *= backtrack
    return LineSearchResult(alpha / backtrack, False, max_backtracks, nu, phi0, slope)


# --- convergence measures ---------------------------------------------------


def _scaling(values, count, cap):
    if count == 0:
        return 1.0
    avg = sum(float(np.sum(np.abs(v))) for v in values) / count
    return min(cap, max(1.0, avg / cap))


def optimality_errors(P: NlpProblem, it: Iterate, mu: float = 0.0, cap: float = 100.0, scaled: bool = True):
    """(E, inf_pr, inf_du, inf_compl) at barrier ``mu``; ``scaled=False`` gives the raw KKT residual."""
    B = P.bounded
    x = it.x
    gradL = P.lagrangian_grad(x, it.y, it.z) - np.where(B, it.u, 0.0)
    pr = np.concatenate([P.g(x), P.h(x) + it.s])
    comp = np.concatenate([x[B] * it.u[B] - mu, it.s * it.v - mu])
    du1 = float(np.max(np.abs(gradL))) if gradL.size else 0.0
    du2 = float(np.max(np.abs(it.z - it.v))) if it.z.size else 0.0
    inf_pr = float(np.max(np.abs(pr))) if pr.size else 0.0
    inf_c = float(np.max(np.abs(comp))) if comp.size else 0.0
    if scaled:
        nb = int(B.sum())
        s_d = _scaling([it.y, it.z, it.u[B], it.v], P.m_e + 2 * P.m_i + nb, cap)
        s_c = _scaling([it.u[B], it.v], nb + P.m_i, cap)
    else:
        s_d = s_c = 1.0
    inf_du = max(du1, du2) / s_d
    E = max(inf_du, inf_pr, inf_c / s_c)
    return E, inf_pr, inf_du, inf_c


def kkt_residual(P: NlpProblem, it: Iterate) -> float:
    """Unscaled infinity norm of the optimality conditions with zero barrier."""
    return optimality_errors(P, it, 0.0, scaled=False)[0]


# --- main loop --------------------------------------------------------------


def initial_iterate(P: NlpProblem, mu: float, push: float = 1e-2) -> Iterate:
    B = P.bounded
    x = P.x0.copy()
    x[B] = np.maximum(x[B], push)
    s = np.maximum(push, -P.h(x)) if P.m_i else np.zeros(0)
    u = np.zeros(P.n)
    u[B] = mu / x[B]
    v = mu / s if P.m_i else np.zeros(0)
    return Iterate(x, s, np.zeros(P.m_e), np.zeros(P.m_i), u, v, mu)


def _min_interior(P, it):
    vals = np.concatenate([it.x[P.bounded], it.s, it.u[P.bounded], it.v])
    return float(np.min(vals)) if vals.size else math.inf


def solve(P: NlpProblem, opts: IpmOptions | None = None, strategy: KktStrategy | None = None) -> IpmResult:
    """Run the interior-point method; never raises on numerical failure."""
    opts = IpmOptions() if opts is None else opts
    t_total = time.perf_counter()
    S = strategy if strategy is not None else make_strategy(opts.strategy, opts.gamma, opts.tau, opts.tol)
    timers = {"init": 0.0}
    t0 = time.perf_counter()
    W = S.working_problem(P)
    mu = opts.mu_init
    it = initial_iterate(W, mu, opts.bound_push)
    timers["init"] = time.perf_counter() - t0

    trace: list = []
    iterates: list = []
    nu = 0.0
    status, message = MAX_ITER, f"reached max_iters = {opts.max_iters}"
    k = 0
    total_cg = 0

    def record(step=None, ap=0.0, ad=0.0, backtracks=0, E=math.nan, pr=math.nan, du=math.nan):
        trace.append(TraceRecord(
            iteration=k, mu=it.mu, xi=duality_measure(it, W.bounded),
            objective=W.f(it.x), conv_error=E, inf_pr=pr, inf_du=du,
            alpha_primal=ap, alpha_dual=ad,
            residual_unreduced=step.residual_unreduced if step else math.nan,
            inertia_corrections=step.inertia_corrections if step else 0,
            cg_iterations=step.cg_iterations if step else 0,
            delta_w=step.delta_w if step else 0.0, delta_c=step.delta_c if step else 0.0,
            backtracks=backtracks, min_interior=_min_interior(W, it),
            degraded=step.degraded if step else False,
        ))

    # non-finite values are turned into statuses below; silence numpy about them
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            while True:
                E0, pr, du, _ = optimality_errors(W, it, 0.0, opts.scaling_cap)
                if not np.isfinite(E0):
                    status, message = STRATEGY_FAILURE, "non-finite optimality error"
                    break
                if E0 <= opts.tol:
                    status, message = OPTIMAL, f"converged: error {E0:.2e} <= tol {opts.tol:g}"
                    break
                if k >= opts.max_iters:
                    break
                if np.max(np.abs(it.x)) > opts.divergence_limit or abs(W.f(it.x)) > opts.objective_limit:
                    status, message = DIVERGED, "iterates or objective exceed the divergence limit; problem may be unbounded"
                    break
                mults = np.concatenate([it.y, it.z, it.u, it.v])
                if mults.size and np.max(np.abs(mults)) > opts.divergence_limit:
                    status, message = DIVERGED, "multipliers exceed the divergence limit; problem may be infeasible"
                    break
                while mu > opts.tol / 10.0 and optimality_errors(W, it, mu, opts.scaling_cap)[0] <= opts.kappa_eps * mu:
                    mu = update_barrier(mu, opts.tol, opts.kappa_mu, opts.theta_mu)
                    it.mu = mu
                if opts.keep_iterates:
                    iterates.append(it.copy())  # exactly the point handed to the strategy
                try:
                    step = S.compute_step(W, it)
                except StrategyFailure as exc:
                    status, message = STRATEGY_FAILURE, str(exc)
                    break
                d = step.direction
                tau_ftb = max(opts.tau_min, 1.0 - mu)
                ap, ad = fraction_to_boundary(it, d, tau_ftb, W.bounded)
                nu = penalty_update(W, it, d, nu)
                ls = line_search(W, it, d, ap, nu, opts.armijo, opts.backtrack, opts.max_backtracks)
                if not ls.accepted:
                    status = LINE_SEARCH_FAILURE
                    message = f"no acceptable step after {opts.max_backtracks} halvings (slope {ls.directional_derivative:.2e})"
                    record(step, 0.0, 0.0, ls.backtracks, E0, pr, du)
                    break
                a = ls.alpha
                B = W.bounded
                x = it.x + a * d.dx
                s = it.s + a * d.ds
                u = it.u + ad * d.du
                v = it.v + ad * d.dv
                # keep bound multipliers within a factor kappa_sigma of mu / x
                ks = opts.kappa_sigma
                u[B] = np.clip(u[B], mu / (ks * x[B]), ks * mu / x[B])
                u[~B] = 0.0
                v = np.clip(v, mu / (ks * s), ks * mu / s)
                it = Iterate(x, s, it.y + a * d.dy, it.z + a * d.dz, u, v, mu, step.delta_w, step.delta_c)
                k += 1
                total_cg += step.cg_iterations
                record(step, a, ad, ls.backtracks, E0, pr, du)
        except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
            status, message = STRATEGY_FAILURE, f"{type(exc).__name__}: {exc}"

    if status == MAX_ITER:
        _, pr, du, _ = optimality_errors(W, it, 0.0, opts.scaling_cap)
        message += f" (primal infeasibility {pr:.2e}, dual infeasibility {du:.2e})"
    timers.update({key: float(val) for key, val in S.timers.items()})
    for key in ("analysis", "assembly", "factorization", "backsolve", "cg", "linsol"):
        timers.setdefault(key, 0.0)
    timers["total"] = time.perf_counter() - t_total
    y, z = S.original_multipliers(P, it)
    E_final = optimality_errors(W, it, 0.0, opts.scaling_cap)[0]
    return IpmResult(
        status=status, iterate=it, objective=P.f(it.x), iterations=k, trace=trace, timers=timers,
        message=message, strategy=S.describe(), y=y, z=z, conv_error=E_final,
        kkt_residual=kkt_residual(W, it), iterates=iterates, total_cg_iterations=total_cg,
    )
