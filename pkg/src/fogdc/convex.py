"""Per-user convex subproblems in log-transformed variables.

Three problems share one variable layout ``x = (log omega_u, log f_u, log r,
log p, log rho[, log theta])`` where ``r`` is the fog CPU frequency or the
backhaul rate and ``theta`` is the fog compressor's own step ratio:

* ``solve_p3``: smallest fog frequency that lets the user meet cost bound
  ``eta`` and its deadline when executed at the fog.
* ``solve_p4``: smallest backhaul rate for execution at the cloud.
* ``solve_p_dk``: smallest fog frequency for cloud execution with fog
  recompression at a fixed backhaul rate ``d``.

After the change of variables every delay and energy term is either a plain
exponential or an ``exp(linear) / log2(1 + beta0 exp(log p))`` term, so the
cost and deadline constraints are convex and the objective is linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barrier import (ConvexProblem, Infeasible, Linear, check_hessians, max_violation,
                      minimize_convex)
from .model import (Decision, Mode, SystemConfig, UserProfile, beta0, omega_bounds,
                    total_delay, wedc)
from .terms import LogBound, TermSum

W, FU, R, P, RHO, TH = range(6)

# lower box edges relative to the upper ones
FLOOR = 1e-6


@dataclass(frozen=True)
class TransformedPoint:
    lw: float
    lf_u: float
    lp: float
    lr: float
    lf_f: Optional[float] = None
    ld: Optional[float] = None
    lth: Optional[float] = None


@dataclass(frozen=True)
class Stage1Result:
    mode: Mode
    resource: float  # Hz for fog problems, bit/s for P4
    point: TransformedPoint
    xi1: float
    t1: float
    decision: Decision

    @property
    def f_f_rq(self) -> float:
        return self.resource if self.mode != Mode.CLOUD else 0.0

    @property
    def d_rq(self) -> float:
        return self.resource if self.mode == Mode.CLOUD else self.decision.d


@dataclass
class ConvexityReport:
    worst_ratio: float  # min over points of lambda_min / (1 + ||H||)
    n_points: int
    tol: float = 1e-6

    @property
    def ok(self) -> bool:
        return self.worst_ratio >= -self.tol


def cost_terms(profile: UserProfile, config: SystemConfig, mode: Mode,
               wt: float, we: float, d_fixed: Optional[float] = None) -> TermSum:
    """``wt * delay + we * energy`` for an offloading mode as a TermSum."""
    b0 = beta0(profile, config)
    n = 6 if mode == Mode.CLOUD_RECOMPRESSED else 5
    ts = TermSum(n, P, b0)
    cu, cd, cf = profile.comp_user, profile.decomp_user, profile.comp_fog
    cu0 = profile.c_local + cu.gamma0 * cu.gamma3
    if wt:
        ts.add(wt * cu0, {FU: -1})
        ts.add(wt * cu.gamma0 * cu.gamma1, {W: cu.gamma2, FU: -1})
        ts.add(wt * profile.b_in, {W: -1, RHO: -1}, rate=True)
        if mode == Mode.FOG:
            ts.add(wt * (profile.c_offloadable + cd.gamma0 * cd.gamma3), {R: -1})
            ts.add(wt * cd.gamma0 * cd.gamma1, {W: cd.gamma2, R: -1})
        elif mode == Mode.CLOUD:
            ts.add(wt * profile.b_in, {W: -1, R: -1})
            ts.add_const(wt * config.t_cloud)
        elif mode == Mode.CLOUD_RECOMPRESSED:
            ts.add(wt * (cf.gamma0 * cf.gamma3 + cd.gamma0 * cd.gamma3), {R: -1})
            ts.add(wt * cf.gamma0 * cf.gamma1, {TH: cf.gamma2, R: -1})
            ts.add(wt * cd.gamma0 * cd.gamma1, {W: cd.gamma2, R: -1})
            ts.add(wt * profile.b_in / d_fixed, {W: -1, TH: -1})
            ts.add_const(wt * config.t_cloud)
        else:
            raise ValueError("offloading modes only")
    if we:
        ts.add(we * profile.alpha * cu0, {FU: 2})
        ts.add(we * profile.alpha * cu.gamma0 * cu.gamma1, {W: cu.gamma2, FU: 2})
        ts.add(we * profile.b_in, {P: 1, W: -1}, rate=True)
        ts.add(we * profile.p_circuit * profile.b_in, {W: -1}, rate=True)
    return ts


def build_problem(profile: UserProfile, config: SystemConfig, eta: float, mode: Mode,
                  d_fixed: Optional[float] = None, minimize_cost: bool = False) -> ConvexProblem:
    """Assemble the transformed problem for one user and one offloading mode.

    With ``minimize_cost`` the objective is the cost itself and the resource
    variable is pinned at its upper bound (used to find the least achievable
    cost); otherwise the objective is the log of the resource.
    """
    b0 = beta0(profile, config)
    n = 6 if mode == Mode.CLOUD_RECOMPRESSED else 5
    lo_w, hi_w = omega_bounds(profile)
    r_max = config.d_max if mode == Mode.CLOUD else config.f_fog_max
    rho_lo = profile.rho_max * FLOOR
    p_hi = profile.p_max / rho_lo
    p_lo = min(FLOOR / b0, p_hi * FLOOR)
    lb = np.empty(n)
    ub = np.empty(n)
    lb[W], ub[W] = math.log(lo_w), math.log(hi_w)
    lb[FU], ub[FU] = math.log(profile.f_max * FLOOR), math.log(profile.f_max)
    lb[R], ub[R] = math.log(r_max * FLOOR), math.log(r_max)
    lb[P], ub[P] = math.log(p_lo), math.log(p_hi)
    lb[RHO], ub[RHO] = math.log(rho_lo), math.log(profile.rho_max)
    if n == 6:
        lb[TH], ub[TH] = math.log(profile.comp_fog.omega_min), math.log(profile.comp_fog.omega_max)
    if minimize_cost:
        lb[R] = ub[R]

    cons = []
    cost = cost_terms(profile, config, mode, profile.w_t, profile.w_e, d_fixed)
    if math.isfinite(eta) and not minimize_cost:
        cons.append(LogBound(cost, eta))
    if math.isfinite(profile.t_max):
        cons.append(LogBound(cost_terms(profile, config, mode, 1.0, 0.0, d_fixed), profile.t_max))
    a = np.zeros((1, n))
    a[0, P] = a[0, RHO] = 1.0
    b = np.array([math.log(profile.p_max)])

    x0 = 0.5 * (lb + ub)
    x0[P] = min(max(math.log(10.0 / b0), lb[P]), ub[P])
    # keep the start strictly inside the power cap
    x0[P] = min(x0[P], b[0] - x0[RHO] - 1.0)
    obj = cost if minimize_cost else Linear(np.eye(n)[R])
    return ConvexProblem(obj, lb, ub, cons, a, b, x0)


def _to_decision(x: np.ndarray, mode: Mode, d_fixed: Optional[float]) -> Decision:
    w = math.exp(x[W])
    common = dict(omega_u=w, f_u=math.exp(x[FU]), p=math.exp(x[P]), rho=math.exp(x[RHO]))
    if mode == Mode.FOG:
        return Decision(mode, omega_f=w, f_f=math.exp(x[R]), **common)
    if mode == Mode.CLOUD:
        return Decision(mode, omega_f=w, d=math.exp(x[R]), **common)
    return Decision(mode, omega_f=w * math.exp(x[TH]), f_f=math.exp(x[R]), d=d_fixed, **common)


def _point(x: np.ndarray, mode: Mode, d_fixed: Optional[float]) -> TransformedPoint:
    kw = {}
    if mode == Mode.CLOUD:
        kw["ld"] = float(x[R])
    else:
        kw["lf_f"] = float(x[R])
    if mode == Mode.CLOUD_RECOMPRESSED:
        kw["ld"] = math.log(d_fixed)
        kw["lth"] = float(x[TH])
    return TransformedPoint(float(x[W]), float(x[FU]), float(x[P]), float(x[RHO]), **kw)


def _solve(profile, config, eta, mode, d_fixed=None) -> Optional[Stage1Result]:
    if not profile.can_offload:
        return None
    if eta <= 0:
        return None
    prob = build_problem(profile, config, eta, mode, d_fixed)
    try:
        res = minimize_convex(prob)
    except Infeasible:
        return None
    x = res.x
    dec = _to_decision(x, mode, d_fixed)
    value = dec.d if mode == Mode.CLOUD else dec.f_f
    return Stage1Result(mode, value, _point(x, mode, d_fixed),
                        wedc(dec, profile, config), total_delay(dec, profile, config), dec)


def solve_p3(profile: UserProfile, config: SystemConfig, eta: float) -> Optional[Stage1Result]:
    return _solve(profile, config, eta, Mode.FOG)


def solve_p4(profile: UserProfile, config: SystemConfig, eta: float) -> Optional[Stage1Result]:
    return _solve(profile, config, eta, Mode.CLOUD)


def solve_p_dk(profile: UserProfile, config: SystemConfig, eta: float, d: float) -> Optional[Stage1Result]:
    """Least fog frequency for recompressed cloud execution at backhaul ``d``."""
    if not d > 0:
        return None
    return _solve(profile, config, eta, Mode.CLOUD_RECOMPRESSED, d)


def min_cost(profile: UserProfile, config: SystemConfig, mode: Mode) -> float:
    """Least cost reachable in ``mode`` with the whole shared resource.

    Recompressed cloud execution is evaluated with the whole backhaul as
    well. Returns +inf when even that violates the deadline. The value is at
    most ``1e-8`` (absolute) above the true minimum.
    """
    if not profile.can_offload:
        return math.inf
    d_fixed = config.d_max if mode == Mode.CLOUD_RECOMPRESSED else None
    prob = build_problem(profile, config, math.inf, mode, d_fixed, minimize_cost=True)
    try:
        res = minimize_convex(prob)
    except Infeasible:
        return math.inf
    return res.value


def feasible_points(problem: ConvexProblem, n_points: int, rng=None) -> np.ndarray:
    """Random feasible points: box samples pulled toward an interior solution.

    The feasible set is convex, so every box sample has a feasible point on
    its segment to the barrier minimizer; the pull factor is halved until the
    sample lands inside.
    """
    rng = np.random.default_rng(rng)
    lb, ub = problem.lb, problem.ub
    centre = minimize_convex(problem).x
    out = []
    for _ in range(n_points):
        y = lb + (ub - lb) * rng.uniform(0.05, 0.95, size=lb.size)
        t = 1.0
        while t > 1e-6:
            x = centre + t * (y - centre)
            if max_violation(problem, x) < 0:
                out.append(x)
                break
            t *= 0.5
        else:
            out.append(centre)
    return np.array(out)


def check_convexity(problem: ConvexProblem, n_points: int, rng=None,
                    points: Optional[np.ndarray] = None, step: float = 1e-3) -> ConvexityReport:
    """Finite-difference curvature of every nonlinear function of ``problem``.

    Points default to random feasible points. A 1e-3 step keeps round-off in
    the second differences well below the 1e-6 tolerance at these scales.
    """
    if points is None:
        points = feasible_points(problem, n_points, rng)
    fns = list(problem.constraints)
    if not isinstance(problem.objective, Linear):
        fns.append(problem.objective)
    return ConvexityReport(check_hessians(fns, points, step), len(points))
