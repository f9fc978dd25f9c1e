"""Primal log-barrier interior-point method for small smooth convex problems.

Problems are stated as

    minimize    f0(x)
    subject to  g_i(x) <= 0           (smooth convex)
                A x <= b               (linear rows)
                lb <= x <= ub          (box, bounds may be infinite)

Each function object exposes ``value(x)`` and ``full(x) -> (value, grad, hess)``.
Variables whose box has zero width are held fixed and removed from the
Newton system. Feasibility is established with a phase-I problem on
``(x, s)`` that minimizes the largest constraint value ``s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np


class SolverError(RuntimeError):
    """Newton iterations failed to converge; distinct from infeasibility."""


class Infeasible(Exception):
    """Phase I could not find a strictly feasible point."""


class Linear:
    """f(x) = c . x + c0"""

    def __init__(self, c, c0: float = 0.0):
        self.c = np.asarray(c, dtype=float)
        self.c0 = float(c0)

    def value(self, x):
        return float(self.c @ x) + self.c0

    def full(self, x):
        n = self.c.size
        return self.value(x), self.c.copy(), np.zeros((n, n))


class Quadratic:
    """f(x) = 0.5 x'Px + q'x + r"""

    def __init__(self, P, q, r: float = 0.0):
        self.P = np.asarray(P, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.r = float(r)

    def value(self, x):
        return float(0.5 * x @ self.P @ x + self.q @ x) + self.r

    def full(self, x):
        return self.value(x), self.P @ x + self.q, self.P.copy()


class _Shifted:
    """g(x) - s on the phase-I variable z = (x, s)."""

    def __init__(self, fn):
        self.fn = fn

    def value(self, z):
        return self.fn.value(z[:-1]) - z[-1]

    def full(self, z):
        v, g, h = self.fn.full(z[:-1])
        n = z.size
        G = np.empty(n)
        G[:-1] = g
        G[-1] = -1.0
        H = np.zeros((n, n))
        H[:-1, :-1] = h
        return v - z[-1], G, H


class _Restricted:
    """View of a function on the free coordinates of a full vector."""

    def __init__(self, fn, base, free):
        self.fn, self.base, self.free = fn, base, free
        self.all = free.size == base.size
        self._ix = np.ix_(free, free)

    def _lift(self, x):
        if self.all:
            return x
        z = self.base.copy()
        z[self.free] = x
        return z

    def value(self, x):
        return self.fn.value(self._lift(x))

    def full(self, x):
        v, g, h = self.fn.full(self._lift(x))
        if self.all:
            return v, g, h
        return v, g[self.free], h[self._ix]


@dataclass
class ConvexProblem:
    objective: object
    lb: np.ndarray
    ub: np.ndarray
    constraints: List[object] = field(default_factory=list)
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.a_ub is None:
            self.a_ub = np.zeros((0, self.lb.size))
            self.b_ub = np.zeros(0)
        self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float)
        if np.any(self.lb > self.ub):
            raise ValueError("empty box")

    @property
    def n(self) -> int:
        return self.lb.size


@dataclass
class BarrierResult:
    x: np.ndarray
    value: float
    gap: float
    newton_steps: int
    outer_steps: int
    max_violation: float


@dataclass
class _Opts:
    t0: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-10
    max_outer: int = 200
    max_newton: int = 100
    alpha: float = 0.25
    beta: float = 0.5


class _Barrier:
    """Barrier function of a problem restricted to free variables."""

    def __init__(self, objective, cons, A, b, lb, ub):
        self.objective, self.cons, self.A, self.b = objective, cons, A, b
        self.lb, self.ub = lb, ub
        self.has_lb = np.isfinite(lb)
        self.has_ub = np.isfinite(ub)
        self.m = len(cons) + A.shape[0] + int(self.has_lb.sum() + self.has_ub.sum())
        # all linear slacks (box and rows) as  S x <= h
        eye = np.eye(lb.size)
        self._S = np.vstack([A, -eye[self.has_lb], eye[self.has_ub]])
        self._h = np.concatenate([b, -lb[self.has_lb], ub[self.has_ub]])

    def value(self, x, t):
        slack = self._h - self._S @ x
        if not slack.min(initial=np.inf) > 0:
            return np.inf
        phi = -float(np.log(slack).sum())
        for c in self.cons:
            g = c.value(x)
            if not g < 0:
                return np.inf
            phi -= np.log(-g)
        f0 = self.objective.value(x)
        if not np.isfinite(f0):
            return np.inf
        return t * f0 + phi

    def derivs(self, x, t):
        _, g0, h0 = self.objective.full(x)
        grad = t * g0
        hess = t * h0
        for c in self.cons:
            v, g, h = c.full(x)
            inv = -1.0 / v
            grad = grad + inv * g
            hess = hess + inv * h + np.outer(g, g) * inv * inv
        s = 1.0 / (self._h - self._S @ x)
        grad = grad + self._S.T @ s
        hess = hess + (self._S.T * (s * s)) @ self._S
        return grad, hess


def _newton_solve(hess, grad):
    try:
        step = np.linalg.solve(hess, -grad)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    return np.linalg.lstsq(hess, -grad, rcond=None)[0]


def _barrier_loop(bar: _Barrier, x, opts: _Opts, stop=None):
    t = opts.t0
    steps = 0
    outer = 0
    while True:
        outer += 1
        converged = False
        for _ in range(opts.max_newton):
            grad, hess = bar.derivs(x, t)
            dx = _newton_solve(hess, grad)
            lam2 = -float(grad @ dx)
            if not np.isfinite(lam2):
                raise SolverError("non-finite Newton decrement")
            f = bar.value(x, t)
            # below round-off of f a smaller decrement cannot be resolved
            if lam2 / 2.0 <= max(opts.newton_tol, 1e-13 * abs(f)):
                converged = True
                break
            s = 1.0
            while True:
                xn = x + s * dx
                fn = bar.value(xn, t)
                if fn <= f - opts.alpha * s * lam2:
                    break
                s *= opts.beta
                if s < 1e-16:
                    break
            if s < 1e-16:
                # no progress possible at this precision
                converged = lam2 < 1e-6
                break
            x = xn
            steps += 1
            if stop is not None and stop(x):
                return x, t, steps, outer, True
        if not converged and lam2 > 1e-3:
            raise SolverError(f"centering failed (decrement {lam2:.3g})")
        if bar.m / t < opts.gap_tol or outer >= opts.max_outer:
            if bar.m / t >= opts.gap_tol:
                raise SolverError("outer iteration cap reached")
            return x, t, steps, outer, False
        t *= opts.mu


def _interior_start(lb, ub, x0):
    both = np.isfinite(lb) & np.isfinite(ub)
    x = np.where(both, 0.5 * (np.where(both, lb, 0.0) + np.where(both, ub, 0.0)), 0.0)
    x = np.where(np.isfinite(lb) & ~np.isfinite(ub), lb + 1.0, x)
    x = np.where(~np.isfinite(lb) & np.isfinite(ub), ub - 1.0, x)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        w = ub - lb
        margin = np.where(np.isfinite(w), 1e-3 * w, 1.0)
        x = np.clip(x0, lb + margin, ub - margin)
        x = np.where(np.isfinite(x), x, 0.0)
    return x


def max_violation(problem: ConvexProblem, x: np.ndarray) -> float:
    v = [c.value(x) for c in problem.constraints]
    if problem.a_ub.shape[0]:
        v.extend(problem.a_ub @ x - problem.b_ub)
    return max(v) if v else -np.inf


def minimize_convex(problem: ConvexProblem, gap_tol: float = 1e-8,
                    phase1_tol: float = 1e-9) -> BarrierResult:
    """Solve ``problem``; raises ``Infeasible`` or ``SolverError``."""
    opts = _Opts(gap_tol=gap_tol)
    lb, ub = problem.lb, problem.ub
    width = ub - lb
    fixed = np.isfinite(width) & (width <= 1e-12 * np.maximum(1.0, np.abs(lb)))
    free = np.flatnonzero(~fixed)
    base = _interior_start(lb, ub, problem.x0)
    base[fixed] = lb[fixed]

    A = problem.a_ub
    b = problem.b_ub - A[:, fixed] @ base[fixed] if A.shape[0] else problem.b_ub
    A = A[:, free]
    obj = _Restricted(problem.objective, base, free)
    cons = [_Restricted(c, base, free) for c in problem.constraints]
    flb, fub = lb[free], ub[free]
    x = base[free].copy()

    if free.size == 0:
        viol = max_violation(problem, base)
        if viol >= -phase1_tol and (problem.constraints or problem.a_ub.shape[0]):
            raise Infeasible("fixed point violates constraints")
        return BarrierResult(base, problem.objective.value(base), 0.0, 0, 0, viol)

    # phase I: minimize s with g_i(x) <= s
    def worst(z):
        v = [c.value(z) for c in cons]
        if A.shape[0]:
            v.extend(A @ z - b)
        return max(v) if v else -np.inf

    w0 = worst(x)
    if not np.isfinite(w0) and (cons or A.shape[0]):
        # start point outside the functions' domain: pull towards the box center
        raise SolverError("start point has non-finite constraint value")
    if w0 >= -phase1_tol:
        s0 = max(w0, 0.0) + 1.0
        z = np.append(x, s0)
        pobj = Linear(np.append(np.zeros(free.size), 1.0))
        pcons = [_Shifted(c) for c in cons]
        pA = np.hstack([A, -np.ones((A.shape[0], 1))]) if A.shape[0] else np.zeros((0, free.size + 1))
        pbar = _Barrier(pobj, pcons, pA, b, np.append(flb, -np.inf), np.append(fub, np.inf))

        def enough(zz):
            return zz[-1] < -1e-3 and worst(zz[:-1]) < -1e-3

        z, _, _, _, early = _barrier_loop(pbar, z, _Opts(gap_tol=phase1_tol * 1e-1), stop=enough)
        x = z[:-1]
        if not early and not worst(x) < -phase1_tol:
            raise Infeasible(f"phase-I optimum {worst(x):.3g}")

    bar = _Barrier(obj, cons, A, b, flb, fub)
    x, t, steps, outer, _ = _barrier_loop(bar, x, opts)
    full = base.copy()
    full[free] = x
    return BarrierResult(full, problem.objective.value(full), bar.m / t, steps, outer,
                         max_violation(problem, full))


def check_hessians(fns: Sequence[object], points: np.ndarray, step: float = 1e-4):
    """Smallest eigenvalue of finite-difference Hessians, relative to their size.

    Returns the worst value of ``lambda_min / (1 + ||H||)`` over all functions
    and points. Second differences use Richardson extrapolation of two steps.
    """
    worst = np.inf
    for fn in fns:
        for x in points:
            H = fd_hessian(fn.value, x, step)
            lam = np.linalg.eigvalsh(0.5 * (H + H.T))[0]
            worst = min(worst, lam / (1.0 + np.linalg.norm(H, 2)))
    return worst


def fd_hessian(f, x, h):
    def raw(hh):
        n = x.size
        H = np.empty((n, n))
        f0 = f(x)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = hh
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / hh ** 2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = hh
                v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * hh * hh)
                H[i, j] = H[j, i] = v
        return H

    return (4.0 * raw(h / 2) - raw(h)) / 3.0
