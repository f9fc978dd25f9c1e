"""Brute-force and numerical oracles, independent of the convex engine.

``grid_solve`` enumerates every mode tuple of a small instance and grids the
device-side variables (ratio, device frequency, transmit power, bandwidth)
per user. For a trial cost bound the least fog frequency or backhaul rate a
grid point needs is explicit, so the shared capacities are enforced exactly
for the gridded points and the optimal bound per tuple follows by bisection.
The result is attained by a concrete allocation and is therefore an upper
bound on the true optimum that can only improve as the grids are refined.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import Decision, Mode, UserProfile, beta0, omega_bounds, wedc
from .scenario import Instance

MAX_USERS = 3
MIN_POINTS = 8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GridSpec:
    """Points per axis; log-spaced axes run from ``floor * top`` to ``top``."""
    points: int = 60
    omega: Optional[int] = None
    f_u: Optional[int] = None
    power: Optional[int] = None  # total transmit power p * rho
    rho: Optional[int] = None
    floor: float = 1e-3
    offload: bool = True  # False enumerates local execution only

    def __post_init__(self):
        for name in ("points", "omega", "f_u", "power", "rho"):
            v = getattr(self, name)
            if v is not None and v < MIN_POINTS:
                raise ValueError(f"{name}: need at least {MIN_POINTS} points per axis")
        if not 0 < self.floor < 1:
            raise ValueError("floor must lie in (0, 1)")

    def n(self, axis: str) -> int:
        v = getattr(self, axis)
        return self.points if v is None else v

    def refined(self) -> "GridSpec":
        """Grid whose every axis contains this one's points (2n - 1 per axis)."""
        kw = {a: 2 * self.n(a) - 1 for a in ("omega", "f_u", "power", "rho")}
        return GridSpec(2 * self.points - 1, floor=self.floor, offload=self.offload, **kw)


def _logspace(lo, hi, n):
    if hi <= lo:
        return np.array([hi])
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def _pareto(t, c, *payload):
    """Points not dominated in (t, c), both minimized; sorted by t."""
    order = np.lexsort((c, t))
    t, c = t[order], c[order]
    best = np.minimum.accumulate(c)
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = c[1:] < best[:-1]
    return (t[keep], c[keep]) + tuple(p[order][keep] for p in payload)


@dataclass
class Frontier:
    """Non-dominated device-side grid points of one user in one mode.

    ``t`` excludes the remote part of the delay; ``cycles`` (fog) or
    ``bits`` (cloud) is what the shared resource must move.
    """
    mode: Mode
    t: np.ndarray
    cost: np.ndarray
    load: np.ndarray  # cycles at the fog or bits on the backhaul
    omega: np.ndarray
    f_u: np.ndarray
    p: np.ndarray
    rho: np.ndarray

    def need(self, profile: UserProfile, t_cloud: float, eta):
        """Least resource meeting bound(s) ``eta`` and the deadline, with argmin."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))[:, None]
        if profile.w_t > 0:
            cost_room = (eta - self.cost[None, :]) / profile.w_t
        else:
            cost_room = np.where(eta >= self.cost[None, :], np.inf, -np.inf)
        room = np.minimum(cost_room, profile.t_max - self.t[None, :])
        if self.mode == Mode.CLOUD:
            room = room - t_cloud
        with np.errstate(divide="ignore"):
            r = np.where(room > 0, self.load[None, :] / room, np.inf)
        j = np.argmin(r, axis=1)
        return r[np.arange(r.shape[0]), j], j


def local_grid(profile: UserProfile, spec: GridSpec) -> Tuple[float, float]:
    """Least local cost over a frequency grid spanning [c / t_max, f_max]."""
    lo = profile.c_total / profile.t_max
    if lo > profile.f_max:
        return math.inf, math.nan
    f = _logspace(lo, profile.f_max, spec.n("f_u"))
    c = profile.c_total
    cost = profile.w_t * c / f + profile.w_e * profile.alpha * f * f * c
    i = int(np.argmin(cost))
    return float(cost[i]), float(f[i])


def frontier(profile: UserProfile, b0: float, mode: Mode, spec: GridSpec) -> Optional[Frontier]:
    """Device-side frontier for fog or cloud execution; None if offloading is off."""
    if mode not in (Mode.FOG, Mode.CLOUD):
        raise ValueError("fog or cloud only")
    if not (profile.rho_max > 0 and b0 > 0):
        return None
    lo, hi = omega_bounds(profile)
    omegas = _logspace(lo, hi, spec.n("omega"))
    fu = _logspace(profile.f_max * spec.floor, profile.f_max, spec.n("f_u"))
    pw = _logspace(profile.p_max * spec.floor, profile.p_max, spec.n("power"))
    rho = _logspace(profile.rho_max * spec.floor, profile.rho_max, spec.n("rho"))
    P, R = np.meshgrid(pw, rho, indexing="ij")
    P, R = P.ravel(), R.ravel()
    p = P / R
    spectral = np.log2(1.0 + p * b0)
    parts = []
    for w in omegas:
        cyc = profile.c_local + profile.comp_user.workload(w)
        ta = cyc / fu
        ea = profile.alpha * fu * fu * cyc
        fa = _pareto(ta, profile.w_t * ta + profile.w_e * ea, fu)
        bits = profile.b_in / w
        tb = bits / (R * spectral)
        eb = (p + profile.p_circuit) * bits / spectral
        fb = _pareto(tb, profile.w_t * tb + profile.w_e * eb, p, R)
        t = (fa[0][:, None] + fb[0][None, :]).ravel()
        c = (fa[1][:, None] + fb[1][None, :]).ravel()
        ff = np.repeat(fa[2], fb[0].size)
        pp = np.tile(fb[2], fa[0].size)
        rr = np.tile(fb[3], fa[0].size)
        t, c, ff, pp, rr = _pareto(t, c, ff, pp, rr)
        if mode == Mode.FOG:
            load = profile.c_offloadable + profile.decomp_user.workload(w)
        else:
            load = bits
        parts.append((t, c, np.full(t.size, load), np.full(t.size, w), ff, pp, rr))
    cols = [np.concatenate(x) for x in zip(*parts)]
    return Frontier(mode, *cols)


@dataclass
class GridResult:
    eta: float
    modes: Tuple[Mode, ...]
    decisions: List[Decision]
    costs: List[float]
    tuples_checked: int
    info: dict = field(default_factory=dict)


def _tuple_eta(inst, modes, fronts, locals_, rel_tol=1e-10):
    """Least bound for one mode tuple (inf if none), by bisection."""
    cfg = inst.config
    users = inst.users
    lo = 0.0
    for k, m in enumerate(modes):
        if m == Mode.LOCAL:
            lo = max(lo, locals_[k][0])
    if math.isinf(lo):
        return math.inf, None

    def ok(eta):
        fog = bh = 0.0
        picks = {}
        for k, m in enumerate(modes):
            if m == Mode.LOCAL:
                if locals_[k][0] > eta:
                    return False, None
                continue
            r, j = fronts[k][m].need(users[k], cfg.t_cloud, eta)
            if not math.isfinite(r[0]):
                return False, None
            picks[k] = (float(r[0]), int(j[0]))
            if m == Mode.FOG:
                fog += r[0]
            else:
                bh += r[0]
        return fog <= cfg.f_fog_max and bh <= cfg.d_max, picks

    hi = max(lo, max((float(np.min(fronts[k][m].cost)) for k, m in enumerate(modes) if m != Mode.LOCAL),
                     default=lo))
    hi = max(hi, 1e-12) * 2.0
    good, picks = ok(hi)
    grow = 0
    while not good:
        hi *= 2.0
        grow += 1
        if grow > 60:
            return math.inf, None
        good, picks = ok(hi)
    if lo > 0:
        good_lo, p_lo = ok(lo)
        if good_lo:
            return lo, p_lo
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        g, p = ok(mid)
        if g:
            hi, picks = mid, p
        else:
            lo = mid
    return hi, picks


def grid_solve(instance: Instance, spec: GridSpec = GridSpec()) -> GridResult:
    """Min-max cost over all mode tuples and the device-side grids (K <= 3)."""
    users = instance.users
    if len(users) > MAX_USERS:
        raise ValueError(f"grid oracle handles at most {MAX_USERS} users")
    cfg = instance.config
    locals_ = [local_grid(u, spec) for u in users]
    fronts = []
    for u in users:
        b0 = beta0(u, cfg) if u.beta_lin > 0 else 0.0
        fronts.append({m: frontier(u, b0, m, spec) for m in (Mode.FOG, Mode.CLOUD)} if spec.offload else {})
    choices = []
    for k in range(len(users)):
        opts = [Mode.LOCAL] + [m for m, f in fronts[k].items() if f is not None]
        choices.append(opts)
    best = (math.inf, None, None)
    count = 0
    for modes in itertools.product(*choices):
        count += 1
        eta, picks = _tuple_eta(instance, modes, fronts, locals_)
        if eta < best[0]:
            best = (eta, modes, picks)
    eta, modes, picks = best
    if modes is None:
        return GridResult(math.inf, (), [], [], count)
    decisions = []
    for k, (u, m) in enumerate(zip(users, modes)):
        if m == Mode.LOCAL:
            decisions.append(Decision(Mode.LOCAL, f_u=locals_[k][1]))
            continue
        r, j = picks[k]
        fr = fronts[k][m]
        w = float(fr.omega[j])
        common = dict(omega_u=w, omega_f=w, f_u=float(fr.f_u[j]), p=float(fr.p[j]), rho=float(fr.rho[j]))
        if m == Mode.FOG:
            decisions.append(Decision(m, f_f=r, **common))
        else:
            decisions.append(Decision(m, d=r, **common))
    costs = [wedc(d, u, cfg) for d, u in zip(decisions, users)]
    return GridResult(eta, modes, decisions, costs, count)


# ------------------------------------------------------------- 1-D scans

def scan_min_1d(fn: Callable[[float], float], interval: Tuple[float, float], n: int = 1000,
                tol: float = 1e-12, log: bool = False) -> Tuple[float, float]:
    """Dense scan then golden-section refinement around the best cell."""
    if n < 100:
        raise ValueError("need n >= 100")
    a, b = interval
    xs = _logspace(a, b, n) if log else np.linspace(a, b, n)
    ys = np.array([fn(float(x)) for x in xs])
    i = int(np.nanargmin(ys))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    best_x, best_y = float(xs[i]), float(ys[i])
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol * max(1.0, abs(lo) + abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fn(x2)
    for x, y in ((x1, f1), (x2, f2)):
        if y < best_y:
            best_x, best_y = float(x), float(y)
    return best_x, best_y


def richardson_gradient(fn: Callable[[np.ndarray], float], point, step: float = 1e-3) -> np.ndarray:
    """Central differences with one Richardson extrapolation step."""
    x = np.asarray(point, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)

        def d(hh):
            e[i] = hh
            return (fn(x + e) - fn(x - e)) / (2.0 * hh)

        g[i] = (4.0 * d(h / 2.0) - d(h)) / 3.0
    return g


def finite_diff_check(fn: Callable[[np.ndarray], float], point, analytic_grad,
                      step: float = 1e-3) -> float:
    """Largest gradient discrepancy relative to the gradient's size."""
    num = richardson_gradient(fn, point, step)
    g = np.asarray(analytic_grad, dtype=float)
    scale = max(float(np.max(np.abs(g))), 1e-300)
    return float(np.max(np.abs(num - g)) / scale)
