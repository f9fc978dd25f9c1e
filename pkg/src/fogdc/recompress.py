"""Cloud execution after recompression at the fog (the third offloading mode).

A user in this mode uploads its compressed payload ``b = b_in / omega_u``;
the fog decompresses it, recompresses it with its own step ratio ``theta``
and forwards ``b / theta`` bits over the backhaul at rate ``d``. With the
user-side variables fixed from a stage-1 solve, the time left for the fog
part is ``nu0`` and the least fog CPU is the closed form

    H0(theta, d) = theta d (g1t theta^g2 + g3t) / (nu0 theta d - b).

The best ``theta`` follows a three-case rule through ``H1`` (the ``d`` at
which ``dH0/dtheta`` vanishes), and for a backhaul price ``lam`` the best
``d`` solves ``dH0/dd(theta*(d), d) + lam = 0``. Three feasibility engines
select one mode per offloading user under the shared fog and backhaul
limits: a piecewise-linear approximation of the exact fog-vs-backhaul curve
(PLA), a one-dimensional sweep over ``lam`` (OSTS), and dual sub-gradient
iterations with relaxed mode vectors (IUTS).

Inside OSTS and IUTS fog CPU is measured in units of the fog capacity and
backhaul in units of the backhaul capacity, so ``lam`` is dimensionless.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .convex import Stage1Result
from .jcora import Solution, Stage1Cache, Verification, bisect
from .knapsack import InfeasibleSelection, Option, solve_mckp
from .model import (Decision, Mode, SystemConfig, UserProfile, beta0, comp_eval, uplink_rate,
                    user_cycles)
from .scenario import Instance

EPS_D = 1.0  # bit/s kept clear of the stage-1 backhaul in the PLA grid
_BISECT = 200


class Mode3Infeasible(ValueError):
    """The recompressed cloud mode cannot meet the time budget here."""


@dataclass(frozen=True)
class Mode3Coefficients:
    nu0: float  # s left for fog processing and forwarding
    g1t: float  # cycles
    g2: float
    g3t: float  # cycles, includes the decompression load
    b_in: float  # bits arriving at the fog (already user-compressed)
    omega_f_min: float
    omega_f_max: float

    def __post_init__(self):
        if self.g1t < 0 or not self.g3t > 0:
            raise ValueError("need g1t >= 0 and g3t > 0")
        if not 0 < self.omega_f_min <= self.omega_f_max:
            raise ValueError("fog ratio bounds out of order")
        if not math.isfinite(self.nu0):
            raise ValueError("nu0 must be finite")

    @property
    def interior_case(self) -> bool:
        """Whether the best fog ratio can move off its upper bound."""
        return self.g2 > 0 and self.g1t > 0


# ------------------------------------------------------------ closed forms

def _h0(c, w, d):
    w = np.asarray(w, dtype=float)
    den = c.nu0 * w * d - c.b_in
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = w * d * (c.g1t * w ** c.g2 + c.g3t) / den
    return np.where(den > 0, val, np.inf)


def _h1(c, w):
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return ((c.g1t * c.b_in * (c.g2 + 1.0) * w ** c.g2 + c.g3t * c.b_in)
                / (c.g1t * c.nu0 * c.g2 * w ** (c.g2 + 1.0)))


def _h2(c, w, d):
    w = np.asarray(w, dtype=float)
    den = c.nu0 * w * d - c.b_in
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return -c.b_in * w * (c.g1t * w ** c.g2 + c.g3t) / den ** 2


def h0(coeffs: Mode3Coefficients, omega_f: float, d: float) -> float:
    """Least fog CPU (Hz) for fog ratio ``omega_f`` and backhaul ``d``."""
    if not coeffs.nu0 * omega_f * d > coeffs.b_in:
        raise Mode3Infeasible("forwarding alone exceeds the time budget")
    return float(_h0(coeffs, omega_f, d))


def h1(coeffs: Mode3Coefficients, omega_f: float) -> float:
    """Backhaul rate at which ``omega_f`` is the unconstrained best fog ratio."""
    if not coeffs.interior_case:
        raise ValueError("H1 needs g1t > 0 and g2 > 0")
    return float(_h1(coeffs, omega_f))


def inv_h1(coeffs: Mode3Coefficients, d: float) -> float:
    """Fog ratio with ``H1(omega) = d``, clipped to the ratio bounds."""
    if not coeffs.interior_case:
        raise ValueError("H1 needs g1t > 0 and g2 > 0")
    return float(_inv_h1(coeffs, np.asarray(d, dtype=float)))


_FIELDS = ("nu0", "g1t", "g2", "g3t", "b_in", "omega_f_min", "omega_f_max")


def _take(c, mask):
    """Coefficients broadcast to ``mask.shape`` and restricted to it (1-D)."""
    return SimpleNamespace(**{f: np.broadcast_to(np.asarray(getattr(c, f), dtype=float), mask.shape)[mask]
                              for f in _FIELDS})


def _bisect_log(pred, lo, hi):
    """Vector bisection in log space; ``pred`` True means move ``lo`` up."""
    n = int(math.ceil(math.log2(max(float(np.max(hi - lo, initial=0.0)), 1e-300) / 1e-13))) + 1
    for _ in range(max(0, min(n, _BISECT))):
        mid = 0.5 * (lo + hi)
        up = pred(np.exp(mid))
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return np.exp(0.5 * (lo + hi))


def _inv_h1(c, d):
    d = np.asarray(d, dtype=float)
    shape = np.broadcast(d, np.asarray(c.omega_f_min), np.asarray(c.nu0)).shape
    d = np.broadcast_to(d, shape)
    wmin = np.broadcast_to(np.asarray(c.omega_f_min, dtype=float), shape)
    wmax = np.broadcast_to(np.asarray(c.omega_f_max, dtype=float), shape)
    with np.errstate(invalid="ignore"):
        w = np.where(d >= _h1(c, c.omega_f_min), wmin, np.where(d <= _h1(c, c.omega_f_max), wmax, np.nan))
    todo = np.isnan(w)
    if np.any(todo):
        sub, dd = _take(c, todo), d[todo]
        # H1 decreases in omega
        w[todo] = _bisect_log(lambda x: _h1(sub, x) > dd, np.log(sub.omega_f_min), np.log(sub.omega_f_max))
    return w if w.ndim else float(w)


def thresholds(coeffs: Mode3Coefficients):
    """``(d1, d2, d3)``: feasibility edge and the two case boundaries."""
    c = coeffs
    d1 = c.b_in / (c.nu0 * c.omega_f_max)
    if not c.interior_case:
        return d1, math.inf, math.inf
    return d1, float(_h1(c, c.omega_f_max)), float(_h1(c, c.omega_f_min))


def _omega_star(c, d):
    d = np.asarray(d, dtype=float)
    shape = np.broadcast(d, np.asarray(c.omega_f_max)).shape
    w = np.broadcast_to(np.asarray(c.omega_f_max, dtype=float), shape).copy()
    interior = np.broadcast_to((np.asarray(c.g2) > 0) & (np.asarray(c.g1t) > 0), shape)
    if np.any(interior):
        sub = _take(c, interior)
        w[interior] = _inv_h1(sub, np.broadcast_to(d, shape)[interior])
    return w


def optimal_omega_f(coeffs: Mode3Coefficients, d: float) -> float:
    """Fog ratio minimizing ``H0(., d)`` over its bounds."""
    d1, d2, d3 = thresholds(coeffs)
    if coeffs.nu0 <= 0 or not d > d1:
        raise Mode3Infeasible("backhaul below the feasibility edge")
    if not coeffs.interior_case or d <= d2:
        return coeffs.omega_f_max
    if d > d3:
        return coeffs.omega_f_min
    return inv_h1(coeffs, d)


def dh0_dd(coeffs: Mode3Coefficients, omega_f: float, d: float) -> float:
    """Partial derivative of ``H0`` in ``d`` (always negative)."""
    if not coeffs.nu0 * omega_f * d > coeffs.b_in:
        raise Mode3Infeasible("forwarding alone exceeds the time budget")
    return float(_h2(coeffs, omega_f, d))


def composed_gradient(coeffs: Mode3Coefficients, d: float) -> float:
    """``dH0/dd`` at the best fog ratio for ``d``; equals the total derivative."""
    return dh0_dd(coeffs, optimal_omega_f(coeffs, d), d)


def least_fog(coeffs: Mode3Coefficients, d: float) -> float:
    """``H0`` at the best fog ratio for backhaul ``d``."""
    return h0(coeffs, optimal_omega_f(coeffs, d), d)


def _root_at(c, w, lam):
    # dH0/dd(w, d) = -lam  for fixed w, on the branch d > b / (nu0 w)
    a = c.g1t * w ** c.g2 + c.g3t
    with np.errstate(divide="ignore", invalid="ignore"):
        return (c.b_in + np.sqrt(c.b_in * w * a / lam)) / (c.nu0 * w)


def _d_of_lambda(c, lam, omega=False):
    """Root of the composed gradient for arrays of coefficients and prices.

    With ``omega`` the best fog ratio at the root is returned as well.
    """
    lam = np.asarray(lam, dtype=float)
    shape = np.broadcast(lam, np.asarray(c.nu0)).shape
    lam = np.broadcast_to(lam, shape)
    wmax = np.broadcast_to(np.asarray(c.omega_f_max, dtype=float), shape)
    wmin = np.broadcast_to(np.asarray(c.omega_f_min, dtype=float), shape)
    interior = np.broadcast_to((np.asarray(c.g2) > 0) & (np.asarray(c.g1t) > 0), shape)
    r1 = _root_at(c, wmax, lam)
    r3 = _root_at(c, wmin, lam)
    with np.errstate(invalid="ignore"):
        d2 = np.where(interior, _h1(c, wmax), np.inf)
        d3 = np.where(interior, _h1(c, wmin), np.inf)
        first = r1 <= d2
        last = ~first & (r3 >= d3)
    out = np.where(first, r1, np.where(last, r3, np.nan))
    w = np.where(first, wmax, np.where(last, wmin, np.nan))
    mid = ~first & ~last & interior & (lam > 0)
    if np.any(mid):
        # interior branch: d = H1(w), with the gradient decreasing in w;
        # too steep means a smaller w (larger d)
        sub, lm = _take(c, mid), lam[mid]
        wm = _bisect_log(lambda x: ~(_h2(sub, x, _h1(sub, x)) < -lm),
                         np.log(sub.omega_f_min), np.log(sub.omega_f_max))
        w[mid] = wm
        out[mid] = _h1(sub, wm)
    out = np.where(lam > 0, out, np.inf)
    w = np.where(lam > 0, w, wmin)
    return (out, w) if omega else out


def d_of_lambda(coeffs: Mode3Coefficients, lam: float, d_cap: Optional[float] = None,
                f_cap: Optional[float] = None) -> Optional[float]:
    """Backhaul at which the marginal fog saving equals the price ``lam``.

    ``lam`` is in Hz per bit/s. The root is capped at ``d_cap``. None when
    the fog demand at the root is at least ``f_cap`` (the mode is then never
    worth its backhaul) or the time budget is empty.
    """
    if coeffs.nu0 <= 0:
        return None
    d = float(_d_of_lambda(coeffs, lam))
    if d_cap is not None:
        d = min(d, d_cap)
    if not math.isfinite(d):
        return None
    if f_cap is not None and least_fog(coeffs, d) >= f_cap:
        return None
    return d


# ------------------------------------------------------------ coefficients

def user_time(decision: Decision, profile: UserProfile, config: SystemConfig) -> float:
    """Device compute plus uplink time of an offloading decision."""
    rate = uplink_rate(decision.rho, decision.p, beta0(profile, config))
    return user_cycles(decision, profile) / decision.f_u + profile.b_in / (decision.omega_u * rate)


def mode3_coeffs(profile: UserProfile, config: SystemConfig, eta: float,
                 stage1: Stage1Result) -> Mode3Coefficients:
    """Reduced coefficients with the user-side variables of ``stage1``.

    Raises ``Mode3Infeasible`` when no time is left for the fog part.
    """
    dec = stage1.decision
    if profile.w_t > 0:
        cost_room = (eta - stage1.xi1) / profile.w_t
    else:
        cost_room = math.inf if eta >= stage1.xi1 else -math.inf
    slack = min(cost_room, profile.t_max - stage1.t1)
    nu0 = slack + (stage1.t1 - user_time(dec, profile, config)) - config.t_cloud
    if not nu0 > 0:
        raise Mode3Infeasible("no time left for recompression and forwarding")
    fog = profile.comp_fog
    c_de = comp_eval(profile.decomp_user, dec.omega_u)
    return Mode3Coefficients(nu0, fog.gamma0 * fog.gamma1, fog.gamma2,
                             fog.gamma0 * fog.gamma3 + c_de, profile.b_in / dec.omega_u,
                             fog.omega_min, fog.omega_max)


def mode3_decision(coeffs: Mode3Coefficients, stage1: Stage1Result, d: float) -> Decision:
    dec = stage1.decision
    theta = optimal_omega_f(coeffs, d)
    return Decision(Mode.CLOUD_RECOMPRESSED, omega_u=dec.omega_u, omega_f=dec.omega_u * theta,
                    f_u=dec.f_u, f_f=h0(coeffs, theta, d), p=dec.p, rho=dec.rho, d=d)


class _Batch:
    """Coefficients of several users as arrays (column vectors)."""

    def __init__(self, coeffs: Sequence[Mode3Coefficients]):
        for name in _FIELDS:
            setattr(self, name, np.array([getattr(c, name) for c in coeffs], dtype=float)[:, None])


# --------------------------------------------------------------- options

@dataclass
class PlaTable:
    breakpoints: np.ndarray  # bit/s, strictly increasing
    f_values: np.ndarray  # Hz
    slopes: np.ndarray
    intercepts: np.ndarray

    @staticmethod
    def from_points(d, f) -> "PlaTable":
        d = np.asarray(d, dtype=float)
        f = np.asarray(f, dtype=float)
        if d.size and np.any(np.diff(d) <= 0):
            raise ValueError("breakpoints must increase")
        a = np.diff(f) / np.diff(d)
        b = f[:-1] - a * d[:-1]
        return PlaTable(d, f, a, b)

    def value(self, d: float) -> float:
        if not self.breakpoints[0] <= d <= self.breakpoints[-1]:
            raise ValueError("outside the table")
        j = int(np.searchsorted(self.breakpoints, d, side="right")) - 1
        if self.breakpoints[j] == d:
            return float(self.f_values[j])
        i = min(j, self.slopes.size - 1)
        return float(self.slopes[i] * d + self.intercepts[i])


@dataclass(frozen=True)
class ModeOption:
    mode: Mode
    fog_cost: float  # Hz
    backhaul_cost: float  # bit/s
    omega_f: Optional[float] = None
    d: Optional[float] = None


@dataclass
class ExtSelection:
    """Outcome of one extended selection at a fixed bound."""
    eta: float
    objective: float  # least total fog CPU found by the engine (Hz)
    fog_total: float  # fog CPU of the returned allocation (Hz)
    backhaul_total: float
    options: Dict[int, ModeOption]
    decisions: Dict[int, Decision]
    feasible: bool
    info: dict = field(default_factory=dict)


class _Stage:
    """Stage-1 data of the offloading users at one bound."""

    def __init__(self, cache: Stage1Cache, set_b: Sequence[int], eta: float):
        self.cache, self.eta = cache, eta
        self.cfg = cache.instance.config
        self.users = list(set_b)
        self.r3, self.r4, self.coeffs = {}, {}, {}
        self.blocked = None
        for k in self.users:
            self.r3[k] = cache.p3(k, eta)
            self.r4[k] = cache.p4(k, eta)
            if self.r3[k] is None and self.r4[k] is None:
                self.blocked = k
                return
            base = self.r3[k] if self.r3[k] is not None else self.r4[k]
            try:
                self.coeffs[k] = mode3_coeffs(cache.instance.users[k], self.cfg, eta, base)
            except Mode3Infeasible:
                pass

    def f_rq(self, k):
        return self.r3[k].f_f_rq if self.r3[k] is not None else math.inf

    def d_rq(self, k):
        return self.r4[k].d_rq if self.r4[k] is not None else math.inf

    def base(self, k) -> Stage1Result:
        return self.r3[k] if self.r3[k] is not None else self.r4[k]

    def fixed_options(self, k):
        opts = []
        if self.r3[k] is not None:
            opts.append(Option.point(0.0, self.f_rq(k), tag=ModeOption(Mode.FOG, self.f_rq(k), 0.0)))
        if self.r4[k] is not None:
            opts.append(Option.point(self.d_rq(k), 0.0, tag=ModeOption(Mode.CLOUD, 0.0, self.d_rq(k))))
        return opts

    def fixed_decision(self, k, mode):
        return (self.r3[k] if mode == Mode.FOG else self.r4[k]).decision


def _finish(st: _Stage, objective, options, decisions, info) -> ExtSelection:
    fog = sum(d.f_f for d in decisions.values())
    bh = sum(d.d for d in decisions.values() if d.mode != Mode.FOG)
    ok = (objective <= st.cfg.f_fog_max and fog <= st.cfg.f_fog_max
          and bh <= st.cfg.d_max * (1 + 1e-12))
    return ExtSelection(st.eta, objective, fog, bh, options, decisions, ok, info)


def _to_verification(sel: Optional[ExtSelection]) -> Optional[Verification]:
    if sel is None or not sel.feasible:
        return None
    info = dict(sel.info)
    info["objective"] = sel.objective
    return Verification(sel.eta, sel.decisions, sel.fog_total, sel.backhaul_total, info)


# -------------------------------------------------------------------- PLA

def pla_table(cache: Stage1Cache, k: int, eta: float, segments: int, d_top: float,
              eps_d: float = EPS_D) -> Optional[PlaTable]:
    """Exact fog demand at ``segments + 1`` equally spaced backhaul points.

    Points where the recompressed mode is infeasible are dropped; None when
    none remain.
    """
    if segments < 2:
        raise ValueError("need at least two segments")
    ds, fs = [], []
    for l in range(segments + 1):
        d = (d_top - eps_d) * l / segments
        r = cache.p_dk(k, eta, d) if d > 0 else None
        if r is not None:
            ds.append(d)
            fs.append(r.f_f_rq)
    if not ds:
        return None
    return PlaTable.from_points(ds, fs)


def pla_select(cache: Stage1Cache, set_b: Sequence[int], eta: float,
               segments: int = 9, eps_d: float = EPS_D) -> Optional[ExtSelection]:
    """Least total fog CPU with the piecewise-linear model of the third mode."""
    st = _Stage(cache, set_b, eta)
    if st.blocked is not None:
        return None
    if not st.users:
        return ExtSelection(eta, 0.0, 0.0, 0.0, {}, {}, True)
    sets, tables = [], {}
    for k in st.users:
        opts = st.fixed_options(k)
        d_top = st.d_rq(k) if math.isfinite(st.d_rq(k)) else st.cfg.d_max
        tab = pla_table(cache, k, eta, segments, d_top, eps_d)
        if tab is not None:
            tables[k] = tab
            tag = ModeOption(Mode.CLOUD_RECOMPRESSED, float(tab.f_values[0]), float(tab.breakpoints[0]))
            if tab.breakpoints.size == 1:
                opts.append(Option.point(tab.breakpoints[0], tab.f_values[0], tag))
            else:
                opts.append(Option.curve(tab.breakpoints, tab.f_values, tag))
        sets.append(opts)
    try:
        res = solve_mckp(sets, st.cfg.d_max)
    except InfeasibleSelection:
        return None
    options, decisions = {}, {}
    for k, opts, ch in zip(st.users, sets, res.choices):
        tag = opts[ch.option].tag
        if tag.mode != Mode.CLOUD_RECOMPRESSED:
            options[k] = tag
            decisions[k] = st.fixed_decision(k, tag.mode)
            continue
        r = cache.p_dk(k, eta, ch.weight)
        if r is None:
            return None
        options[k] = ModeOption(Mode.CLOUD_RECOMPRESSED, ch.cost, ch.weight, r.decision.omega_f, ch.weight)
        decisions[k] = r.decision
    return _finish(st, res.cost, options, decisions,
                   {"segments": segments, "nodes": res.nodes, "tables": tables})


def solve_fv_pla(cache: Stage1Cache, set_b: Sequence[int], eta: float,
                 segments: int = 9) -> Optional[Verification]:
    return _to_verification(pla_select(cache, set_b, eta, segments))


# -------------------------------------------------------------- TSA shared

class _Tsa:
    """Per-user arrays for the two-stage engines (normalized units)."""

    def __init__(self, st: _Stage):
        self.st = st
        cfg = st.cfg
        self.F, self.D = cfg.f_fog_max, cfg.d_max
        self.users = st.users
        self.m3 = [k for k in st.users if k in st.coeffs]
        self.batch = _Batch([st.coeffs[k] for k in self.m3]) if self.m3 else None
        self.f_rq = np.array([st.f_rq(k) for k in self.m3])
        self.d_rq = np.array([st.d_rq(k) for k in self.m3])
        self.f_cap = np.minimum(self.f_rq, self.F)
        self.d_cap = np.where(np.isfinite(self.d_rq), self.d_rq, self.D)
        self.memo = {}  # fog totals of evaluated mode tuples

    def mode3_raw(self, lams):
        """Capped root and its fog demand per candidate (rows) and price (columns)."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        if self.batch is None:
            return np.zeros((0, lams.size)), np.zeros((0, lams.size))
        raw = lams[None, :] * self.F / self.D
        d, w = _d_of_lambda(self.batch, raw, omega=True)
        capped = d > self.d_cap[:, None]
        if np.any(capped):
            d = np.where(capped, self.d_cap[:, None], d)
            w[capped] = _omega_star(_take(self.batch, capped), d[capped])
        return d, _h0(self.batch, w, d)

    def mode3_at(self, lams):
        """As ``mode3_raw`` with nan where the mode is not worth its backhaul."""
        d, f = self.mode3_raw(lams)
        bad = ~(f < self.f_cap[:, None]) | ~np.isfinite(d)
        return np.where(bad, np.nan, d), np.where(bad, np.nan, f)

    def decision(self, k, d) -> Decision:
        return mode3_decision(self.st.coeffs[k], self.st.base(k), d)


def _tsa_selection(tsa: _Tsa, d_row, f_row):
    sets = []
    pos = {k: i for i, k in enumerate(tsa.m3)}
    for k in tsa.users:
        opts = tsa.st.fixed_options(k)
        i = pos.get(k)
        if i is not None and np.isfinite(d_row[i]):
            opts.append(Option.point(d_row[i], f_row[i],
                                     ModeOption(Mode.CLOUD_RECOMPRESSED, f_row[i], d_row[i], None, d_row[i])))
        sets.append(opts)
    return sets


def lambda_max(tsa: _Tsa, step: float, cap: float = 1e9) -> float:
    """Smallest normalized price past which the third mode is never chosen.

    Both conditions must hold: every candidate's fog demand reaches its
    fog-mode demand (or the mode drops out) and the candidates' backhaul
    fits together. Located by doubling and then bisection to ``step``.
    """
    def done(lam):
        d, f = tsa.mode3_at([lam])
        live = np.isfinite(d[:, 0])
        return not np.any(live & (f[:, 0] < tsa.f_rq)) and np.nansum(d[:, 0]) <= tsa.D

    if tsa.batch is None:
        return 0.0
    hi = step
    while not done(hi):
        hi *= 2.0
        if hi > cap:
            return cap
    lo = hi / 2.0 if hi > step else 0.0
    while hi - lo > step:
        mid = 0.5 * (lo + hi)
        if done(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ------------------------------------------------------------------- OSTS

ENUM_LIMIT = 6561  # 3^8 mode tuples; larger sets go through solve_mckp
_CHUNK = 2_000_000  # tuple-price pairs per vectorized block


def _tables(tsa: _Tsa, d_all, f_all):
    """Per user (weight, cost) of the three modes per price, inf when absent.

    Shapes (users, 3, prices) in the order fog, cloud, recompressed.
    """
    n = d_all.shape[1]
    st = tsa.st
    pos = {k: i for i, k in enumerate(tsa.m3)}
    w = np.full((len(st.users), 3, n), np.inf)
    c = np.full((len(st.users), 3, n), np.inf)
    for u, k in enumerate(st.users):
        if st.r3[k] is not None:
            w[u, 0], c[u, 0] = 0.0, st.f_rq(k)
        if st.r4[k] is not None:
            w[u, 1], c[u, 1] = st.d_rq(k), 0.0
        i = pos.get(k)
        if i is not None:
            ok = np.isfinite(d_all[i])
            w[u, 2] = np.where(ok, d_all[i], np.inf)
            c[u, 2] = np.where(ok, f_all[i], np.inf)
    return w, c


def _enumerate(w, c, capacity):
    """Exact selection for every price by enumerating all mode tuples.

    Returns the least cost per price (inf when nothing fits) and the
    winning tuple index.
    """
    users, _, n = w.shape
    tuples = np.array(np.meshgrid(*[np.arange(3)] * users, indexing="ij")).reshape(users, -1).T
    best = np.full(n, np.inf)
    arg = np.zeros(n, dtype=int)
    step = max(1, _CHUNK // max(1, len(tuples)))
    rows = np.arange(users)[None, :]
    for s in range(0, n, step):
        cols = slice(s, min(n, s + step))
        tw = w[:, :, cols][rows, tuples].sum(axis=1)
        tc = c[:, :, cols][rows, tuples].sum(axis=1)
        tc = np.where(tw <= capacity * (1 + 1e-12), tc, np.inf)
        j = np.argmin(tc, axis=0)
        best[cols] = tc[j, np.arange(tc.shape[1])]
        arg[cols] = j
    return best, arg, tuples


def osts_select(cache: Stage1Cache, set_b: Sequence[int], eta: float, delta_lambda: float = 5e-3,
                early_exit: bool = True, max_points: int = 200_000) -> Optional[ExtSelection]:
    """Sweep the backhaul price; exact three-way selection at each price."""
    if not delta_lambda > 0:
        raise ValueError("delta_lambda must be positive")
    st = _Stage(cache, set_b, eta)
    if st.blocked is not None:
        return None
    if not st.users:
        return ExtSelection(eta, 0.0, 0.0, 0.0, {}, {}, True)
    tsa = _Tsa(st)
    lam_hi = lambda_max(tsa, delta_lambda)
    n = int(math.floor(lam_hi / delta_lambda + 1e-9)) + 1
    if n > max_points:
        raise ValueError(f"price sweep needs {n} points; raise delta_lambda")
    lams = delta_lambda * np.arange(n)
    if lams[-1] < lam_hi:
        lams = np.append(lams, lam_hi)
    d_all, f_all = tsa.mode3_at(lams)
    cap = st.cfg.d_max
    if 3 ** len(st.users) <= ENUM_LIMIT:
        w, c = _tables(tsa, d_all, f_all)
        costs, arg, tuples = _enumerate(w, c, cap)
        hits = np.nonzero(costs <= st.cfg.f_fog_max)[0]
        if early_exit and hits.size:
            j = int(hits[0])
        else:
            j = int(np.argmin(costs))
        if not np.isfinite(costs[j]):
            return None
        modes = tuples[arg[j]]
        objective, tested = float(costs[j]), j + 1 if early_exit and hits.size else len(lams)
        chosen = {k: (Mode.FOG, Mode.CLOUD, Mode.CLOUD_RECOMPRESSED)[m] for k, m in zip(st.users, modes)}
    else:
        best = None
        for j, lam in enumerate(lams):
            sets = _tsa_selection(tsa, d_all[:, j], f_all[:, j])
            try:
                res = solve_mckp(sets, cap)
            except InfeasibleSelection:
                continue
            if best is None or res.cost < best[0].cost:
                best = (res, sets, j)
            if early_exit and res.cost <= st.cfg.f_fog_max:
                break
        if best is None:
            return None
        res, sets, j = best
        objective, tested = res.cost, j + 1
        chosen = {k: opts[ch.option].tag.mode for k, opts, ch in zip(st.users, sets, res.choices)}
    pos = {k: i for i, k in enumerate(tsa.m3)}
    options, decisions = {}, {}
    for k, mode in chosen.items():
        if mode == Mode.CLOUD_RECOMPRESSED:
            d = float(d_all[pos[k], j])
            dec = tsa.decision(k, d)
            options[k] = ModeOption(mode, dec.f_f, d, dec.omega_f, d)
            decisions[k] = dec
        else:
            options[k] = ModeOption(mode, st.f_rq(k) if mode == Mode.FOG else 0.0,
                                    st.d_rq(k) if mode == Mode.CLOUD else 0.0)
            decisions[k] = st.fixed_decision(k, mode)
    return _finish(st, objective, options, decisions,
                   {"lambda": float(lams[j]), "lambda_max": float(lam_hi), "tested": tested})


def solve_fv_osts(cache: Stage1Cache, set_b: Sequence[int], eta: float,
                  delta_lambda: float = 5e-3) -> Optional[Verification]:
    return _to_verification(osts_select(cache, set_b, eta, delta_lambda))


# ------------------------------------------------------------------- IUTS

def project_simplex(v, mask=None) -> np.ndarray:
    """Euclidean projection onto ``{s >= 0, sum s = 1}``.

    Entries where ``mask`` is False are held at zero.
    """
    v = np.asarray(v, dtype=float)
    mask = np.ones(v.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out = np.zeros_like(v)
    x = v[mask]
    if x.size == 0:
        return out
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, x.size + 1)
    r = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[r] / (r + 1.0)
    out[mask] = np.maximum(x - tau, 0.0)
    return out


def dual_update(lam: float, step: float, usage: float, capacity: float = 1.0) -> float:
    """One projected sub-gradient step on the backhaul price."""
    return max(0.0, lam + step * (usage - capacity))


_M, _F, _C = 0, 1, 2  # mode-vector layout (third mode, fog, cloud)


def _reprice(tsa: _Tsa, rows: List[int], room: float, rounds: int = 8):
    """Common price splitting ``room`` backhaul among third-mode rows.

    Returns (d, f) arrays for ``rows`` at the least price whose roots fit,
    or None when even a prohibitive price does not fit. The price is
    bracketed on a log grid, then refined by repeated grid subdivision.
    """
    def at(lams):
        d, f = tsa.mode3_raw(lams)
        return d[rows], f[rows]

    d0, f0 = at([0.0])
    if d0[:, 0].sum() <= room:
        return d0[:, 0], f0[:, 0]
    grid = np.logspace(-8, 12, 41)
    fits = at(grid)[0].sum(axis=0) <= room
    if not fits[-1]:
        return None
    j = int(np.argmax(fits))
    lo, hi = (0.0 if j == 0 else grid[j - 1]), grid[j]
    for _ in range(rounds):
        grid = np.linspace(lo, hi, 33)[1:]
        fits = at(grid)[0].sum(axis=0) <= room
        j = int(np.argmax(fits))
        lo, hi = (lo if j == 0 else grid[j - 1]), grid[j]
        if hi - lo <= 1e-12 * hi:
            break
    d, f = at([hi])
    return d[:, 0], f[:, 0]


def _evaluate(tsa: _Tsa, modes: Dict[int, int]):
    """Least fog total for fixed modes; None when the backhaul cannot fit.

    Third-mode users share what the cloud users leave at a common price,
    which is optimal for fixed modes because each fog demand is convex in
    its backhaul.
    """
    key = tuple(sorted(modes.items()))
    if key not in tsa.memo:
        tsa.memo[key] = _evaluate_new(tsa, modes)
    return tsa.memo[key]


def _evaluate_new(tsa: _Tsa, modes: Dict[int, int]):
    st = tsa.st
    room = tsa.D - sum(st.d_rq(k) for k, m in modes.items() if m == _C)
    if room < 0:
        return None
    fog = sum(st.f_rq(k) for k, m in modes.items() if m == _F)
    d3 = {}
    third = [k for k, m in modes.items() if m == _M]
    if third:
        pos = {k: i for i, k in enumerate(tsa.m3)}
        out = _reprice(tsa, [pos[k] for k in third], room)
        if out is None or not np.all(np.isfinite(out[1])):
            return None
        for k, d, f in zip(third, *out):
            d3[k] = float(d)
            fog += float(f)
    return fog, d3


def _available(tsa: _Tsa, k: int):
    st = tsa.st
    out = []
    if k in tsa.st.coeffs:
        out.append(_M)
    if st.r3[k] is not None:
        out.append(_F)
    if st.r4[k] is not None:
        out.append(_C)
    return out


def _best_move(tsa: _Tsa, modes: Dict[int, int], cur, size: int):
    """Best improving change of the modes of ``size`` users, or None."""
    best = None
    for ks in itertools.combinations(sorted(modes), size):
        alts = [[m for m in _available(tsa, k) if m != modes[k]] for k in ks]
        for combo in itertools.product(*alts):
            trial = dict(modes)
            trial.update(zip(ks, combo))
            out = _evaluate(tsa, trial)
            if out is not None and out[0] < cur[0] * (1 - 1e-12) and (best is None or out[0] < best[1][0]):
                best = (trial, out)
    return best


def _repair(tsa: _Tsa, modes: Dict[int, int], d3: Dict[int, float], f3: Dict[int, float]):
    """Make a rounded mode choice feasible and improve it.

    Backhaul overflow sends users to the fog by least fog increase per bit/s
    freed; spare backhaul then moves fog users to the cloud modes by largest
    fog saving. The third-mode users then split the leftover backhaul at a
    common price, and single-user mode changes are applied while one lowers
    the fog total.
    """
    st = tsa.st

    def bh(k, m):
        return d3[k] if m == _M else (st.d_rq(k) if m == _C else 0.0)

    def fog(k, m):
        return f3[k] if m == _M else (st.f_rq(k) if m == _F else 0.0)

    modes = dict(modes)
    used = sum(bh(k, m) for k, m in modes.items())
    while used > tsa.D:
        keys = [k for k, m in modes.items() if m != _F and math.isfinite(st.f_rq(k)) and bh(k, m) > 0]
        if not keys:
            return None
        k = min(keys, key=lambda k: (fog(k, _F) - fog(k, modes[k])) / bh(k, modes[k]))
        used -= bh(k, modes[k])
        modes[k] = _F
    gains = []
    for k, m in modes.items():
        if m != _F:
            continue
        for alt in (_C, _M):
            need = bh(k, alt)
            if math.isfinite(need) and need > 0 and math.isfinite(fog(k, alt)):
                gains.append((fog(k, _F) - fog(k, alt), k, alt))
    gains.sort(key=lambda g: -g[0])
    for gain, k, alt in gains:
        if gain <= 0 or modes[k] != _F:
            continue
        if used + bh(k, alt) <= tsa.D:
            used += bh(k, alt)
            modes[k] = alt
    cur = _evaluate(tsa, modes)
    if cur is None:
        return None
    for _ in range(3 * len(modes)):
        step = _best_move(tsa, modes, cur, 1) or _best_move(tsa, modes, cur, 2)
        if step is None:
            break
        modes, cur = step
    total, d_fix = cur
    used = sum(st.d_rq(k) for k, m in modes.items() if m == _C) + sum(d_fix.values())
    return modes, total, used, d_fix


def iuts_select(cache: Stage1Cache, set_b: Sequence[int], eta: float, max_iters: int = 500,
                step: float = 0.1, lambda0: float = 0.0) -> Optional[ExtSelection]:
    """Dual sub-gradient on the backhaul price with relaxed mode vectors.

    Each iteration moves every user's mode vector by a projected gradient
    step of the Lagrangian, updates the price with step ``1/sqrt(n)``, then
    rounds every vector to its largest entry and repairs the backhaul. The
    best repaired allocation seen is returned.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    st = _Stage(cache, set_b, eta)
    if st.blocked is not None:
        return None
    if not st.users:
        return ExtSelection(eta, 0.0, 0.0, 0.0, {}, {}, True)
    tsa = _Tsa(st)
    pos = {k: i for i, k in enumerate(tsa.m3)}
    F, D = tsa.F, tsa.D
    s = {}
    for k in st.users:
        avail = np.array([k in pos, math.isfinite(st.f_rq(k)), math.isfinite(st.d_rq(k))])
        s[k] = avail / avail.sum()
    lam = lambda0
    best = None
    history = []
    seen = set()
    for n in range(1, max_iters + 1):
        d_all, f_all = tsa.mode3_at([lam])
        usage = 0.0
        d3, f3 = {}, {}
        for k in st.users:
            i = pos.get(k)
            has3 = i is not None and np.isfinite(d_all[i, 0])
            d = d_all[i, 0] if has3 else 0.0
            f = f_all[i, 0] if has3 else math.inf
            d3[k], f3[k] = d, f
            f_rq, d_rq = st.f_rq(k), st.d_rq(k)
            mask = np.array([has3, math.isfinite(f_rq), math.isfinite(d_rq)])
            grad = np.array([f / F + lam * d / D if has3 else 0.0,
                             f_rq / F if mask[_F] else 0.0,
                             lam * d_rq / D if mask[_C] else 0.0])
            s[k] = project_simplex(s[k] - step * grad, mask)
            usage += (s[k][_M] * d if has3 else 0.0) + (s[k][_C] * d_rq if mask[_C] else 0.0)
        modes = {k: int(np.argmax(s[k])) for k in st.users}
        key = tuple(sorted(modes.items()))
        if key not in seen:
            seen.add(key)
            fixed = _repair(tsa, modes, d3, f3)
            if fixed is not None:
                modes, total, used, d_fix = fixed
                if best is None or total < best[0] - 1e-9 * F:
                    best = (total, modes, d_fix, lam, n)
        new = dual_update(lam, 1.0 / math.sqrt(n), usage / D)
        history.append(new)
        lam = new
    if best is None:
        return None
    total, modes, d3, lam_best, n_best = best
    converged = len(history) > 10 and max(history[-10:]) - min(history[-10:]) <= 1e-3 * (1 + abs(lam))
    options, decisions = {}, {}
    for k, m in modes.items():
        if m == _M:
            dec = tsa.decision(k, d3[k])
            options[k] = ModeOption(Mode.CLOUD_RECOMPRESSED, dec.f_f, d3[k], dec.omega_f, d3[k])
            decisions[k] = dec
        else:
            mode = Mode.FOG if m == _F else Mode.CLOUD
            options[k] = ModeOption(mode, st.f_rq(k) if m == _F else 0.0, st.d_rq(k) if m == _C else 0.0)
            decisions[k] = st.fixed_decision(k, mode)
    return _finish(st, total, options, decisions,
                   {"lambda": float(lam_best), "iteration": n_best, "converged": bool(converged),
                    "lambda_final": float(lam), "rounded_tuples": len(seen)})


def solve_fv_iuts(cache: Stage1Cache, set_b: Sequence[int], eta: float,
                  max_iters: int = 500) -> Optional[Verification]:
    return _to_verification(iuts_select(cache, set_b, eta, max_iters))


# ----------------------------------------------------------------- driver

ALGOS = ("pla", "osts", "iuts")


def solve_ext(instance: Instance, epsilon: float = 1e-3, algo: str = "osts",
              cache: Optional[Stage1Cache] = None, **params) -> Solution:
    """Min-max WEDC with the third offloading mode available.

    ``params``: ``segments`` (pla), ``delta_lambda`` (osts), ``max_iters``
    (iuts).
    """
    if algo == "pla":
        seg = int(params.get("segments", 9))
        verify = lambda c, b, e: solve_fv_pla(c, b, e, seg)  # noqa: E731
    elif algo == "osts":
        step = float(params.get("delta_lambda", 5e-3))
        verify = lambda c, b, e: solve_fv_osts(c, b, e, step)  # noqa: E731
    elif algo == "iuts":
        iters = int(params.get("max_iters", 500))
        verify = lambda c, b, e: solve_fv_iuts(c, b, e, iters)  # noqa: E731
    else:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
    sol = bisect(instance, epsilon, verify, cache)
    sol.info["algo"] = algo
    return sol
