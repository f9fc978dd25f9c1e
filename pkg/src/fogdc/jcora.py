"""Min-max WEDC by bisection on the common cost bound.

For a trial bound ``eta`` users split by a threshold rule: those whose best
local cost is within ``eta`` run locally, the rest must offload. Offloading
users are checked by solving the per-user stage-1 problems (least fog CPU for
execution at the fog, least backhaul for execution at the cloud) and then a
0-1 knapsack that sends to the cloud the users whose fog demand is largest
while the backhaul allows it. The bound is feasible iff the remaining fog
demand fits the fog server.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import convex
from .knapsack import InfeasibleSelection, knapsack01
from .model import Decision, Mode, UserProfile, local_decision, wedc
from .scenario import Instance


class InfeasibleInstance(Exception):
    """Some user cannot meet its constraints anywhere."""

    def __init__(self, users: Sequence[int], reason: str):
        self.users = tuple(users)
        super().__init__(f"infeasible instance (user(s) {', '.join(map(str, self.users))}): {reason}")


@dataclass(frozen=True)
class Classification:
    set_a: Tuple[int, ...]  # run locally
    set_b: Tuple[int, ...]  # offload

    def __post_init__(self):
        if set(self.set_a) & set(self.set_b):
            raise ValueError("classification sets overlap")


@dataclass
class Verification:
    eta: float
    decisions: Dict[int, Decision]  # offloading users only
    fog_total: float
    backhaul_total: float
    info: dict = field(default_factory=dict)


@dataclass
class Solution:
    eta_star: float
    eta_lower: float
    classification: Classification
    decisions: List[Decision]
    fog_total: float
    backhaul_total: float
    iterations: int
    eta_local: List[float]
    wedc: List[float]
    info: dict = field(default_factory=dict)

    @property
    def max_wedc(self) -> float:
        return max(self.wedc)

    def mode_counts(self) -> Dict[Mode, int]:
        out = {m: 0 for m in Mode}
        for d in self.decisions:
            out[d.mode] += 1
        return out


# ----------------------------------------------------------------- local

def local_frequency(profile: UserProfile) -> float:
    """CPU frequency minimizing the local cost; nan when local is infeasible."""
    f_min = profile.c_total / profile.t_max
    if f_min > profile.f_max:
        return math.nan
    if profile.w_e == 0:
        return profile.f_max
    if profile.w_t == 0:
        return f_min
    # stationary point of  w_t c / f + w_e alpha f^2 c
    f_sta = (profile.w_t / (2.0 * profile.w_e * profile.alpha)) ** (1.0 / 3.0)
    return min(max(f_sta, f_min), profile.f_max)


def eta_local(profile: UserProfile) -> float:
    """Least WEDC of local execution; +inf when the deadline cannot be met."""
    f = local_frequency(profile)
    if math.isnan(f):
        return math.inf
    c = profile.c_total
    return profile.w_t * c / f + profile.w_e * profile.alpha * f * f * c


def classify(eta_los: Sequence[float], eta: float) -> Classification:
    """Threshold rule; users with ``eta_lo == eta`` run locally."""
    a = tuple(k for k, v in enumerate(eta_los) if v <= eta)
    b = tuple(k for k, v in enumerate(eta_los) if not v <= eta)
    return Classification(a, b)


# ------------------------------------------------------------- stage one

class Stage1Cache:
    """Stage-1 solves for one instance with monotone infeasibility memory.

    Raising ``eta`` only relaxes a subproblem, so once a solve at ``eta`` is
    infeasible every lower bound is as well; the least reachable cost per
    mode gives the same verdict without a solve.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self._floor: Dict[Tuple[int, Mode], float] = {}
        self._infeasible_at: Dict[Tuple[int, Mode], float] = {}
        self._memo: Dict[tuple, Optional[convex.Stage1Result]] = {}
        self.solves = 0

    def floor(self, k: int, mode: Mode) -> float:
        key = (k, mode)
        if key not in self._floor:
            u = self.instance.users[k]
            self._floor[key] = convex.min_cost(u, self.instance.config, mode)
            self.solves += 1
        return self._floor[key]

    def _known_infeasible(self, key, eta) -> bool:
        if eta <= self.floor(*key) * (1.0 - 1e-9):
            return True
        bad = self._infeasible_at.get(key)
        return bad is not None and eta <= bad

    def _run(self, k, mode, eta, fn, *args):
        key = (k, mode)
        memo = (k, mode, eta) + args
        if memo in self._memo:
            return self._memo[memo]
        if self._known_infeasible(key, eta):
            res = None
        else:
            res = fn(self.instance.users[k], self.instance.config, eta, *args)
            self.solves += 1
            if res is None and not args:
                self._infeasible_at[key] = max(eta, self._infeasible_at.get(key, -math.inf))
        self._memo[memo] = res
        return res

    def p3(self, k: int, eta: float) -> Optional[convex.Stage1Result]:
        return self._run(k, Mode.FOG, eta, convex.solve_p3)

    def p4(self, k: int, eta: float) -> Optional[convex.Stage1Result]:
        return self._run(k, Mode.CLOUD, eta, convex.solve_p4)

    def p_dk(self, k: int, eta: float, d: float) -> Optional[convex.Stage1Result]:
        if self._known_infeasible((k, Mode.CLOUD_RECOMPRESSED), eta):
            return None
        return self._run(k, Mode.CLOUD_RECOMPRESSED, eta, convex.solve_p_dk, d)

    def offload_floor(self, k: int, recompression: bool = True) -> float:
        """Least cost user ``k`` can reach by offloading.

        With ``recompression`` the recompressed cloud mode counts too, which
        gives a bound valid for both the basic and the extended problem.
        """
        modes = [Mode.FOG, Mode.CLOUD] + ([Mode.CLOUD_RECOMPRESSED] if recompression else [])
        return min(self.floor(k, m) for m in modes)


def verify_feasibility_b(cache: Stage1Cache, set_b: Sequence[int], eta: float) -> Optional[Verification]:
    """Three-step check of the offloading set at bound ``eta``; None if infeasible."""
    cfg = cache.instance.config
    if not set_b:
        return Verification(eta, {}, 0.0, 0.0)
    r3, r4 = {}, {}
    for k in set_b:
        r3[k] = cache.p3(k, eta)
        r4[k] = cache.p4(k, eta)
        if r3[k] is None and r4[k] is None:
            return None
    idx = list(set_b)
    values = [r3[k].f_f_rq if r3[k] is not None else 0.0 for k in idx]
    weights = [r4[k].d_rq if r4[k] is not None else 0.0 for k in idx]
    forced_in = [i for i, k in enumerate(idx) if r3[k] is None]
    forced_out = [i for i, k in enumerate(idx) if r4[k] is None]
    try:
        sel = knapsack01(values, weights, cfg.d_max, forced_in, forced_out)
    except InfeasibleSelection:
        return None
    chosen = set(sel.chosen)
    fog = sum(values[i] for i in range(len(idx)) if i not in chosen)
    if fog > cfg.f_fog_max:
        return None
    decisions = {k: (r4[k] if i in chosen else r3[k]).decision for i, k in enumerate(idx)}
    return Verification(eta, decisions, fog, sel.weight,
                        {"cloud": tuple(idx[i] for i in sorted(chosen))})


# -------------------------------------------------------------- bisection

Verifier = Callable[[Stage1Cache, Sequence[int], float], Optional[Verification]]


def _check_instance(cache: Stage1Cache, eta_los: List[float]) -> None:
    bad = [k for k, v in enumerate(eta_los) if math.isinf(v) and math.isinf(cache.offload_floor(k, False))]
    if bad:
        raise InfeasibleInstance(bad, "deadline unreachable both locally and by offloading")


def _lower_bound(cache: Stage1Cache, eta_los: List[float]) -> float:
    """A bound no feasible allocation can beat: each user's own best cost."""
    best = [min(v, cache.offload_floor(k)) for k, v in enumerate(eta_los)]
    return max(0.0, max(best) * (1.0 - 1e-6))


def bisect(instance: Instance, epsilon: float, verify: Verifier,
           cache: Optional[Stage1Cache] = None, max_growth: float = 1e6) -> Solution:
    """Bisection on the cost bound with a pluggable feasibility check."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    cache = cache or Stage1Cache(instance)
    users = instance.users
    eta_los = [eta_local(u) for u in users]
    _check_instance(cache, eta_los)

    def attempt(eta):
        cls = classify(eta_los, eta)
        return cls, verify(cache, cls.set_b, eta)

    finite = [v for v in eta_los if math.isfinite(v)]
    lo = _lower_bound(cache, eta_los)
    hi = max(finite) if finite else max(cache.offload_floor(k) for k in range(len(users)))
    hi = max(hi, lo)
    iterations = 0
    cls, ver = attempt(hi)
    iterations += 1
    start = hi
    while ver is None:
        lo = max(lo, hi)
        hi *= 2.0
        if hi > start * max_growth:
            blocked = [k for k in cls.set_b if cache.p3(k, hi / 2) is None and cache.p4(k, hi / 2) is None]
            raise InfeasibleInstance(blocked or list(cls.set_b), "no feasible cost bound found")
        cls, ver = attempt(hi)
        iterations += 1
    best = (hi, cls, ver)
    while hi - lo > epsilon:
        mid = 0.5 * (lo + hi)
        cls_m, ver_m = attempt(mid)
        iterations += 1
        if ver_m is None:
            lo = mid
        else:
            hi = mid
            best = (mid, cls_m, ver_m)
    eta, cls, ver = best
    return _assemble(instance, eta, lo, cls, ver, eta_los, iterations, cache)


def _assemble(instance, eta, lo, cls, ver, eta_los, iterations, cache) -> Solution:
    decisions = []
    for k, u in enumerate(instance.users):
        if k in ver.decisions:
            decisions.append(ver.decisions[k])
        else:
            decisions.append(local_decision(u, local_frequency(u)))
    costs = [wedc(d, u, instance.config) for d, u in zip(decisions, instance.users)]
    info = dict(ver.info)
    info["solves"] = cache.solves
    return Solution(float(eta), float(lo), cls, decisions, float(ver.fog_total), float(ver.backhaul_total), iterations,
                    eta_los, costs, info)


def solve(instance: Instance, epsilon: float = 1e-3, cache: Optional[Stage1Cache] = None) -> Solution:
    """Optimal min-max WEDC with compression, fog and cloud offloading."""
    return bisect(instance, epsilon, verify_feasibility_b, cache)


def feasible_at(instance: Instance, eta: float, verify: Verifier = verify_feasibility_b,
                cache: Optional[Stage1Cache] = None) -> bool:
    """Whether bound ``eta`` admits a feasible allocation under ``verify``."""
    cache = cache or Stage1Cache(instance)
    cls = classify([eta_local(u) for u in instance.users], eta)
    return verify(cache, cls.set_b, eta) is not None
