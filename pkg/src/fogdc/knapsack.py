"""Exact selection subproblems: 0-1 knapsack and multiple-choice knapsack.

Every group (user) must pick exactly one option. An option is a polyline of
``(weight, cost)`` points with increasing weight; a single point is a fixed
choice, two or more points are a continuous choice anywhere on the line
(the interpolated segments of a piecewise-linear curve). The task is

    minimize  sum of costs   subject to  sum of weights <= capacity.

Small problems are solved exactly by depth-first branch-and-bound whose
bound is the LP relaxation over each group's lower convex hull (greedy by
slope). When every option in a leaf is convex the leaf LP is the exact
continuous optimum, so the search is exact. Large problems fall back to a
dynamic program over a discretized capacity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

BB_LIMIT = 24
DP_UNITS = 100_000


class InfeasibleSelection(Exception):
    """Even the lightest choice of every group exceeds the capacity."""


@dataclass(frozen=True)
class Option:
    points: Tuple[Tuple[float, float], ...]  # (weight, cost), weight increasing
    tag: object = None

    @staticmethod
    def point(weight: float, cost: float, tag=None) -> "Option":
        return Option(((float(weight), float(cost)),), tag)

    @staticmethod
    def curve(weights, costs, tag=None) -> "Option":
        pts = tuple((float(w), float(c)) for w, c in zip(weights, costs))
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("curve weights must be strictly increasing")
        return Option(pts, tag)

    def is_convex(self, tol: float = 1e-12) -> bool:
        p = self.points
        slopes = [(b[1] - a[1]) / (b[0] - a[0]) for a, b in zip(p, p[1:])]
        return all(s2 >= s1 - tol * (1.0 + abs(s1)) for s1, s2 in zip(slopes, slopes[1:]))

    def segments(self) -> List["Option"]:
        p = self.points
        if len(p) == 1:
            return [self]
        return [Option((a, b), (self.tag, i)) for i, (a, b) in enumerate(zip(p, p[1:]))]

    def cost_at(self, weight: float) -> float:
        w = [q[0] for q in self.points]
        c = [q[1] for q in self.points]
        return float(np.interp(weight, w, c))


@dataclass
class Choice:
    option: int  # index into the group's option list
    weight: float
    cost: float


@dataclass
class MckpResult:
    cost: float
    weight: float
    choices: List[Choice]
    nodes: int = 0
    exact: bool = True
    approx_error: float = 0.0  # bound on the cost error of the DP fallback


@dataclass
class _Group:
    options: List[Option]
    hull: List[Tuple[float, float]] = field(default_factory=list)


def _lower_hull(points):
    """Left end plus the decreasing part of the lower convex hull."""
    pts = sorted(set(points))
    # keep the cheapest point per weight
    best = {}
    for w, c in pts:
        if w not in best or c < best[w]:
            best[w] = c
    pts = sorted(best.items())
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (w1, c1), (w2, c2) = hull[-2], hull[-1]
            if (c2 - c1) * (p[0] - w1) >= (p[1] - c1) * (w2 - w1):
                hull.pop()
            else:
                break
        hull.append(p)
    # the LP never moves right past the cheapest point
    k = min(range(len(hull)), key=lambda i: (hull[i][1], hull[i][0]))
    return hull[:k + 1]


def _lp(hulls, capacity):
    """LP relaxation value and per-group weight positions; None if infeasible."""
    base_w = sum(h[0][0] for h in hulls)
    if base_w > capacity * (1 + 1e-12) + 1e-12:
        return None
    cost = sum(h[0][1] for h in hulls)
    pos = [h[0][0] for h in hulls]
    steps = []
    for g, h in enumerate(hulls):
        for a, b in zip(h, h[1:]):
            steps.append(((b[1] - a[1]) / (b[0] - a[0]), g, b[0] - a[0], b[1] - a[1]))
    steps.sort(key=lambda s: s[0])
    room = capacity - base_w
    for slope, g, dw, dc in steps:
        if room <= 0:
            break
        take = min(dw, room)
        cost += slope * take
        pos[g] += take
        room -= take
    return cost, pos


def _leaf(groups, fixed, capacity):
    hulls = [_lower_hull(groups[g].options[o].points) for g, o in enumerate(fixed)]
    out = _lp(hulls, capacity)
    if out is None:
        return None
    cost, pos = out
    choices = []
    for g, o in enumerate(fixed):
        opt = groups[g].options[o]
        choices.append(Choice(o, pos[g], opt.cost_at(pos[g]) if len(opt.points) > 1 else opt.points[0][1]))
    return cost, choices


def _expand(options: Sequence[Option]):
    """Split non-convex curves into segments; returns options and origin index."""
    out, origin = [], []
    for i, opt in enumerate(options):
        parts = [opt] if opt.is_convex() else opt.segments()
        out.extend(parts)
        origin.extend([i] * len(parts))
    return out, origin


def _branch_and_bound(groups: List[_Group], capacity: float):
    n = len(groups)
    for g in groups:
        g.hull = _lower_hull([p for o in g.options for p in o.points])
    opt_hulls = [[_lower_hull(o.points) for o in g.options] for g in groups]
    root = _lp([g.hull for g in groups], capacity)
    if root is None:
        raise InfeasibleSelection("lightest choices exceed capacity")

    best = [math.inf, None]
    nodes = 0
    # branch on groups with the widest cost spread first
    order = sorted(range(n), key=lambda g: -(max(p[1] for o in groups[g].options for p in o.points)
                                               - min(p[1] for o in groups[g].options for p in o.points)))

    def bound(fixed):
        hulls = [opt_hulls[g][fixed[g]] if g in fixed else groups[g].hull for g in range(n)]
        out = _lp(hulls, capacity)
        return math.inf if out is None else out[0]

    def incumbent_from(fixed):
        # lightest option for every open group, then exact leaf LP
        full = [fixed[g] if g in fixed else
                min(range(len(groups[g].options)), key=lambda o: (groups[g].options[o].points[0][0],
                                                                  groups[g].options[o].points[0][1]))
                for g in range(n)]
        leaf = _leaf(groups, full, capacity)
        if leaf is not None and leaf[0] < best[0]:
            best[0], best[1] = leaf[0], (full, leaf[1])

    def tol(v):
        return 1e-12 * (1.0 + abs(v))

    def visit(depth, fixed):
        nonlocal nodes
        nodes += 1
        if depth == n:
            full = [fixed[g] for g in range(n)]
            leaf = _leaf(groups, full, capacity)
            if leaf is not None and leaf[0] < best[0] - tol(best[0]):
                best[0], best[1] = leaf[0], (full, leaf[1])
            return
        g = order[depth]
        kids = []
        for o in range(len(groups[g].options)):
            fixed[g] = o
            b = bound(fixed)
            if b < best[0] - tol(best[0]):
                kids.append((b, o))
        del fixed[g]
        kids.sort()
        for b, o in kids:
            if b >= best[0] - tol(best[0]):
                break
            fixed[g] = o
            visit(depth + 1, fixed)
            del fixed[g]

    incumbent_from({})
    visit(0, {})
    if best[1] is None:
        raise InfeasibleSelection("no feasible selection")
    return best[0], best[1][1], nodes


def _dp_table(groups: List[_Group], size: int, units_of):
    table = np.zeros(size)
    picks = []
    for g in groups:
        cand = [(o, w, c) for o, opt in enumerate(g.options) for (w, c) in opt.points]
        new = np.full(size, math.inf)
        arg = np.full(size, -1, dtype=int)
        for i, (o, w, c) in enumerate(cand):
            k = units_of(w)
            if k >= size:
                continue
            shifted = np.full(size, math.inf)
            shifted[k:] = table[:size - k] + c
            better = shifted < new
            new[better] = shifted[better]
            arg[better] = i
        picks.append((cand, arg))
        table = new
    return table, picks


def _dp(groups: List[_Group], capacity: float, units: int):
    """Discretized DP.

    Weights rounded up give a selection that truly fits; weights rounded down
    give a lower bound on the optimum. Their difference is the error bound.
    Returns None when the rounded-up pass finds nothing but the bound does not
    rule a selection out.
    """
    unit = capacity / units if capacity > 0 else 1.0
    size = units + 1 if capacity > 0 else 1
    up = lambda w: int(math.ceil(w / unit - 1e-9)) if w > 0 else 0
    down = lambda w: int(math.floor(w / unit + 1e-9)) if w > 0 else 0
    lower, _ = _dp_table(groups, size, down)
    if not np.isfinite(lower[-1]):
        raise InfeasibleSelection("lightest choices exceed capacity")
    table, picks = _dp_table(groups, size, up)
    if not np.isfinite(table[-1]):
        return None
    k = size - 1
    choices = [None] * len(groups)
    for gi in range(len(groups) - 1, -1, -1):
        cand, arg = picks[gi]
        o, w, c = cand[arg[k]]
        choices[gi] = Choice(o, w, c)
        k -= up(w)
    cost = float(table[-1])
    return cost, choices, cost - float(lower[-1])


def solve_mckp(option_sets: Sequence[Sequence[Option]], capacity: float,
               bb_limit: int = BB_LIMIT, dp_units: int = DP_UNITS) -> MckpResult:
    """Pick one option per group minimizing total cost within ``capacity``.

    Raises ``InfeasibleSelection`` when no selection fits.
    """
    if capacity < 0:
        raise InfeasibleSelection("negative capacity")
    groups, origins = [], []
    for opts in option_sets:
        if not opts:
            raise InfeasibleSelection("group without options")
        ex, origin = _expand(opts)
        groups.append(_Group(ex))
        origins.append(origin)
    if not groups:
        return MckpResult(0.0, 0.0, [])
    if len(groups) <= bb_limit:
        cost, choices, nodes = _branch_and_bound(groups, capacity)
        exact, err = True, 0.0
    else:
        res = _dp(groups, capacity, dp_units)
        if res is None:  # rounding hid every fitting selection
            cost, choices, nodes = _branch_and_bound(groups, capacity)
            exact, err = True, 0.0
        else:
            (cost, choices, err), nodes, exact = res, 0, False
    for ch, origin in zip(choices, origins):
        ch.option = origin[ch.option]
    weight = sum(c.weight for c in choices)
    return MckpResult(cost, weight, choices, nodes, exact, err)


@dataclass
class Selection:
    chosen: Tuple[int, ...]  # indices put into the knapsack
    value: float
    weight: float


def knapsack01(values: Sequence[float], weights: Sequence[float], capacity: float,
               forced_in: Sequence[int] = (), forced_out: Sequence[int] = ()) -> Selection:
    """Maximize total value of selected items with total weight within capacity."""
    values = [float(v) for v in values]
    weights = [float(w) for w in weights]
    if len(values) != len(weights):
        raise ValueError("values and weights differ in length")
    if any(v < 0 for v in values) or any(w < 0 for w in weights):
        raise ValueError("values and weights must be non-negative")
    fin, fout = set(forced_in), set(forced_out)
    if fin & fout:
        raise ValueError("forced sets overlap")
    if sum(weights[i] for i in fin) > capacity * (1 + 1e-12):
        raise InfeasibleSelection("forced items exceed capacity")
    sets = []
    for i, (v, w) in enumerate(zip(values, weights)):
        out_opt = Option.point(0.0, v, tag=False)
        in_opt = Option.point(w, 0.0, tag=True)
        if i in fin:
            sets.append([in_opt])
        elif i in fout:
            sets.append([out_opt])
        else:
            sets.append([out_opt, in_opt])
    res = solve_mckp(sets, capacity)
    chosen = tuple(i for i, (ch, opts) in enumerate(zip(res.choices, sets)) if opts[ch.option].tag)
    return Selection(chosen, sum(values[i] for i in chosen), sum(weights[i] for i in chosen))
