"""Fitting workload models to (ratio, normalized time) samples.

The proposed family is ``y = g1 * w**g2 + g3`` (``y = g3 - g1 * w**g2`` for
quality curves) with ``g1, g3 >= 0``. For a fixed exponent the other two
parameters solve a non-negative linear least-squares problem, so every
start of the multistart grid begins from its best linear fit; each start is
then polished by projected Levenberg-Marquardt iterations on all three
parameters. Two comparison families are fitted the same way: linear
``b1 * w + b2`` (closed form) and exponential ``e1 * (exp(e2 w) - exp(e2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .model import CompressionModel, Kind

STARTS = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0)
TOL = 1e-10
MAX_ITERS = 500


class FitError(ValueError):
    """Samples cannot identify the model."""


@dataclass(frozen=True)
class FitSample:
    omega: float
    y: float

    def __post_init__(self):
        if not self.omega >= 1.0:
            raise ValueError("omega must be at least 1")
        if not self.y >= 0.0:
            raise ValueError("y must be non-negative")


@dataclass
class FitReport:
    power: Tuple[float, float, float]  # g1, g2, g3
    linear: Tuple[float, float]  # b1, b2
    exponential: Tuple[float, float]  # e1, e2
    rmse: Dict[str, float]

    @property
    def best(self) -> str:
        return min(self.rmse, key=lambda k: (self.rmse[k], k))


def _arrays(samples) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted copies, so every fit is independent of the sample order."""
    pts = sorted((s.omega, s.y) for s in samples)
    w = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    return w, y


def _check(w):
    if w.size < 4 or np.unique(w).size < 3:
        raise FitError("need at least 4 samples with 3 distinct ratios")


def rmse(predicted, observed) -> float:
    """Root mean square error of predictions against observations."""
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.size == 0 or p.shape != o.shape:
        raise ValueError("need equally sized, non-empty arrays")
    return float(math.sqrt(np.mean((p - o) ** 2)))


def model_rmse(model: CompressionModel, samples: Sequence[FitSample]) -> float:
    """RMSE of a normalized model (``gamma0`` ignored) on samples."""
    w, y = _arrays(samples)
    if model.kind == Kind.QUALITY:
        pred = model.gamma3 - model.gamma1 * w ** model.gamma2
    else:
        pred = model.gamma1 * w ** model.gamma2 + model.gamma3
    return rmse(pred, y)


# ----------------------------------------------------------- power law

def _nnls2(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """min ||a x - y|| over x >= 0 for two columns (active-set by cases)."""
    best, best_r = np.zeros(2), float(np.sum(y * y))
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    cands = [sol] if np.all(sol >= 0) else []
    for j in range(2):
        col = a[:, j]
        den = float(col @ col)
        if den > 0:
            x = np.zeros(2)
            x[j] = max(0.0, float(col @ y) / den)
            cands.append(x)
    for x in cands:
        r = float(np.sum((a @ x - y) ** 2))
        if r < best_r:
            best, best_r = x, r
    return best


class _Power:
    """Scaled parameterization ``a * (w / w_ref)**g2`` to tame huge exponents."""

    def __init__(self, w, y, sign):
        self.w, self.y, self.sign = w, y, sign
        self.w_ref = float(np.max(w))
        self.lx = np.log(w / self.w_ref)

    def basis(self, g2):
        with np.errstate(over="ignore"):
            return np.exp(g2 * self.lx)

    def linear(self, g2):
        a = np.column_stack([self.sign * self.basis(g2), np.ones_like(self.w)])
        x = _nnls2(a, self.y)
        return np.array([x[0], g2, x[1]])

    def resid(self, th):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.sign * th[0] * self.basis(th[1]) + th[2] - self.y

    def jac(self, th):
        b = self.basis(th[1])
        return np.column_stack([self.sign * b, self.sign * th[0] * b * self.lx, np.ones_like(b)])

    def to_model(self, th):
        a, g2, g3 = th
        return a * self.w_ref ** (-g2) if a > 0 else 0.0, g2, g3


def _lm(fun, jac, th, lower, tol=TOL, iters=MAX_ITERS):
    """Projected Levenberg-Marquardt; ``lower`` gives per-parameter floors."""
    r = fun(th)
    cost = float(r @ r)
    mu = 1e-3
    for _ in range(iters):
        j = jac(th)
        g = j.T @ r
        h = j.T @ j
        improved = False
        for _ in range(30):
            step = np.linalg.solve(h + mu * np.diag(np.diag(h) + 1e-300), -g) if np.all(np.isfinite(h)) else None
            if step is None or not np.all(np.isfinite(step)):
                break
            new = np.maximum(th + step, lower)
            rn = fun(new)
            with np.errstate(over="ignore", invalid="ignore"):
                cn = float(rn @ rn)
            if np.isfinite(cn) and cn <= cost:
                change = np.max(np.abs(new - th) / np.maximum(np.abs(th), 1e-12))
                th, r, cost = new, rn, cn
                mu = max(mu / 3.0, 1e-12)
                improved = True
                break
            mu *= 4.0
        if not improved or change <= tol:
            break
    return th, cost


def fit_power_law(samples: Sequence[FitSample], kind: Kind = Kind.COMPRESS,
                  starts: Iterable[float] = STARTS) -> CompressionModel:
    """Least-squares fit of the proposed family; returns a normalized model.

    The returned model has ``gamma0 = 1`` and the sample ratio range as its
    bounds. Ties between starts go to the smallest exponent; a flat fit
    (``g1 = 0``) reports ``g2 = 1``.
    """
    w, y = _arrays(samples)
    _check(w)
    sign = -1.0 if kind == Kind.QUALITY else 1.0
    prob = _Power(w, y, sign)
    lower = np.array([0.0, -np.inf, 0.0])
    best = None
    for g2 in sorted(starts):
        th0 = prob.linear(g2)
        th, cost = _lm(prob.resid, prob.jac, th0, lower)
        # re-solve the linear part at the polished exponent
        th2 = prob.linear(th[1])
        r2 = prob.resid(th2)
        if float(r2 @ r2) < cost:
            th, cost = th2, float(r2 @ r2)
        if best is None or cost < best[1] * (1 - 1e-12) - 1e-300:
            best = (th, cost)
    g1, g2, g3 = prob.to_model(best[0])
    if g1 == 0.0:
        g2 = 1.0
    return CompressionModel(1.0, float(g1), float(g2), float(g3), float(np.min(w)), float(np.max(w)), kind)


# -------------------------------------------------------- comparisons

def fit_linear(samples: Sequence[FitSample]) -> Tuple[float, float]:
    w, y = _arrays(samples)
    a = np.column_stack([w, np.ones_like(w)])
    (b1, b2), *_ = np.linalg.lstsq(a, y, rcond=None)
    return float(b1), float(b2)


def _exp_basis(w, e2):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.expm1(e2 * (w - 1.0)) * np.exp(e2)


def fit_exponential(samples: Sequence[FitSample]) -> Tuple[float, float]:
    """``e1 * (exp(e2 w) - exp(e2))`` with ``e1, e2 > 0``."""
    w, y = _arrays(samples)

    def reduced(le2):
        b = _exp_basis(w, math.exp(le2))
        with np.errstate(over="ignore", invalid="ignore"):
            den = float(b @ b)
        if not (den > 0 and math.isfinite(den)):
            return math.inf, 0.0
        e1 = max(0.0, float(b @ y) / den)
        r = e1 * b - y
        return float(r @ r), e1

    # the exponent times the ratio span must stay within floating range
    top = math.log(600.0 / max(float(np.max(w)) - 1.0, 1e-12))
    grid = np.linspace(math.log(1e-7), top, 400)
    vals = [reduced(g)[0] for g in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(200):
        a = hi - phi * (hi - lo)
        b = lo + phi * (hi - lo)
        if reduced(a)[0] <= reduced(b)[0]:
            hi = b
        else:
            lo = a
        if hi - lo < 1e-12:
            break
    le2 = 0.5 * (lo + hi)
    if reduced(le2)[0] > vals[i]:
        le2 = grid[i]
    return reduced(le2)[1], math.exp(le2)


def fit_comparison_models(samples: Sequence[FitSample], kind: Kind = Kind.COMPRESS) -> FitReport:
    """Fit all three families and report their RMSE."""
    w, y = _arrays(samples)
    _check(w)
    pw = fit_power_law(samples, kind)
    lin = fit_linear(samples)
    ex = fit_exponential(samples)
    errs = {
        "power": model_rmse(pw, samples),
        "linear": rmse(lin[0] * w + lin[1], y),
        "exponential": rmse(ex[0] * _exp_basis(w, ex[1]), y),
    }
    return FitReport((pw.gamma1, pw.gamma2, pw.gamma3), lin, ex, errs)


# ------------------------------------------------------------- datasets

def parse_samples(text: str) -> List[FitSample]:
    """Two whitespace-separated columns (omega, y); '#' starts a comment."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {n}: expected two columns")
        out.append(FitSample(float(parts[0]), float(parts[1])))
    return out


def load_samples(path: Union[str, Path]) -> List[FitSample]:
    return parse_samples(Path(path).read_text())


def shipped_datasets() -> Dict[str, List[FitSample]]:
    """Sample sets bundled with the package, by file stem."""
    root = resources.files("fogdc") / "data"
    out = {}
    for item in sorted(root.iterdir(), key=lambda p: p.name):
        if item.name.endswith(".txt"):
            out[item.name[:-4]] = parse_samples(item.read_text())
    return out
