"""Sums of exponential terms in log-transformed variables.

A ``TermSum`` represents

    scale * ( sum_i a_i exp(v_i . x) / L(x_p)^{r_i} ) + const

with ``r_i`` in {0, 1} and ``L(q) = log2(1 + beta0 * exp(q))`` the spectral
efficiency as a function of the log transmit power. Terms with ``r_i = 0`` are
plain exponentials (posynomial monomials after the log change of variables);
terms with ``r_i = 1`` are the ``exp(a1 q + a2 y) / L(q)`` family whose
convexity makes the transformed subproblems convex. Gradients and Hessians
are exact.
"""
from __future__ import annotations

import math

import numpy as np

LN2 = math.log(2.0)


class TermSum:
    def __init__(self, n: int, p_index: int = -1, beta0: float = 0.0):
        self.n = n
        self.p_index = p_index
        self.beta0 = beta0
        self._loga = []
        self._expo = []
        self._rate = []
        self.const = 0.0
        self.scale = 1.0
        self._frozen = False

    def add(self, coef: float, exponents: dict, rate: bool = False) -> "TermSum":
        """Add ``coef * exp(sum_j e_j x_j)`` (divided by L when ``rate``)."""
        if coef < 0:
            raise ValueError("coefficients must be non-negative")
        if coef == 0:
            return self
        v = np.zeros(self.n)
        for j, e in exponents.items():
            v[j] += e
        self._loga.append(math.log(coef))
        self._expo.append(v)
        self._rate.append(bool(rate))
        self._frozen = False
        return self

    def add_const(self, c: float) -> "TermSum":
        self.const += c
        return self

    def scaled(self, scale: float, const: float) -> "TermSum":
        """Copy computing ``scale * (self) + const``."""
        out = TermSum(self.n, self.p_index, self.beta0)
        out._loga = list(self._loga)
        out._expo = list(self._expo)
        out._rate = list(self._rate)
        out.scale = self.scale * scale
        out.const = self.const * scale + const
        return out

    def _freeze(self):
        if not self._frozen:
            m = len(self._loga)
            self.loga = np.array(self._loga, dtype=float)
            self.expo = np.array(self._expo, dtype=float).reshape(m, self.n)
            self.rate = np.array(self._rate, dtype=bool)
            self.any_rate = bool(self.rate.any())
            self.expo_r = self.expo[self.rate]
            self.loga_p, self.expo_p = self.loga[~self.rate], self.expo[~self.rate]
            self.loga_r = self.loga[self.rate]
            self.log_beta0 = math.log(self.beta0) if self.beta0 > 0 else -math.inf
            self._frozen = True

    def _spectral(self, q):
        z = self.log_beta0 + q
        if z == -math.inf:
            return 0.0, 0.0, 0.0
        # log1p(e^z) without overflow
        L = (z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))) / LN2
        sig = 0.5 * (1.0 + math.tanh(0.5 * z))
        return L, sig / LN2, sig * (1.0 - sig) / LN2

    def value(self, x) -> float:
        self._freeze()
        if self.loga.size == 0:
            return self.const
        with np.errstate(over="ignore"):
            tot = float(np.exp(self.loga_p + self.expo_p @ x).sum())
            if self.any_rate:
                L = self._spectral(x[self.p_index])[0]
                if L <= 0:
                    return math.inf
                tot += float(np.exp(self.loga_r + self.expo_r @ x).sum()) / L
        return self.scale * tot + self.const

    def full(self, x):
        self._freeze()
        n = self.n
        if self.loga.size == 0:
            return self.const, np.zeros(n), np.zeros((n, n))
        with np.errstate(over="ignore"):
            w = np.exp(self.loga_p + self.expo_p @ x)
            val = float(w.sum())
            grad = self.expo_p.T @ w
            hess = (self.expo_p.T * w) @ self.expo_p
            if self.any_rate:
                er = np.exp(self.loga_r + self.expo_r @ x)
                L, L1, L2 = self._spectral(x[self.p_index])
                h = 1.0 / L
                h1 = -L1 * h * h
                h2 = -L2 * h * h + 2.0 * L1 * L1 * h * h * h
                wr = er * h
                val += float(wr.sum())
                grad += self.expo_r.T @ wr
                hess += (self.expo_r.T * wr) @ self.expo_r
                s1 = er * h1
                v = self.expo_r.T @ s1
                ip = self.p_index
                grad[ip] += s1.sum()
                hess[ip, :] += v
                hess[:, ip] += v
                hess[ip, ip] += float((er * h2).sum())
        s = self.scale
        return s * val + self.const, s * grad, s * hess


class LogBound:
    """Constraint ``log(ts(x)) - log(bound) <= 0``.

    Every term of a TermSum is log-convex (``log2(1 + beta0 e^q)`` is
    log-concave in ``q``), so the log of the sum is convex and, unlike the
    raw sum, has bounded curvature. This keeps Newton steps well scaled.
    """

    def __init__(self, ts: TermSum, bound: float):
        self.ts = ts
        self.log_bound = math.log(bound)

    def value(self, x) -> float:
        v = self.ts.value(x)
        if not v > 0:
            return -math.inf if v == 0 else math.inf
        return math.log(v) - self.log_bound

    def full(self, x):
        v, g, h = self.ts.full(x)
        gv = g / v
        return math.log(v) - self.log_bound, gv, h / v - np.outer(gv, gv)
