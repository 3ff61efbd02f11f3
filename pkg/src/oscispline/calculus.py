"""Iterated primitives of the weight g.

Everything downstream is expressed through the iterated tail integrals

    q_k(x) = int_x^end (s - x)^(k-1) / (k-1)! g(s) ds,   q_0 = g,

where ``end`` is the right end of the domain (A or infinity).  On the
half-line P_k = (-1)^k q_k is the k-th primitive of g vanishing with all its
derivatives at infinity, and A_k = q_{k+1}(0).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import gamma, gammainc

from .errors import Divergent, ValidationError
from .quadrature import adaptive_quad, tail_quad
from .weights import HalfLine, Segment, WeightFunction, _moment_finite

QUAD_TOL = 1e-12
_CHEB_DEG = 24


def _factorial(k):
    return float(math.factorial(k))


class _ChebTable:
    """Per-panel Chebyshev representation of q_0..q_r.

    q_k on a panel [a, b] is q_k(b) + int_x^b q_{k-1}, so each level is the
    integral of the previous series plus the right-end value carried over
    from the neighbouring panel.
    """

    def __init__(self, g, end, r, tol):
        self.r = r
        self.tol = tol
        self.g = g
        if math.isfinite(end):
            edges = self._split(g, np.linspace(0.0, end, max(2, int(math.ceil(end / 0.5)) + 1)))
            tails = np.zeros(r + 1)
            self.T = end
        else:
            edges = self._halfline_edges(g, r)
            self.T = edges[-1]
            tails = np.array([0.0] + [self._tail(k, self.T) for k in range(1, r + 1)])
        self.edges = np.asarray(edges)
        npan = len(self.edges) - 1
        width = _CHEB_DEG + r + 2
        self.coef = np.zeros((r + 1, npan, width))
        right = tails.copy()
        for j in range(npan - 1, -1, -1):
            a, b = self.edges[j], self.edges[j + 1]
            hw = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            c = C.chebinterpolate(lambda u: g(mid + hw * u), _CHEB_DEG)
            self.coef[0, j, : c.size] = c
            for k in range(1, r + 1):
                c = -C.chebint(c, lbnd=1.0, scl=hw)
                c[0] += right[k]
                self.coef[k, j, : c.size] = c
            left = np.array([C.chebval(-1.0, self.coef[k, j]) for k in range(r + 1)])
            right = left

    @staticmethod
    def _split(g, edges):
        out = [edges[0]]
        stack = list(zip(edges[1:][::-1], edges[:-1][::-1]))
        while stack:
            b, a = stack.pop()
            hw = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            c = C.chebinterpolate(lambda u: g(mid + hw * u), _CHEB_DEG)
            if np.max(np.abs(c[-3:])) > 5e-14 * max(np.max(np.abs(c)), 1e-300) and hw > 1e-4:
                stack.append((b, mid))
                stack.append((mid, a))
            else:
                out.append(b)
        return out

    def _halfline_edges(self, g, r):
        g0 = float(g(0.0))
        edges = [0.0]
        width = 0.25
        while True:
            b = edges[-1] + width
            edges.append(b)
            if float(g(b)) * max(1.0, b) ** (r + 1) <= 1e-17 * g0 or b > 1e6:
                break
            if b > 4.0:
                width *= 1.15
        return self._split(g, np.asarray(edges))

    def _tail(self, k, x):
        fk = _factorial(k - 1)
        width = max(1.0, 0.25 * x)
        return tail_quad(lambda s: (s - x) ** (k - 1) / fk * self.g(s), x, tol=self.tol, first=width)

    def __call__(self, k, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        inside = flat <= self.T
        if np.any(inside):
            xi = flat[inside]
            j = np.clip(np.searchsorted(self.edges, xi, side="right") - 1, 0, len(self.edges) - 2)
            a, b = self.edges[j], self.edges[j + 1]
            u = (2.0 * xi - a - b) / (b - a)
            out[inside] = _clenshaw(self.coef[k, j], u)
        for i in np.flatnonzero(~inside):
            out[i] = self.g(flat[i]) if k == 0 else self._tail(k, flat[i])
        return out.reshape(x.shape)


def _clenshaw(rows, u):
    b1 = np.zeros_like(u)
    b2 = np.zeros_like(u)
    for j in range(rows.shape[1] - 1, 0, -1):
        b1, b2 = rows[:, j] + 2.0 * u * b1 - b2, b1
    return rows[:, 0] + u * b1 - b2


class Primitives:
    """Iterated tail integrals q_0..q_r of g on [0, end].

    ``end`` is A for a segment and ``inf`` for the half-line.  Closed forms
    are used for exponential, constant and power weights unless
    ``force_numeric`` is set; other weights go through a Chebyshev panel
    table built once.
    """

    def __init__(self, g: WeightFunction, r: int, end: float, quad_tol: float = QUAD_TOL,
                 force_numeric: bool = False):
        if int(r) != r or r < 1:
            raise ValidationError(f"order r must be a positive integer, got {r}")
        self.g = g
        self.r = int(r)
        self.end = float(end)
        self.quad_tol = quad_tol
        self._table = None
        self._closed = None if force_numeric else self._closed_form()
        if self._closed is None:
            self._table = _ChebTable(g, self.end, self.r, quad_tol)

    @property
    def closed_form(self) -> bool:
        return self._closed is not None

    def _closed_form(self):
        g = self.g
        if math.isinf(self.end):
            if g.family == "exp" and g.params[0] == 0.0:
                _, amp, lam = g.params
                return lambda k, x: amp * np.exp(-lam * x) / lam ** k
            if g.family == "power" and g.params[0] == 0.0 and g.params[2] > self.r:
                _, amp, p = g.params
                coef = [amp * gamma(p - k) / gamma(p) for k in range(self.r + 1)]
                return lambda k, x: coef[k] * (1.0 + x) ** (k - p)
            return None
        A = self.end
        if g.family in ("exp", "const"):
            base, amp, lam = g.params if g.family == "exp" else (g.params[0], 0.0, 1.0)

            def q(k, x):
                d = np.maximum(A - x, 0.0)
                out = base * d ** k / _factorial(k)
                if amp:
                    out = out + amp * np.exp(-lam * x) / lam ** k * (gammainc(k, lam * d) if k else 1.0)
                return out

            return q
        return None

    def q(self, k: int, x):
        """k-th iterated tail integral at x (q_0 = g)."""
        if k < 0 or k > self.r:
            raise ValidationError(f"derivative order {k} outside 0..{self.r}")
        x = np.asarray(x, dtype=float)
        if k == 0:
            out = np.asarray(self.g(x), dtype=float)
        elif self._closed is not None:
            out = np.asarray(self._closed(k, x), dtype=float)
        else:
            out = self._table(k, x)
        return float(out) if out.ndim == 0 else out

    def P(self, k: int, x):
        """Signed primitive (-1)^k q_k; on the half-line this is P_k."""
        v = self.q(k, x)
        return v if k % 2 == 0 else -v

    def length_scale(self) -> float:
        """Distance over which g drops by a factor e near the origin."""
        return max(1e-3, float(self.q(1, 0.0)) / float(self.g(0.0))) if math.isinf(self.end) else self.end

    def decay_length(self, x: float) -> float:
        return max(1e-6, float(self.q(1, x)) / float(self.g(x)))


class GCalculus(Primitives):
    """Half-line calculus of g: A_k, g_k and P_k."""

    def __init__(self, g: WeightFunction, r: int, quad_tol: float = QUAD_TOL, force_numeric=False):
        if not isinstance(g.domain, HalfLine):
            raise ValidationError("GCalculus needs a half-line weight")
        super().__init__(g, r, math.inf, quad_tol, force_numeric)
        self.A = tuple(float(self.q(k + 1, 0.0)) for k in range(self.r))
        if not all(math.isfinite(a) for a in self.A):
            raise Divergent("tail constants are not finite")

    def gk(self, k: int, t):
        """Primitive of order k from 0 (g_0 = g)."""
        if k == 0:
            return self.g(t)
        t = np.asarray(t, dtype=float)
        poly = sum((-1) ** (k - s - 1) * self.A[s] * t ** (k - s - 1) / _factorial(k - s - 1)
                   for s in range(k))
        out = self.P(k, t) - (-1) ** k * poly
        return float(out) if np.ndim(out) == 0 else out

    def eval_Pk(self, k: int, t):
        return self.P(k, t)


def build_calculus(g: WeightFunction, r: int, quad_tol: float = QUAD_TOL,
                   force_numeric: bool = False) -> GCalculus:
    """Tail constants and primitives of a half-line weight g up to order r."""
    if not isinstance(g.domain, HalfLine):
        raise ValidationError("build_calculus needs a half-line weight")
    for k in range(r):
        if _moment_finite(g, k) is False:
            raise Divergent(f"A_{k} is infinite for {g.family} weight {g.params}")
    return GCalculus(g, r, quad_tol, force_numeric)


def segment_calculus(g: WeightFunction, r: int, A: float, quad_tol: float = QUAD_TOL,
                     force_numeric: bool = False) -> Primitives:
    """Tail integrals anchored at the right end A of a segment."""
    if isinstance(g.domain, Segment) and g.domain.A < A:
        raise ValidationError("weight domain shorter than the segment")
    return Primitives(g, r, A, quad_tol, force_numeric)


def eval_Pk(calc: GCalculus, k: int, t):
    return calc.P(k, t)


def envelope_bound(calc: Primitives, limit_value: float, t):
    """|L| + |P_r(t)|: the pointwise bound on any x with |x^(r)| <= g and x(inf) = L."""
    return abs(limit_value) + np.abs(calc.q(calc.r, t))


def tail_constants_by_definition(g: WeightFunction, r: int) -> list[float]:
    """A_0..A_{r-1} from the recursive definition, by plain quadrature.

    A_k is the integral over [0, inf) of
    sum_s (-1)^(k-s-1) A_s t^(k-s-1)/(k-s-1)! + (-1)^k g_k(t),
    with g_k the k-fold primitive of g from 0.  Independent of the panel
    table, used as a cross-check.
    """
    import warnings

    from scipy.integrate import IntegrationWarning, quad

    A: list[float] = []

    def gk(k, t):
        fk = _factorial(k - 1)
        return quad(lambda s: (t - s) ** (k - 1) / fk * float(g(s)), 0.0, t,
                    epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    with warnings.catch_warnings():
        # the definition subtracts a polynomial from g_k; roundoff warnings are expected
        warnings.simplefilter("ignore", IntegrationWarning)
        for k in range(r):
            def integrand(t, k=k):
                if k == 0:
                    return float(g(t))
                poly = sum((-1) ** (k - s - 1) * A[s] * t ** (k - s - 1) / _factorial(k - s - 1)
                           for s in range(k))
                return poly + (-1) ** k * gk(k, t)
            A.append(quad(integrand, 0.0, math.inf, epsabs=1e-12, epsrel=1e-11, limit=200)[0])
    return A
