"""Perfect g-splines on a segment [0, A] and on the half-line.

A spline of order r with knots t_1 < ... < t_n has G^(r) = sigma_i g on
(t_i, t_{i+1}) with sigma_i = eps * (-1)^i.  All derivatives below r vanish
at the right end (t = A, or t -> inf where G tends to ``limit_value``), so by
Taylor's formula with integral remainder

    G^(j)(x) = L [j = 0] + (-1)^p int_x^end (s-x)^(p-1)/(p-1)! sigma(s) g(s) ds,

p = r - j.  Splitting the integral at the knots leaves only the tail
integrals q_k of :mod:`oscispline.calculus` at x and at the knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .calculus import GCalculus, Primitives, _factorial
from .errors import AssumptionsNotVerified, KnotsNotSorted, KnotsOutOfRange, OutOfDomain, ValidationError
from .weights import HALF_LINE, Domain, HalfLine, Segment, half_line_grid

KNOT_MERGE_TOL = 1e-12


def _collapse(knots: np.ndarray) -> np.ndarray:
    """Drop pairs of coincident knots; the sign pattern outside them is unchanged."""
    out: list[float] = []
    for t in knots:
        if out and abs(t - out[-1]) <= KNOT_MERGE_TOL * max(1.0, abs(t)):
            out.pop()
        else:
            out.append(float(t))
    return np.asarray(out, dtype=float)


@dataclass(frozen=True, eq=False)
class PerfectGSpline:
    r: int
    knots: np.ndarray
    leading_sign: int
    domain: Domain
    limit_value: float
    calc: Primitives = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.knots)

    @property
    def end(self) -> float:
        return self.domain.end

    def signs(self) -> np.ndarray:
        """sigma_0..sigma_n."""
        return self.leading_sign * (-1.0) ** np.arange(self.n + 1)

    def __call__(self, t, j: int = 0):
        return self.eval(j, t)

    def _check_x(self, x):
        end = self.end
        tol = 1e-12 * max(1.0, end if math.isfinite(end) else 1.0)
        if np.any(x < -tol) or (math.isfinite(end) and np.any(x > end + tol)) or np.any(np.isnan(x)):
            raise OutOfDomain(f"evaluation point outside [0, {end}]")
        return np.clip(x, 0.0, end)

    def eval(self, j: int, t):
        """G^(j)(t) for 0 <= j <= r - 1 (t may be ``inf`` on the half-line)."""
        if not 0 <= j <= self.r - 1:
            raise ValidationError(f"derivative order {j} outside 0..{self.r - 1}")
        x = np.asarray(t, dtype=float)
        scalar = x.ndim == 0
        x = self._check_x(np.atleast_1d(x))
        out = np.zeros_like(x)
        far = np.isinf(x)
        if np.any(far):
            out[far] = self.limit_value if j == 0 else 0.0
        xs = x[~far]
        if xs.size:
            out[~far] = self._eval_finite(j, xs)
        return float(out[0]) if scalar else out

    def _eval_finite(self, j, x):
        p = self.r - j
        sig = self.signs()
        acc = sig[0] * self.calc.q(p, x)
        if self.n:
            c = np.maximum(x[:, None], self.knots[None, :])
            acc = acc + np.sum(2.0 * sig[1:] * _h(self.calc, p, x[:, None], c), axis=1)
        out = (-1.0) ** p * acc
        if j == 0:
            out = out + self.limit_value
        return out

    def highest(self, t):
        """G^(r)(t) = sigma(t) g(t), taking the right limit at a knot."""
        x = self._check_x(np.atleast_1d(np.asarray(t, dtype=float)))
        idx = np.searchsorted(self.knots, x, side="right")
        out = self.leading_sign * (-1.0) ** idx * self.calc.q(0, x)
        return float(out[0]) if np.ndim(t) == 0 else out

    def knot_derivative(self, j: int, t) -> np.ndarray:
        """d G^(j)(t) / d t_i as an array of shape (len(t), n)."""
        p = self.r - j
        x = np.atleast_1d(np.asarray(t, dtype=float))
        sig = self.signs()
        d = self.knots[None, :] - x[:, None]
        kern = np.where(d > 0, np.maximum(d, 0.0) ** (p - 1) / _factorial(p - 1), 0.0)
        gk = self.calc.q(0, self.knots) if self.n else np.zeros(0)
        return -((-1.0) ** p) * 2.0 * sig[1:][None, :] * np.atleast_1d(gk)[None, :] * kern

    def negated(self) -> "PerfectGSpline":
        return PerfectGSpline(self.r, self.knots, -self.leading_sign, self.domain, -self.limit_value, self.calc)

    def shifted(self, offset: float) -> "PerfectGSpline":
        if isinstance(self.domain, Segment):
            raise ValidationError("segment splines are pinned by their boundary conditions")
        return PerfectGSpline(self.r, self.knots, self.leading_sign, self.domain,
                              self.limit_value + offset, self.calc)

    def sample_grid(self, n: int = 2049) -> np.ndarray:
        if math.isfinite(self.end):
            grid = np.linspace(0.0, self.end, n)
        else:
            scale = max(self.calc.length_scale(), float(self.knots[-1]) if self.n else 0.0)
            grid = half_line_grid(scale, n)
        return np.unique(np.concatenate([grid, self.knots]))

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "domain": self.domain.to_json(),
            "knots": [float(t) for t in self.knots],
            "leading_sign": int(self.leading_sign),
            "limit_value": float(self.limit_value),
        }


def _h(calc: Primitives, p: int, x, c):
    """int_c^end (s-x)^(p-1)/(p-1)! g(s) ds for c >= x, via the q_k at c."""
    d = c - x
    out = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(c)))
    for l in range(p):
        out = out + d ** (p - 1 - l) / _factorial(p - 1 - l) * calc.q(l + 1, c)
    return out


def _validate_knots(knots, end) -> np.ndarray:
    t = np.asarray(knots, dtype=float).ravel()
    if t.size and (np.any(np.diff(t) < 0)):
        raise KnotsNotSorted("knots must be increasing")
    if t.size and (t[0] <= 0 or t[-1] >= end or not np.all(np.isfinite(t))):
        raise KnotsOutOfRange(f"knots must lie strictly inside (0, {end})")
    return _collapse(t)


def make_segment_spline(r: int, A: float, knots, leading_sign: int, calc: Primitives) -> PerfectGSpline:
    """The spline on [0, A] with the given knots and G^(k)(A) = 0, k < r."""
    if leading_sign not in (1, -1):
        raise ValidationError("leading_sign must be +1 or -1")
    if calc.r < r or not math.isclose(calc.end, A, rel_tol=0, abs_tol=1e-12 * max(1.0, A)):
        raise ValidationError("calculus does not match (r, A)")
    t = _validate_knots(knots, A)
    return PerfectGSpline(int(r), t, int(leading_sign), Segment(float(A)), 0.0, calc)


def make_halfline_spline(r: int, knots, leading_sign: int, limit_value: float,
                         calc: Primitives) -> PerfectGSpline:
    """The half-line spline with G(inf) = limit_value and vanishing derivative limits.

    On the last interval (t_n, inf) it equals limit_value + sigma_n P_r.
    """
    if leading_sign not in (1, -1):
        raise ValidationError("leading_sign must be +1 or -1")
    if not math.isinf(calc.end):
        raise AssumptionsNotVerified("half-line splines need a half-line calculus (A_k finite)")
    if calc.r < r:
        raise ValidationError("calculus order is below r")
    t = _validate_knots(knots, math.inf)
    return PerfectGSpline(int(r), t, int(leading_sign), HALF_LINE, float(limit_value), calc)


def eval_spline(spline: PerfectGSpline, j: int, t):
    return spline.eval(j, t)


@dataclass(frozen=True)
class Zero:
    t: float
    sign_change: bool


def sign_changes_and_zeros(spline: PerfectGSpline, j: int = 0, interval=None,
                           n_grid: int = 4097) -> list[Zero]:
    """Sign changes of G^(j) on an open interval, located by bisection.

    Defaults to the interior of the domain.  Touching zeros (|G^(j)| below
    1e-12 of the sampled scale at a local minimum without a sign change) are
    reported with ``sign_change=False``.
    """
    if not 0 <= j <= spline.r - 1:
        raise ValidationError(f"derivative order {j} outside 0..{spline.r - 1}")
    lo, hi = interval if interval is not None else (0.0, spline.end)
    grid = spline.sample_grid(n_grid)
    if math.isinf(hi):
        grid = grid[grid >= lo]
    else:
        grid = np.unique(np.concatenate([np.linspace(lo, hi, n_grid), grid[(grid >= lo) & (grid <= hi)]]))
    vals = spline.eval(j, grid)
    scale = max(np.max(np.abs(vals)), 1e-300)
    eps = 1e-13 * scale
    keep = np.abs(vals) > eps
    out: list[Zero] = []
    idx = np.flatnonzero(keep)
    for a, b in zip(idx[:-1], idx[1:]):
        if np.sign(vals[a]) != np.sign(vals[b]):
            if b == a + 1:
                z = brentq(lambda s: spline.eval(j, s), grid[a], grid[b], xtol=1e-15, rtol=1e-15)
            else:
                z = 0.5 * (grid[a + 1] + grid[b - 1])
            if lo < z < hi:
                out.append(Zero(float(z), True))
    absval = np.abs(vals)
    for i in range(1, len(grid) - 1):
        if absval[i] <= absval[i - 1] and absval[i] <= absval[i + 1] and absval[i] <= 1e-12 * scale:
            if np.sign(vals[i - 1]) == np.sign(vals[i + 1]) and vals[i - 1] != 0:
                if not any(abs(z.t - grid[i]) < 1e-9 for z in out):
                    out.append(Zero(float(grid[i]), False))
    return sorted(out, key=lambda z: z.t)


def spline_from_json(data: dict, calc: Primitives) -> PerfectGSpline:
    dom = data["domain"]
    if dom == "halfline":
        return make_halfline_spline(data["r"], data["knots"], data["leading_sign"], data["limit_value"], calc)
    return make_segment_spline(data["r"], float(dom["segment"]), data["knots"], data["leading_sign"], calc)


__all__ = [
    "PerfectGSpline", "make_segment_spline", "make_halfline_spline", "eval_spline",
    "sign_changes_and_zeros", "spline_from_json", "Zero", "GCalculus", "HalfLine",
]
