"""C_0, splines of prescribed norm, least deviating primitives and omega.

omega(delta) = sup |x^(k)(0)| over x with ||x||_{C,f} <= delta and
|x^(r)| <= g.  For delta >= C_0 the bound |P_{r-k}(0)| is attained; below
C_0 the extremal function is the oscillating half-line spline whose norm is
exactly delta, found by inverting alpha -> C_n(alpha) for the right n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, linprog, minimize_scalar

from .calculus import GCalculus, build_calculus, segment_calculus
from .errors import (AssumptionsNotVerified, NoConvergence, NumericalError, OutOfRange,
                     PreconditionViolated, ValidationError)
from .oscillate import OscillationSolution, oscillate_halfline
from .spline import make_halfline_spline
from .weights import WeightFunction, check_assumptions, half_line_grid, sup_with_argmax

C0_TOL = 1e-12
SATURATION_RTOL = 1e-9
N_MAX = 24
ALPHA_BRACKET = (1e-4, 1e4)
ALPHA_EXTENDED = ((1e-5, 1e5), (1e-6, 1e6))


class Regime(str, Enum):
    SATURATED = "saturated"
    SPLINE = "spline"


@dataclass
class ModulusResult:
    delta: float
    k: int
    regime: Regime
    omega_value: float
    witness: OscillationSolution | None = None
    truncated: bool = False
    notes: list = field(default_factory=list)

    @property
    def n(self) -> int | None:
        return None if self.witness is None else self.witness.n

    @property
    def alpha(self) -> float | None:
        return None if self.witness is None else self.witness.alpha

    def to_json(self) -> dict:
        return {
            "delta": self.delta, "k": self.k, "regime": self.regime.value, "omega": self.omega_value,
            "n": self.n, "alpha": self.alpha, "truncated": self.truncated, "notes": list(self.notes),
            "witness": None if self.witness is None else self.witness.to_json(),
        }


def _calc(g, r, calc):
    if calc is not None and calc.r >= r:
        return calc
    return build_calculus(g, r)


def _require_halfline(f_minus, f_plus, g, r, need_liminf=False):
    rep = check_assumptions(f_minus, f_plus, g, r)
    ok = rep.all_pass if need_liminf else rep.halfline_ok
    if not ok:
        raise AssumptionsNotVerified(f"assumptions fail: {', '.join(rep.failed())}", rep)
    return rep


# --------------------------------------------------------------------------
# C_0


def _shift_norm(calc: GCalculus, r: int, a: float, f_minus, f_plus):
    """(||P_r + a||, argmax) on the half-line, including the limit point."""
    return sup_with_argmax(lambda t: calc.P(r, t) + a, f_minus, f_plus, math.inf,
                           limit=a, scale=calc.length_scale())


def compute_C0(r: int, f_minus: WeightFunction, f_plus: WeightFunction, g: WeightFunction, *,
               calc: GCalculus | None = None, check: bool = True, tol: float = C0_TOL):
    """(C_0, a_star): the least weighted norm of P_r + a over constants a.

    The objective is convex in a; golden-section search on a bracket wide
    enough to contain every minimiser.
    """
    if check:
        _require_halfline(f_minus, f_plus, g, r)
    calc = _calc(g, r, calc)
    span = abs(float(calc.P(r, 0.0)))
    fmax = max(float(f_minus(0.0)), float(f_plus(0.0)))
    lo, hi = -span - fmax, span + fmax

    def obj(a):
        return _shift_norm(calc, r, a, f_minus, f_plus)[0]

    res = minimize_scalar(obj, bracket=(lo, 0.0, hi), method="golden", options={"xtol": tol})
    a = float(res.x)
    return float(obj(a)), a


def c0_witness(r: int, f_minus, f_plus, g, *, calc=None, check: bool = True) -> OscillationSolution:
    """The knotless solution P_r + a_star with its envelope touches."""
    calc = _calc(g, r, calc)
    C0, a = compute_C0(r, f_minus, f_plus, g, calc=calc, check=check)
    spl = make_halfline_spline(r, [], 1, a, calc)
    grid = half_line_grid(calc.length_scale(), 4097)
    vals = spl.eval(0, grid)
    pos = np.maximum(vals, 0.0) / f_plus(grid)
    neg = np.maximum(-vals, 0.0) / f_minus(grid)
    touches = []
    for arr, lim in ((pos, max(a, 0.0) / f_plus.limit_at_infinity), (neg, max(-a, 0.0) / f_minus.limit_at_infinity)):
        i = int(np.argmax(arr))
        touches.append(math.inf if lim >= arr[i] else float(grid[i]))
    return OscillationSolution(spl, C0, np.array(sorted(touches)), np.zeros(0), None,
                               {"a_star": a, "iterations": 0, "residual": 0.0})


def saturated(delta: float, C0: float) -> bool:
    return delta >= C0 - SATURATION_RTOL * max(1.0, C0)


# --------------------------------------------------------------------------
# norm -> spline


class NormInverter:
    """Finds n and alpha with C_n(alpha) = C; caches the bracketing solves."""

    def __init__(self, r: int, f: WeightFunction, g: WeightFunction, *, calc=None, n_max: int = N_MAX,
                 check: bool = True):
        if check:
            _require_halfline(f, f, g, r, need_liminf=True)
        self.r, self.f, self.g = r, f, g
        self.calc = _calc(g, r, calc)
        self.n_max = n_max
        self.C0, self.a_star = compute_C0(r, f, f, g, calc=self.calc, check=False)
        self._ends: dict = {}
        self._mid: dict = {}

    def solve(self, n, alpha, initial=None) -> OscillationSolution:
        return oscillate_halfline(self.r, n, alpha, self.f, self.f, self.g, calc=self.calc,
                                  initial=initial, check=False)

    def _centre(self, n):
        if n not in self._mid:
            self._mid[n] = self.solve(n, 1.0)
        return self._mid[n]

    def end_solution(self, n, alpha) -> OscillationSolution | None:
        """C_n at an extreme alpha by continuation from the closest cached solve."""
        key = (n, alpha)
        if key not in self._ends:
            side = [a for (m, a) in self._ends if m == n and (a - 1.0) * (alpha - 1.0) > 0
                    and self._ends[(m, a)] is not None and abs(math.log(a)) < abs(math.log(alpha))]
            start = self._ends[(n, max(side, key=lambda a: abs(math.log(a))))] if side else self._centre(n)
            sol = start
            try:
                sol = self._walk(n, start, alpha)
            except (NoConvergence, NumericalError, ValidationError):
                sol = None
            self._ends[key] = sol
        return self._ends[key]

    def _walk(self, n, start, alpha):
        from .oscillate import _continue_alpha

        return _continue_alpha(self.r, n, start, alpha, self.f, self.f, self.g, self.calc)

    def bracket(self, n, ends=ALPHA_BRACKET):
        lo, hi = (self.end_solution(n, a) for a in ends)
        if lo is None or hi is None:
            return None
        return lo, hi

    def invert(self, C: float) -> tuple[OscillationSolution, bool, list]:
        """Witness for C in (0, C_0), with a flag when the alpha range was exhausted."""
        notes: list = []
        prev_edge = None
        for n in range(1, self.n_max + 1):
            br = self.bracket(n)
            if br is None:
                notes.append(f"n={n}: bracketing solves failed")
                continue
            lo, hi = br
            cmin, cmax = min(lo.C, hi.C), max(lo.C, hi.C)
            if cmin <= C <= cmax:
                return self._bisect(n, C, lo, hi), False, notes
            if C > cmax:
                # C lies between this n and the previous one: widen both alpha ranges
                for ends in ALPHA_EXTENDED:
                    for m in ([n - 1] if n > 1 else []) + [n]:
                        wb = self.bracket(m, ends)
                        if wb and min(wb[0].C, wb[1].C) <= C <= max(wb[0].C, wb[1].C):
                            return self._bisect(m, C, *wb), False, notes
                edge = hi if hi.C >= lo.C else lo
                if prev_edge is not None and abs(prev_edge.C - C) < abs(edge.C - C):
                    edge = prev_edge
                notes.append(f"C={C:.12g} falls in an unresolved gap; nearest reachable C={edge.C:.12g}")
                return edge, True, notes
            prev_edge = lo if lo.C <= hi.C else hi
        if prev_edge is None:
            raise NoConvergence("no n produced a bracket", best=None)
        notes.append(f"C below the smallest reachable C_n with n <= {self.n_max}")
        return prev_edge, True, notes

    def _bisect(self, n, C, lo_sol, hi_sol) -> OscillationSolution:
        cache = {}

        def nearest(la):
            pool = [lo_sol, hi_sol] + list(cache.values())
            return min(pool, key=lambda s: abs(math.log(s.alpha) - la))

        def fn(la):
            if la not in cache:
                start = nearest(la)
                try:
                    cache[la] = self.solve(n, math.exp(la), initial=start)
                except NoConvergence:
                    cache[la] = self._walk(n, start, math.exp(la))
            return cache[la].C - C

        a, b = math.log(lo_sol.alpha), math.log(hi_sol.alpha)
        fa, fb = lo_sol.C - C, hi_sol.C - C
        if fa == 0:
            return lo_sol
        if fb == 0:
            return hi_sol
        cache[a], cache[b] = lo_sol, hi_sol
        la = brentq(fn, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
        fn(la)
        return cache[la]


def spline_with_norm(r: int, C: float, f: WeightFunction, g: WeightFunction, *, inverter=None,
                     n_max: int = N_MAX, calc=None) -> OscillationSolution:
    """Oscillating half-line spline with weighted norm C (0 < C <= C_0), f- = f+ = f.

    Raises :class:`OutOfRange` above C_0 and :class:`NoConvergence` when the
    target cannot be bracketed; the diagnostics of the returned solution
    carry ``truncated=True`` when only the nearest reachable C was found.
    """
    if not C > 0:
        raise ValidationError("C must be positive")
    inv = inverter or NormInverter(r, f, g, calc=calc, n_max=n_max)
    if C > inv.C0 * (1 + SATURATION_RTOL) + 1e-15:
        raise OutOfRange(f"C={C:.12g} exceeds C_0={inv.C0:.12g}")
    if saturated(C, inv.C0):
        return c0_witness(r, f, f, g, calc=inv.calc, check=False)
    sol, truncated, notes = inv.invert(C)
    sol.diagnostics = dict(sol.diagnostics, truncated=truncated, notes=notes)
    if truncated:
        raise NoConvergence(notes[-1], best=sol, residual=abs(sol.C - C))
    return sol


def omega(r: int, k: int, delta: float, f: WeightFunction, g: WeightFunction, *, inverter=None,
          calc=None, n_max: int = N_MAX) -> ModulusResult:
    """Modulus of continuity of D^k on the weighted class at delta."""
    if int(r) != r or r < 2:
        raise PreconditionViolated("omega needs r >= 2")
    if int(k) != k or not 1 <= k <= r - 1:
        raise PreconditionViolated(f"k must lie in 1..{r - 1}")
    if not delta > 0:
        raise ValidationError("delta must be positive")
    inv = inverter or NormInverter(r, f, g, calc=calc, n_max=n_max)
    if saturated(delta, inv.C0):
        return ModulusResult(delta, k, Regime.SATURATED, abs(float(inv.calc.P(r - k, 0.0))))
    sol, truncated, notes = inv.invert(delta)
    value = abs(float(sol.spline.eval(k, 0.0)))
    return ModulusResult(delta, k, Regime.SPLINE, value, sol, truncated, notes)


def omega_curve(r: int, k: int, deltas, f: WeightFunction, g: WeightFunction, *, n_max: int = N_MAX):
    """omega on a grid of delta values, sharing one inverter."""
    inv = NormInverter(r, f, g, n_max=n_max)
    return [omega(r, k, float(d), f, g, inverter=inv) for d in deltas]


# --------------------------------------------------------------------------
# least deviating primitive


@dataclass
class PrimitiveFit:
    phi: float
    coefficients: np.ndarray
    lower: float
    iterations: int


def least_deviating_primitive(r: int, a_end: float, f: WeightFunction, g: WeightFunction, *,
                              tol: float = 1e-10, max_iter: int = 60) -> PrimitiveFit:
    """min over polynomials q of degree < r of ||P + q||_{C[0,a_end], f}.

    P is the r-th primitive (-1)^r int_t^a (s-t)^(r-1)/(r-1)! g(s) ds.  The
    minimax problem is a linear program on a finite point set; points where
    the current fit is worst are added until the sampled value and the LP
    lower bound agree.  ``coefficients`` are those of q in powers of t.
    """
    if int(r) != r or r < 1:
        raise ValidationError("r must be a positive integer")
    if not a_end > 0 or not math.isfinite(a_end):
        raise ValidationError("a_end must be positive and finite")
    calc = segment_calculus(g, r, a_end)
    dom = np.polynomial.chebyshev.Chebyshev.basis
    basis = [dom(j, domain=[0.0, a_end]) for j in range(r)]

    def prim(t):
        return calc.P(r, t)

    def design(t):
        return np.stack([b(t) for b in basis], axis=-1)

    dense = np.linspace(0.0, a_end, 8193)
    pts = np.linspace(0.0, a_end, 8 * r + 9)
    lower, coef, it = 0.0, np.zeros(r), 0
    for it in range(1, max_iter + 1):
        w = 1.0 / f(pts)
        B = design(pts) * w[:, None]
        p = prim(pts) * w
        ones = np.ones((pts.size, 1))
        A_ub = np.vstack([np.hstack([B, -ones]), np.hstack([-B, -ones])])
        b_ub = np.concatenate([-p, p])
        cost = np.zeros(r + 1)
        cost[-1] = 1.0
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (r + 1), method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise NoConvergence(f"linear program failed: {res.message}", iterations=it)
        coef, lower = res.x[:r], float(res.x[-1])

        def err(t, coef=coef):
            return np.abs(prim(t) + design(t) @ coef) / f(t)

        val, tmax = sup_with_argmax(lambda t: prim(t) + design(t) @ coef, f, f, a_end, n=dense.size)
        if val - lower <= tol * max(1.0, val):
            break
        ev = err(dense)
        peaks = np.flatnonzero((ev[1:-1] >= ev[:-2]) & (ev[1:-1] >= ev[2:])) + 1
        new = np.concatenate([[tmax], dense[peaks], dense[[0, -1]]])
        pts = np.unique(np.concatenate([pts, new]))
    else:
        raise NoConvergence("exchange iteration did not close the gap", best=coef,
                            residual=val - lower, iterations=it)
    power = np.zeros(r)
    for c, b in zip(coef, basis):
        pc = b.convert(kind=np.polynomial.Polynomial).coef
        power[: pc.size] += c * pc
    return PrimitiveFit(float(val), power, lower, it)


__all__ = [
    "compute_C0", "c0_witness", "spline_with_norm", "omega", "omega_curve", "least_deviating_primitive",
    "ModulusResult", "Regime", "NormInverter", "PrimitiveFit", "saturated",
]
