"""Knots of the perfect g-spline vanishing at prescribed points.

Given zeros s_1 < ... < s_n in [0, end) the unknown knots t_1 < ... < t_n
solve G(s_k; t) = 0, k = 1..n, where G has the boundary behaviour of its
domain (all derivatives vanish at A, or at infinity with zero limit).  The
residual map is smooth with an explicit Jacobian, so a damped Newton
iteration does the work; a homotopy in the zeros is the fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import Primitives
from .errors import NoConvergence, ValidationError, ZerosTooClose
from .spline import PerfectGSpline, sign_changes_and_zeros
from .weights import HALF_LINE, Segment

ZERO_TOL = 1e-9
MAX_NEWTON = 60


@dataclass
class ZeroFitProblem:
    r: int
    A: float
    zeros: np.ndarray
    calc: Primitives
    zero_tol: float = ZERO_TOL
    max_iter: int = MAX_NEWTON

    def __post_init__(self):
        self.zeros = np.asarray(self.zeros, dtype=float).ravel()
        self.A = float(self.A)
        s = self.zeros
        if s.size == 0:
            raise ValidationError("at least one zero is required")
        if not math.isclose(self.calc.end, self.A) and not (math.isinf(self.A) and math.isinf(self.calc.end)):
            raise ValidationError("calculus end does not match A")
        if s[0] < 0 or s[-1] >= self.A or not np.all(np.isfinite(s)):
            raise ValidationError(f"zeros must lie in [0, {self.A})")
        if np.any(np.diff(s) <= 0):
            raise ValidationError("zeros must be strictly increasing")
        res = 1e-10 * (self.A if math.isfinite(self.A) else max(1.0, s[-1]))
        gaps = np.diff(np.concatenate([s, [self.A]])) if math.isfinite(self.A) else np.diff(s)
        if gaps.size and np.min(gaps) < res:
            raise ZerosTooClose(f"zeros closer than {res:g}")

    @property
    def n(self) -> int:
        return self.zeros.size

    @property
    def domain(self):
        return HALF_LINE if math.isinf(self.A) else Segment(self.A)

    def spline(self, knots, sign=1) -> PerfectGSpline:
        return PerfectGSpline(self.r, np.asarray(knots, dtype=float), sign, self.domain, 0.0, self.calc)

    def scale(self) -> float:
        return float(self.calc.q(self.r, 0.0))

    def initial_knots(self) -> np.ndarray:
        s = self.zeros
        right = self.A if math.isfinite(self.A) else s[-1] + 2.0 * self.calc.decay_length(s[-1])
        nxt = np.concatenate([s[1:], [right]])
        return 0.5 * (s + nxt)


def _max_step(t, d, end, tau=0.9):
    """Largest alpha <= 1 keeping 0 < t_1 < ... < t_n < end after t + alpha d."""
    lo = np.concatenate([[0.0], t])
    hi = np.concatenate([t, [end]])
    dlo = np.concatenate([[0.0], d])
    dhi = np.concatenate([d, [0.0]])
    gap = hi - lo
    dgap = dhi - dlo
    alpha = 1.0
    shrink = dgap < 0
    if np.any(shrink):
        alpha = min(alpha, float(np.min(tau * gap[shrink] / -dgap[shrink])))
    return alpha


def newton_knots(problem: ZeroFitProblem, t0, tol_abs: float | None = None, max_iter: int | None = None):
    """Damped Newton on t -> G(s; t).  Returns (knots, max residual, iterations)."""
    s = problem.zeros
    end = problem.A
    t = np.asarray(t0, dtype=float).copy()
    tol_abs = 1e-15 * problem.scale() if tol_abs is None else tol_abs
    max_iter = problem.max_iter if max_iter is None else max_iter
    spl = problem.spline(t)
    F = spl.eval(0, s)
    norm = float(np.max(np.abs(F)))
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol_abs:
            break
        J = spl.knot_derivative(0, s)
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -F, rcond=None)[0]
        if not np.all(np.isfinite(d)):
            break
        alpha = _max_step(t, d, end)
        accepted = False
        for _ in range(40):
            cand = t + alpha * d
            try:
                cspl = problem.spline(cand)
                cF = cspl.eval(0, s)
            except ValidationError:
                alpha *= 0.5
                continue
            cnorm = float(np.max(np.abs(cF)))
            if np.linalg.norm(cF) <= (1.0 - 1e-4 * alpha) * np.linalg.norm(F) or cnorm <= tol_abs:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        t, spl, F, norm = cand, cspl, cF, cnorm
    return t, norm, it


def _homotopy(problem: ZeroFitProblem, t_start, z_start, tol_abs):
    """Track the knots along zeros (1-lam) z_start + lam s, lam: 0 -> 1."""
    lam, step, t = 0.0, 0.25, np.asarray(t_start, dtype=float)
    total = 0
    while lam < 1.0:
        nxt = min(1.0, lam + step)
        z = (1.0 - nxt) * z_start + nxt * problem.zeros
        sub = ZeroFitProblem(problem.r, problem.A, z, problem.calc, problem.zero_tol, 30)
        cand, res, it = newton_knots(sub, t, tol_abs=tol_abs)
        total += it
        if res <= tol_abs * 1e3:
            lam, t = nxt, cand
            step = min(0.5, 2.0 * step)
        else:
            step *= 0.5
            if step < 1e-6:
                raise NoConvergence("homotopy in the zeros stalled", best=t, residual=res, iterations=total)
    return newton_knots(problem, t, tol_abs=tol_abs)


def _starts(problem: ZeroFitProblem):
    s = problem.zeros
    yield problem.initial_knots()
    end = problem.A if math.isfinite(problem.A) else s[-1] + 4.0 * problem.calc.decay_length(s[-1])
    yield np.linspace(0.0, end, problem.n + 2)[1:-1]
    yield 0.25 * s + 0.75 * np.concatenate([s[1:], [end]])


def solve_knots(problem: ZeroFitProblem, initial=None):
    """Knot vector solving the zero conditions; (knots, residual, iterations)."""
    tol_abs = 1e-15 * problem.scale()
    accept = problem.zero_tol * problem.scale()
    best = (None, math.inf, 0)
    guesses = [np.asarray(initial, dtype=float)] if initial is not None else []
    for t0 in guesses + list(_starts(problem)):
        if t0.size != problem.n or np.any(np.diff(t0) <= 0) or t0[0] <= 0 or t0[-1] >= problem.A:
            continue
        t, res, it = newton_knots(problem, t0, tol_abs=tol_abs)
        if res <= accept:
            return t, res, it
        if res < best[1]:
            best = (t, res, it)
    # homotopy from a configuration whose zeros are known exactly
    for t0 in guesses + list(_starts(problem)):
        if t0.size != problem.n or np.any(np.diff(t0) <= 0) or t0[0] <= 0 or t0[-1] >= problem.A:
            continue
        zs = [z.t for z in sign_changes_and_zeros(problem.spline(t0), 0) if z.sign_change]
        if len(zs) != problem.n:
            continue
        try:
            t, res, it = _homotopy(problem, t0, np.asarray(zs), tol_abs)
        except NoConvergence as exc:
            if exc.residual < best[1]:
                best = (exc.best, exc.residual, exc.iterations)
            continue
        if res <= accept:
            return t, res, it
        if res < best[1]:
            best = (t, res, it)
    raise NoConvergence("zero fitting failed", best=best[0], residual=best[1], iterations=best[2])


def normalize_sign(problem: ZeroFitProblem, knots) -> int:
    """+1 or -1 so that G > 0 left of the first zero (right of it when s_1 = 0)."""
    s = problem.zeros
    spl = problem.spline(knots)
    if s[0] > 0:
        probe = 0.5 * s[0]
    else:
        right = s[1] if s.size > 1 else (problem.A if math.isfinite(problem.A) else s[0] + problem.calc.length_scale())
        probe = 0.5 * (s[0] + right)
    return 1 if spl.eval(0, probe) >= 0 else -1


def fit_knots(problem: ZeroFitProblem, initial=None) -> PerfectGSpline:
    """The perfect g-spline with exactly n knots vanishing at the prescribed zeros.

    Sign convention: positive on (0, s_1), or on (s_1, s_2) when s_1 = 0.
    Raises :class:`NoConvergence` with the best residual on failure.
    """
    t, _, _ = solve_knots(problem, initial)
    return problem.spline(t, normalize_sign(problem, t))


def residual(problem: ZeroFitProblem, spline: PerfectGSpline) -> float:
    return float(np.max(np.abs(spline.eval(0, problem.zeros))))


def knot_sensitivity(problem: ZeroFitProblem, solution: PerfectGSpline, h: float = 1e-5,
                     method: str = "fd") -> np.ndarray:
    """Jacobian d t_i / d s_j of the knots with respect to the zeros.

    ``method="fd"`` re-solves with each zero moved by +-h (central
    differences); ``method="implicit"`` differentiates the zero conditions,
    -J^{-1} diag(G'(s)), with J the knot Jacobian of G at the zeros.
    """
    s = problem.zeros
    if method == "implicit":
        J = solution.knot_derivative(0, s)
        dG = solution.eval(1, s) if solution.r > 1 else solution.highest(s)
        return -np.linalg.solve(J, np.diag(dG))
    if method != "fd":
        raise ValidationError(f"unknown method {method!r}")
    n = problem.n
    out = np.empty((n, n))
    for j in range(n):
        # one-sided at a zero pinned to the left end
        steps = (h, -h) if s[j] - h >= 0.0 else (h, 0.0)
        cols = []
        for step in steps:
            z = s.copy()
            z[j] += step
            sub = ZeroFitProblem(problem.r, problem.A, z, problem.calc, problem.zero_tol, problem.max_iter)
            t, _, _ = solve_knots(sub, solution.knots)
            cols.append(t)
        out[:, j] = (cols[0] - cols[1]) / (steps[0] - steps[1])
    return out
