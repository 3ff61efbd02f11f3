"""Maximally oscillating perfect g-splines and the curves C_n(alpha).

Both the segment and the half-line problem are solved in the same way.  A
spline H with n knots is parametrised by its n zeros z_1 < ... < z_n (the
knots follow from :mod:`oscispline.zerofit`).  On the intervals between
consecutive zeros H is alternately positive and negative, and

    delta_k = max over I_k of  H / e+   (k odd)   or   -H / e-   (k even).

Equal delta_k is exactly n+1 alternating envelope touches with C = delta_k.
On the half-line the alpha-condition fixes G(inf) = C a with
a = (f+(inf) - alpha f-(inf)) / (1 + alpha); writing G = H + C a turns it
into the same problem for H (zero limit) with envelopes e+ = f+ - a and
e- = f- + a.

The unknowns are the logarithms of the gaps z_k - z_{k-1}.  A damped
multiplicative equalisation of the levels brings the iterate close, then
Newton on log delta_k - log delta_{k+1} with an analytic Jacobian finishes.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .calculus import Primitives, build_calculus, segment_calculus
from .errors import AssumptionsNotVerified, InvalidEnvelope, NoConvergence, NumericalError, ValidationError
from .spline import PerfectGSpline, make_halfline_spline, make_segment_spline
from .weights import HalfLine, WeightFunction, check_assumptions, half_line_grid
from .zerofit import ZeroFitProblem, normalize_sign, solve_knots

EQUI_TOL = 1e-8
_NEWTON_TOL = 1e-13
_SAMPLES = 129


@dataclass
class OscillationSolution:
    spline: PerfectGSpline
    C: float
    oscillation_points: np.ndarray
    zeros: np.ndarray
    alpha: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.spline.n

    @property
    def knots(self) -> np.ndarray:
        return self.spline.knots

    def to_json(self) -> dict:
        out = {
            "C": float(self.C),
            "n": self.n,
            "alpha": None if self.alpha is None else float(self.alpha),
            "oscillation_points": [float(s) for s in self.oscillation_points],
            "zeros": [float(z) for z in self.zeros],
            "spline": self.spline.to_json(),
        }
        diag = dict(self.diagnostics)
        if "deltas" in diag:
            diag["deltas"] = [float(d) for d in diag["deltas"]]
        out["diagnostics"] = diag
        return out


# --------------------------------------------------------------------------
# envelopes


class _Envelope:
    """w(t) + shift as a vectorised callable with a value at infinity."""

    def __init__(self, w: WeightFunction, shift: float = 0.0):
        self.w = w
        self.shift = float(shift)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.w(np.where(np.isinf(t), 0.0, t)), dtype=float) + self.shift
        if np.any(np.isinf(t)):
            out = np.where(np.isinf(t), self.at_infinity(), out)
        return out

    def at_infinity(self) -> float:
        lim = self.w.limit_at_infinity
        return math.nan if lim is None else lim + self.shift

    def slope(self, t: float, h: float = 1e-6) -> float:
        h = h * max(1.0, abs(t))
        lo = max(0.0, t - h)
        return float((self(t + h) - self(lo)) / (t + h - lo))


def _check_envelope(env: _Envelope, end: float, name: str):
    grid = np.linspace(0.0, end, 1025) if math.isfinite(end) else half_line_grid(1.0, 1025)
    vals = env(grid)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidEnvelope(f"{name} is not positive on the domain")
    if math.isinf(end) and not env.at_infinity() > 0:
        raise InvalidEnvelope(f"{name} has no positive limit at infinity")


def limit_offset(alpha: float, f_minus: WeightFunction, f_plus: WeightFunction) -> float:
    """a = (f+(inf) - alpha f-(inf)) / (1 + alpha), so that G(inf) = C a."""
    return (f_plus.limit_at_infinity - alpha * f_minus.limit_at_infinity) / (1.0 + alpha)


# --------------------------------------------------------------------------
# equalisation of the interval levels


@dataclass
class _State:
    u: np.ndarray
    zeros: np.ndarray
    spline: PerfectGSpline
    deltas: np.ndarray
    argmax: np.ndarray
    kink: list

    @property
    def residual(self) -> np.ndarray:
        ld = np.log(self.deltas)
        return ld[:-1] - ld[1:]

    @property
    def equilibration(self) -> float:
        d = self.deltas
        return float(np.max(np.abs(d - d.min())) / d.min())


class _Equaliser:
    def __init__(self, r: int, n: int, end: float, calc: Primitives, e_minus: _Envelope,
                 e_plus: _Envelope):
        self.r, self.n, self.end, self.calc = r, n, end, calc
        self.env = (e_plus, e_minus)
        self.scale = abs(float(calc.q(r, 0.0)))
        self.fits = 0

    def zeros(self, u) -> np.ndarray:
        return np.cumsum(np.exp(u))

    def state(self, u, knots=None) -> _State:
        u = np.asarray(u, dtype=float)
        z = self.zeros(u)
        if not np.all(np.isfinite(z)) or (math.isfinite(self.end) and z[-1] >= self.end * (1 - 1e-12)):
            raise ValidationError("zeros left the domain")
        prob = ZeroFitProblem(self.r, self.end, z, self.calc)
        t, _, _ = solve_knots(prob, knots)
        self.fits += 1
        sign = normalize_sign(prob, t)
        spl = prob.spline(t, sign)
        if spl.n != self.n:
            raise NumericalError("knots collapsed")
        edges = np.concatenate([[0.0], z, [self.end]])
        deltas = np.empty(self.n + 1)
        argmax = np.empty(self.n + 1)
        kink: list = []
        for k in range(self.n + 1):
            deltas[k], argmax[k], kk = self._level(spl, k, edges[k], edges[k + 1])
            kink.append(kk)
        if np.any(deltas <= 0) or not np.all(np.isfinite(deltas)):
            raise NumericalError("degenerate interval level")
        return _State(u, z, spl, deltas, argmax, kink)

    def _level(self, spl: PerfectGSpline, k: int, lo: float, hi: float):
        """Level, argmax and the knot index of a corner maximum (r = 1) on interval k."""
        s = 1.0 if k % 2 == 0 else -1.0
        env = self.env[k % 2]
        inner = spl.knots[(spl.knots > lo) & (spl.knots < hi)]
        if math.isfinite(hi):
            grid = np.linspace(lo, hi, _SAMPLES)
        else:
            reach = max(self.calc.decay_length(lo), (inner[-1] - lo) if inner.size else 0.0)
            grid = half_line_grid(reach, 2 * _SAMPLES, lo)
        grid = np.unique(np.concatenate([grid, inner]))

        def ratio(t):
            return s * spl.eval(0, t) / env(t)

        vals = ratio(grid)
        i = int(np.argmax(vals))
        best_v, best_t = float(vals[i]), float(grid[i])
        if 0 < i < grid.size - 1:
            res = minimize_scalar(lambda t: -ratio(t), bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-14 * max(1.0, grid[i + 1])})
            if -res.fun > best_v:
                best_v, best_t = float(-res.fun), float(res.x)
        kink = None
        if self.r == 1 and inner.size:
            kv = ratio(inner)
            j = int(np.argmax(kv))
            if kv[j] >= best_v:
                best_v, best_t = float(kv[j]), float(inner[j])
                kink = int(np.searchsorted(spl.knots, inner[j]))
        return best_v, best_t, kink

    def jacobian(self, st: _State) -> np.ndarray:
        """d (log delta_k - log delta_{k+1}) / d u."""
        spl, z = st.spline, st.zeros
        n = self.n
        J = spl.knot_derivative(0, z)
        dH = spl.eval(1, z) if self.r > 1 else spl.highest(z)
        dtdz = -np.linalg.solve(J, np.diag(dH))
        dzdu = np.tril(np.ones((n, n))) * np.exp(st.u)[None, :]
        dld = np.empty((n + 1, n))
        for k in range(n + 1):
            s = 1.0 if k % 2 == 0 else -1.0
            env = self.env[k % 2]
            t = st.argmax[k]
            e = float(env(t))
            row = s * (spl.knot_derivative(0, t)[0] @ dtdz)
            m = st.kink[k]
            if m is not None:
                row = row + (s * float(spl.highest(t)) - st.deltas[k] * env.slope(t)) * dtdz[m]
            dld[k] = (row / e) / st.deltas[k]
        return (dld[:-1] - dld[1:]) @ dzdu

    def initial_u(self) -> np.ndarray:
        n = self.n
        if math.isfinite(self.end):
            gaps = np.full(n, self.end / (n + 1))
        else:
            gaps = np.full(n, self.calc.length_scale())
        return np.log(gaps)

    # ---- iterations

    def warmup(self, st: _State, max_iter: int = 80, target: float = 0.05, damping: float = 0.5) -> _State:
        """Multiplicative equalisation of the levels on the gap lengths."""
        for _ in range(max_iter):
            if np.max(np.abs(st.residual)) < target:
                break
            ld = np.log(st.deltas)
            mean = ld.mean()
            step = damping / self.r
            if math.isfinite(self.end):
                gaps = np.diff(np.concatenate([[0.0], st.zeros, [self.end]]))
                lg = np.log(gaps) + step * (mean - ld)
                gaps = np.exp(lg)
                gaps *= self.end / gaps.sum()
                u = np.log(gaps[:-1])
            else:
                u = st.u + step * (mean - ld[:-1])
            nxt = None
            for _ in range(20):
                try:
                    nxt = self.state(u, st.spline.knots)
                    break
                except (ValidationError, NumericalError):
                    u = 0.5 * (u + st.u)
            if nxt is None:
                break
            st = nxt
        return st

    def newton(self, st: _State, max_iter: int = 60, tol: float = _NEWTON_TOL):
        it = 0
        for it in range(1, max_iter + 1):
            F = st.residual
            if np.max(np.abs(F)) <= tol:
                break
            try:
                Jm = self.jacobian(st)
                d = np.linalg.solve(Jm, -F)
            except np.linalg.LinAlgError:
                d = np.linalg.lstsq(Jm, -F, rcond=None)[0]
            if not np.all(np.isfinite(d)):
                break
            # keep gaps from changing by more than a factor e^2 per step
            lam = min(1.0, 2.0 / max(1e-300, float(np.max(np.abs(d)))))
            fnorm = float(np.linalg.norm(F))
            accepted = False
            for _ in range(40):
                try:
                    cand = self.state(st.u + lam * d, st.spline.knots)
                except (ValidationError, NumericalError):
                    lam *= 0.5
                    continue
                if np.linalg.norm(cand.residual) <= (1.0 - 1e-4 * lam) * fnorm:
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                break
            st = cand
        return st, it

    def solve(self, u0=None, knots=None, warm: bool = True) -> tuple[_State, int]:
        u = self.initial_u() if u0 is None else np.asarray(u0, dtype=float)
        try:
            st = self.state(u, knots)
        except (ValidationError, NumericalError):
            st = self.state(self.initial_u())
            warm = True
        if warm:
            st = self.warmup(st)
        st, it = self.newton(st)
        if st.equilibration > EQUI_TOL:
            # a fresh start with a long warm-up before giving up
            st2 = self.warmup(self.state(self.initial_u()), max_iter=400, target=1e-3, damping=0.3)
            st2, it2 = self.newton(st2)
            it += it2
            if st2.equilibration < st.equilibration:
                st = st2
        return st, it


def _require(st: _State, it: int, what: str):
    if st.equilibration > EQUI_TOL:
        raise NoConvergence(f"{what}: levels not equalised (residual {st.equilibration:.3g})",
                            best=st, residual=st.equilibration, iterations=it)


# --------------------------------------------------------------------------
# segment


def _segment_zero_knots(r, A, f_plus, calc) -> OscillationSolution:
    spl = make_segment_spline(r, A, [], 1 if r % 2 == 0 else -1, calc)
    env = _Envelope(f_plus)
    eq = _Equaliser(r, 0, A, calc, env, env)
    delta, tmax, _ = eq._level(spl, 0, 0.0, A)
    return OscillationSolution(spl, delta, np.array([tmax]), np.zeros(0), None,
                               {"deltas": [delta], "iterations": 0, "residual": 0.0})


def oscillate_segment(r: int, n: int, A: float, f_minus: WeightFunction, f_plus: WeightFunction,
                      g: WeightFunction, *, calc: Primitives | None = None, initial=None,
                      offset: float = 0.0) -> OscillationSolution:
    """n-knot spline on [0, A] with n+1 alternating touches of C f+ and -C f-.

    ``initial`` may be a previous solution (warm start).  ``offset`` shifts
    the envelopes to f+ - offset and f- + offset (used by the truncated
    half-line construction).
    """
    if int(n) != n or n < 0:
        raise ValidationError("n must be a non-negative integer")
    if not A > 0 or not math.isfinite(A):
        raise ValidationError("A must be positive and finite")
    calc = calc or segment_calculus(g, r, A)
    e_plus, e_minus = _Envelope(f_plus, -offset), _Envelope(f_minus, offset)
    _check_envelope(e_plus, A, "f+")
    _check_envelope(e_minus, A, "f-")
    if n == 0:
        if offset:
            raise ValidationError("offset needs n >= 1")
        return _segment_zero_knots(r, A, f_plus, calc)
    eq = _Equaliser(r, n, A, calc, e_minus, e_plus)
    u0, knots = _warm(initial, n, A)
    st, it = eq.solve(u0, knots, warm=u0 is None)
    _require(st, it, "segment oscillation")
    C = float(st.deltas.min())
    spl = make_segment_spline(r, A, st.spline.knots, st.spline.leading_sign, calc)
    return OscillationSolution(spl, C, st.argmax.copy(), st.zeros.copy(), None,
                               {"deltas": st.deltas.tolist(), "iterations": it,
                                "residual": st.equilibration, "zero_fits": eq.fits,
                                "method": "segment"})


def _warm(initial, n, end):
    if initial is None:
        return None, None
    z = np.asarray(initial.zeros, dtype=float)
    if z.size != n or (math.isfinite(end) and z[-1] >= end):
        return None, None
    return np.log(np.diff(np.concatenate([[0.0], z]))), initial.spline.knots


# --------------------------------------------------------------------------
# half-line


def _halfline_setup(r, alpha, f_minus, f_plus, g, calc, check):
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValidationError("alpha must be positive and finite")
    for w in (f_minus, f_plus, g):
        if not isinstance(w.domain, HalfLine):
            raise ValidationError("half-line problems need half-line weights")
    if check:
        rep = check_assumptions(f_minus, f_plus, g, r)
        if not rep.halfline_ok:
            raise AssumptionsNotVerified(f"assumptions fail: {', '.join(rep.failed())}", rep)
    calc = calc or build_calculus(g, r)
    a = limit_offset(alpha, f_minus, f_plus)
    return calc, a


def truncation_point(calc: Primitives, tail: float = 1e-10) -> float:
    """Smallest A on a doubling/bisection search with int_A^inf g < tail."""
    lo, hi = 0.0, max(1.0, calc.length_scale())
    while float(calc.q(1, hi)) >= tail:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise NumericalError("tail of g does not fall below the truncation level")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if float(calc.q(1, mid)) >= tail:
            lo = mid
        else:
            hi = mid
    return hi


def oscillate_halfline(r: int, n: int, alpha: float, f_minus: WeightFunction, f_plus: WeightFunction,
                       g: WeightFunction, *, calc=None, initial: OscillationSolution | None = None,
                       method: str = "direct", check: bool = True) -> OscillationSolution:
    """n-knot half-line spline with n+1 touches and the alpha-condition at infinity.

    ``method="direct"`` solves the half-line problem itself;
    ``method="truncated"`` follows segment solutions on growing [0, A] up to
    the point where the tail of g is below 1e-10 and reports that segment's C.
    """
    if int(n) != n or n < 1:
        raise ValidationError("half-line oscillation needs n >= 1")
    calc, a = _halfline_setup(r, alpha, f_minus, f_plus, g, calc, check)
    if method == "truncated":
        return _truncated(r, n, alpha, f_minus, f_plus, g, calc, a, initial)
    if method != "direct":
        raise ValidationError(f"unknown method {method!r}")
    e_plus, e_minus = _Envelope(f_plus, -a), _Envelope(f_minus, a)
    _check_envelope(e_plus, math.inf, "f+ - a")
    _check_envelope(e_minus, math.inf, "f- + a")
    eq = _Equaliser(r, n, math.inf, calc, e_minus, e_plus)
    u0, knots = _warm(initial, n, math.inf)
    try:
        st, it = eq.solve(u0, knots, warm=u0 is None)
        _require(st, it, "half-line oscillation")
    except (NoConvergence, ValidationError, NumericalError) as exc:
        if initial is not None or abs(math.log(alpha)) < 0.25:
            raise exc if isinstance(exc, NoConvergence) else NoConvergence(str(exc))
        # walk in log(alpha) from alpha = 1
        prev = oscillate_halfline(r, n, 1.0, f_minus, f_plus, g, calc=calc, check=False)
        return _continue_alpha(r, n, prev, alpha, f_minus, f_plus, g, calc)
    return _halfline_solution(st, it, r, alpha, a, calc, eq.fits, "direct")


def _halfline_solution(st, it, r, alpha, a, calc, fits, method) -> OscillationSolution:
    C = float(st.deltas.min())
    spl = make_halfline_spline(r, st.spline.knots, st.spline.leading_sign, C * a, calc)
    return OscillationSolution(spl, C, st.argmax.copy(), st.zeros.copy(), float(alpha),
                               {"deltas": st.deltas.tolist(), "iterations": it,
                                "residual": st.equilibration, "zero_fits": fits, "method": method,
                                "offset": a})


def _continue_alpha(r, n, start: OscillationSolution, alpha, f_minus, f_plus, g, calc):
    sol, cur = start, start.alpha
    target = math.log(alpha)
    step = 0.5 if target > math.log(cur) else -0.5
    while cur != alpha:
        nxt_log = math.log(cur) + step
        nxt = alpha if (step > 0) == (nxt_log >= target) else math.exp(nxt_log)
        try:
            sol_n = oscillate_halfline(r, n, nxt, f_minus, f_plus, g, calc=calc, initial=sol, check=False)
        except (NoConvergence, ValidationError, NumericalError):
            step *= 0.5
            if abs(step) < 1e-3:
                raise NoConvergence(f"alpha continuation stalled at alpha={cur:.6g}", best=sol,
                                    residual=sol.diagnostics.get("residual", math.nan))
            continue
        sol, cur = sol_n, nxt
        step = math.copysign(min(1.0, 1.5 * abs(step)), step)
    return sol


def _truncated(r, n, alpha, f_minus, f_plus, g, calc, a, initial):
    A_end = truncation_point(calc)
    A = max(0.25 * A_end, min(A_end, 4.0 * calc.length_scale()))
    sol = None
    steps = 0
    while True:
        sc = segment_calculus(g, r, A)
        sol = oscillate_segment(r, n, A, f_minus, f_plus, g, calc=sc, initial=sol, offset=a)
        steps += 1
        if A >= A_end:
            break
        A = min(A_end, 1.25 * A)
    diag = dict(sol.diagnostics)
    diag.update({"method": "truncated", "truncation": A_end, "continuation_steps": steps, "offset": a})
    spl = make_halfline_spline(r, sol.spline.knots, sol.spline.leading_sign, sol.C * a, calc)
    return OscillationSolution(spl, sol.C, sol.oscillation_points, sol.zeros, float(alpha), diag)


def compute_Cn(r: int, n: int, alpha: float, f_minus: WeightFunction, f_plus: WeightFunction,
               g: WeightFunction, **kw) -> float:
    return oscillate_halfline(r, n, alpha, f_minus, f_plus, g, **kw).C


# --------------------------------------------------------------------------
# C_n curves


@dataclass
class CurvePoint:
    alpha: float
    C: float
    solution: OscillationSolution | None
    error: str | None = None


@dataclass
class CnCurve:
    r: int
    n: int
    points: list
    warnings: list

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p.alpha for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.C for p in self.points])


def worker_count(default: int = 1) -> int:
    env = os.environ.get("OSCISPLINE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError("OSCISPLINE_THREADS must be an integer") from None
    return default


def cn_curve(r: int, n: int, alpha_grid, f_minus: WeightFunction, f_plus: WeightFunction,
             g: WeightFunction, *, warm_start: bool = True, workers: int | None = None,
             mono_tol: float = 1e-9) -> CnCurve:
    """C_n on an increasing alpha grid; failures are recorded per point.

    With ``warm_start`` the grid is walked in order, each solve starting from
    the previous one; otherwise points are solved independently, on up to
    ``workers`` threads (default from OSCISPLINE_THREADS).
    """
    grid = np.asarray(alpha_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValidationError("alpha grid must be positive and strictly increasing")
    calc, _ = _halfline_setup(r, float(grid[0]), f_minus, f_plus, g, None, True)

    def one(alpha, init=None):
        try:
            sol = oscillate_halfline(r, n, float(alpha), f_minus, f_plus, g, calc=calc, initial=init,
                                     check=False)
            return CurvePoint(float(alpha), sol.C, sol)
        except NoConvergence as exc:
            if init is not None:
                return one(alpha)
            return CurvePoint(float(alpha), math.nan, None, str(exc))

    if warm_start:
        points, prev = [], None
        for alpha in grid:
            p = one(alpha, prev)
            points.append(p)
            prev = p.solution or prev
    else:
        with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
            points = list(pool.map(one, grid))
    notes = []
    vals = np.array([p.C for p in points])
    sgn = 1.0 if n % 2 == 1 else -1.0
    for i in range(1, len(points)):
        a, b = vals[i - 1], vals[i]
        if np.isfinite(a) and np.isfinite(b) and sgn * (b - a) < -mono_tol * max(abs(a), abs(b)):
            msg = (f"C_{n} not {'non-decreasing' if sgn > 0 else 'non-increasing'} between "
                   f"alpha={grid[i - 1]:.6g} and {grid[i]:.6g}")
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return CnCurve(r, n, points, notes)


__all__ = [
    "OscillationSolution", "oscillate_segment", "oscillate_halfline", "compute_Cn", "cn_curve",
    "CnCurve", "CurvePoint", "limit_offset", "truncation_point", "worker_count", "EQUI_TOL",
]
