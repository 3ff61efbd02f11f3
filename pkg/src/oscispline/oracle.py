"""Brute-force checks that share no solver or evaluation code with the main path.

Splines are evaluated by direct Gauss-Legendre quadrature of the moments
int_x^T s^l sigma(s) g(s) ds on a fine grid (cells split at the knots).  The
half-line is cut at T with int_T^inf g below a tolerance; the moments of the
tail beyond T, where sigma is constant, are added from scipy quadrature.
Optima are found by exhaustive search over knot grids with a few zoom levels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import comb

from .errors import ValidationError
from .weights import HalfLine, Segment, WeightFunction

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class BruteForceConfig:
    knot_grid_resolution: int = 24
    sample_grid_resolution: int = 1200
    truncation_T: float | None = None
    tail_tol: float = 1e-8
    levels: int = 6
    tolerance: float = 1e-3
    beam: int = 4

    def __post_init__(self):
        if self.knot_grid_resolution < 16 or self.sample_grid_resolution < 16:
            raise ValidationError("grid resolutions must be at least 16")


def truncation(g: WeightFunction, tail_tol: float) -> float:
    """Smallest T on a doubling + bisection search with int_T^inf g < tail_tol."""

    def tail(T):
        return quad(lambda s: float(g(s)), T, math.inf, epsabs=1e-16, epsrel=1e-12, limit=200)[0]

    lo, hi = 0.0, 1.0
    while tail(hi) >= tail_tol:
        lo, hi = hi, 2.0 * hi
        if hi > 1e7:
            raise ValidationError("tail of g does not decay below the truncation tolerance")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if tail(mid) >= tail_tol else (lo, mid)
    return hi


def _tail_moments(g: WeightFunction, T: float, r: int) -> np.ndarray:
    """int_T^inf s^l g(s) ds for l < r."""
    return np.array([quad(lambda s: s ** l * float(g(s)), T, math.inf, epsabs=0.0, epsrel=1e-12,
                          limit=200)[0] for l in range(r)])


class DirectSpline:
    """Spline with r-th derivative sigma g, all derivatives below r zero at T.

    With ``tail`` (an array of moments int_T^inf s^l g) the derivatives vanish
    at infinity instead, sigma keeping its last value beyond T.
    """

    def __init__(self, r: int, knots, sign: int, g: WeightFunction, T: float, grid, tail=None):
        self.r, self.T = r, T
        self.knots = np.asarray(knots, dtype=float)
        x = np.asarray(grid, dtype=float)
        cells = np.unique(np.concatenate([x, self.knots, [T]]))
        cells = cells[(cells >= x[0]) & (cells <= T)]
        a, b = cells[:-1], cells[1:]
        hw, mid = 0.5 * (b - a), 0.5 * (a + b)
        s = mid[:, None] + hw[:, None] * _GL_X[None, :]
        sig = sign * (-1.0) ** np.searchsorted(self.knots, mid, side="right")
        wg = hw[:, None] * _GL_W[None, :] * np.asarray(g(s), dtype=float) * sig[:, None]
        # moments int_{cell} s^l sigma g, accumulated from the right
        mom = np.stack([np.sum(wg * s ** l, axis=1) for l in range(r)], axis=0)
        last = np.zeros(r) if tail is None else sign * (-1.0) ** self.knots.size * np.asarray(tail)[:r]
        tail = np.concatenate([np.cumsum(mom[:, ::-1], axis=1)[:, ::-1], np.zeros((r, 1))], axis=1)
        tail += last[:, None]
        idx = np.searchsorted(cells, x)
        self.x = x
        self._M = tail[:, idx]

    def derivative(self, j: int) -> np.ndarray:
        """G^(j) on the grid: (-1)^p int_x^T (s-x)^(p-1)/(p-1)! sigma g, p = r - j."""
        p = self.r - j
        x = self.x
        acc = np.zeros_like(x)
        for l in range(p):
            acc += comb(p - 1, l) * (-x) ** (p - 1 - l) * self._M[l]
        return (-1.0) ** p * acc / math.factorial(p - 1)


def _levels(vals, x, e_minus, e_plus, n):
    """Alternating interval levels of sampled values, or None when the sign pattern is wrong."""
    s = np.sign(vals)
    nz = np.flatnonzero(s != 0)
    if nz.size == 0:
        return None
    flips = np.flatnonzero(np.diff(s[nz]) != 0)
    if flips.size != n:
        return None
    first = s[nz[0]]
    bounds = np.concatenate([[0], nz[flips + 1], [x.size]])
    out, where = [], []
    for k in range(n + 1):
        sl = slice(bounds[k], bounds[k + 1])
        sg = first * (-1.0) ** k
        env = e_plus[sl] if sg > 0 else e_minus[sl]
        ratio = first * vals[sl] * (-1.0) ** k / env
        i = int(np.argmax(ratio))
        out.append(float(ratio[i]))
        where.append(float(x[sl][i]))
    if first < 0:
        return None  # the mirrored tuple (other sign) is searched separately
    return np.array(out), np.array(where)


@dataclass
class BruteResult:
    knots: np.ndarray
    C: float
    residual: float
    oscillation_points: np.ndarray


def brute_oscillation(r: int, n: int, domain, f_minus: WeightFunction, f_plus: WeightFunction,
                      g: WeightFunction, cfg: BruteForceConfig = BruteForceConfig(), *,
                      alpha: float = 1.0) -> BruteResult:
    """Knot tuple on a grid whose spline best equalises the alternating levels.

    ``domain`` is a :class:`Segment` or the half-line; the latter is
    truncated at T and the alpha-condition handled through the envelope
    offset a = (f+(inf) - alpha f-(inf)) / (1 + alpha).
    """
    if not 1 <= n <= 3:
        raise ValidationError("brute force supports 1 <= n <= 3")
    if isinstance(domain, Segment):
        T, a, moments = domain.A, 0.0, None
    elif isinstance(domain, HalfLine):
        T = cfg.truncation_T or truncation(g, cfg.tail_tol)
        a = (f_plus.limit_at_infinity - alpha * f_minus.limit_at_infinity) / (1.0 + alpha)
        moments = _tail_moments(g, T, r)
    else:
        raise ValidationError("unknown domain")
    base = np.linspace(0.0, T, cfg.sample_grid_resolution)
    hi = T if isinstance(domain, Segment) else 0.5 * T

    def score(knots):
        # corner maxima (r = 1) sit on the knots, so sample there too
        x = np.unique(np.concatenate([base, knots]))
        e_plus = f_plus(x) - a
        e_minus = f_minus(x) + a
        best = None
        for sign in (1, -1):
            sp = DirectSpline(r, knots, sign, g, T, x, moments)
            lv = _levels(sp.derivative(0), x, e_minus, e_plus, n)
            if lv is None:
                continue
            d, where = lv
            res = (d.max() - d.min()) / d.min()
            if best is None or res < best[0]:
                best = (res, float(d.mean()), where)
        return best

    # beam search: keep the best few tuples and zoom around each of them
    start = np.linspace(0.0, hi, cfg.knot_grid_resolution + 2)[1:-1]
    windows = [([start] * n)]
    scored: dict = {}
    beam: list = []
    for level in range(cfg.levels):
        for axes in windows:
            for tup in itertools.product(*axes):
                if tup in scored or any(b <= a_ for a_, b in zip(tup, tup[1:])):
                    continue
                scored[tup] = score(np.array(tup))
        ranked = sorted((v[0], k) for k, v in scored.items() if v is not None)
        if not ranked:
            raise ValidationError("no knot tuple produced the required sign pattern")
        beam = [k for _, k in ranked[:cfg.beam]]
        h = (start[1] - start[0]) * 0.25 ** level
        windows = [[np.clip(np.linspace(t - h, t + h, 9), 1e-12, hi * (1 - 1e-12)) for t in tup]
                   for tup in beam]
    res, C, where = scored[beam[0]]
    knots = np.array(beam[0])
    return BruteResult(knots, C, float(res), where)


def brute_omega_lower_bound(r: int, k: int, delta: float, f: WeightFunction, g: WeightFunction,
                            cfg: BruteForceConfig = BruteForceConfig(), *, max_knots: int = 2) -> float:
    """max lambda |S^(k)(0)| over explicit feasible functions.

    x = L + S on [0, T] and x = L beyond, with S a truncated perfect spline
    (|x^(r)| <= g everywhere), scaled by lambda = min(1, delta / ||x||).  The
    sampled norm is inflated by a Lipschitz bound on the grid gaps so that
    every candidate is feasible and the result is a true lower bound.
    """
    if r < 2 or not 1 <= k <= r - 1:
        raise ValidationError("need r >= 2 and 1 <= k <= r-1")
    T = cfg.truncation_T or truncation(g, cfg.tail_tol)
    x = np.linspace(0.0, T, cfg.sample_grid_resolution)
    h = x[1] - x[0]
    fx = f(x)
    f_inf = f.limit_at_infinity
    span = quad(lambda s: s ** (r - 1) / math.factorial(r - 1) * float(g(s)), 0.0, T, limit=200)[0]
    Ls = np.linspace(-span - delta * f_inf, span + delta * f_inf, 4 * cfg.knot_grid_resolution + 1)
    best = 0.0

    def value(knots, sign):
        sp = DirectSpline(r, knots, sign, g, T, x)
        S = sp.derivative(0)
        slope = np.max(np.abs(sp.derivative(1)))
        dk = abs(float(sp.derivative(k)[0]))
        X = Ls[:, None] + S[None, :]
        norm = np.max(np.abs(X) / fx[None, :], axis=1) + 0.5 * h * slope / np.min(fx)
        norm = np.maximum(norm, np.abs(Ls) / f_inf)
        lam = np.minimum(1.0, delta / norm)
        return float(np.max(lam * dk))

    grid = np.linspace(0.0, 0.5 * T, cfg.knot_grid_resolution + 2)[1:-1]
    for n in range(max_knots + 1):
        for tup in itertools.combinations(grid, n):
            for sign in (1, -1):
                best = max(best, value(np.array(tup), sign))
    return best


# --------------------------------------------------------------------------
# agreement suite


@dataclass
class AgreementRow:
    case: str
    r: int
    n: int
    C_main: float
    C_oracle: float
    passed: bool


def agreement_suite(cfg: BruteForceConfig = BruteForceConfig(), *, pairs=((1, 1), (1, 2), (2, 1), (2, 2)),
                    A: float = 4.0, alpha: float = 1.0) -> list[AgreementRow]:
    """Oracle vs. main solver on C for exp weight, f = 1, segment and truncated half-line."""
    from .oscillate import oscillate_halfline, oscillate_segment
    from .weights import make_weight

    g = make_weight("exp:0,1,1")
    f = make_weight("const:1")
    gs = make_weight("exp:0,1,1", domain=Segment(A))
    fs = make_weight("const:1", domain=Segment(A))
    rows = []
    for r, n in pairs:
        main = oscillate_segment(r, n, A, fs, fs, gs).C
        brute = brute_oscillation(r, n, Segment(A), fs, fs, gs, cfg).C
        rows.append(AgreementRow(f"segment A={A:g}", r, n, main, brute, abs(main - brute) <= cfg.tolerance))
        main = oscillate_halfline(r, n, alpha, f, f, g).C
        brute = brute_oscillation(r, n, HalfLine(), f, f, g, cfg, alpha=alpha).C
        rows.append(AgreementRow(f"half-line alpha={alpha:g}", r, n, main, brute,
                                 abs(main - brute) <= cfg.tolerance))
    return rows


__all__ = [
    "BruteForceConfig", "BruteResult", "DirectSpline", "brute_oscillation", "brute_omega_lower_bound",
    "agreement_suite", "AgreementRow", "truncation",
]
