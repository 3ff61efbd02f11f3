"""Weight functions f-, f+, g, the asymmetric weighted sup-norm and the
standing-assumption checker."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .errors import DomainMismatch, MissingLimit, NonPositive, NotFinite, ValidationError

# Relative tolerance of every sup computation.
SUP_RTOL = 1e-10
MONOTONE_GRID = 1024
OVERFLOW_GUARD = 1e300


@dataclass(frozen=True)
class Segment:
    A: float

    def __post_init__(self):
        if not (self.A > 0 and math.isfinite(self.A)):
            raise ValidationError(f"segment length must be positive and finite, got {self.A}")

    @property
    def end(self) -> float:
        return float(self.A)

    def to_json(self):
        return {"segment": self.A}


@dataclass(frozen=True)
class HalfLine:
    @property
    def end(self) -> float:
        return math.inf

    def to_json(self):
        return "halfline"


HALF_LINE = HalfLine()
Domain = Segment | HalfLine


def parse_domain(spec) -> Domain:
    if isinstance(spec, (Segment, HalfLine)):
        return spec
    if spec is None or spec in ("halfline", "half-line", "inf"):
        return HALF_LINE
    if isinstance(spec, dict) and "segment" in spec:
        return Segment(float(spec["segment"]))
    if isinstance(spec, str) and spec.startswith("segment:"):
        return Segment(float(spec.split(":", 1)[1]))
    if isinstance(spec, (int, float)):
        return Segment(float(spec))
    raise ValidationError(f"cannot parse domain {spec!r}")


@dataclass(frozen=True)
class WeightFunction:
    """A positive continuous weight on [0, A] or [0, inf).

    ``params`` is family specific:
    const -> (c,), exp -> (base, amplitude, rate), power -> (base, amplitude, p),
    tab -> (t_grid, w_grid).
    """

    family: str
    params: tuple
    domain: Domain
    limit_at_infinity: float | None
    monotone_nonincreasing: bool
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.evaluator(t)
        if out.ndim == 0:
            return float(out)
        return out

    @property
    def closed_form(self) -> bool:
        return self.family != "tab"

    def at_infinity(self) -> float:
        if isinstance(self.domain, Segment):
            return float(self(self.domain.A))
        return float(self.limit_at_infinity)

    def scaled(self, lam: float) -> "WeightFunction":
        if not lam > 0:
            raise NonPositive("scale factor must be positive")
        if self.family == "const":
            return _build("const", (self.params[0] * lam,), self.domain)
        if self.family in ("exp", "power"):
            b, a, c = self.params
            return _build(self.family, (b * lam, a * lam, c), self.domain)
        t, w = self.params
        return _build("tab", (t, tuple(np.asarray(w) * lam)), self.domain,
                      monotone=self.monotone_nonincreasing)

    def to_json(self) -> dict:
        out = {"family": self.family, "domain": self.domain.to_json()}
        if self.family == "const":
            out["value"] = self.params[0]
        elif self.family == "exp":
            out.update(base=self.params[0], amplitude=self.params[1], rate=self.params[2])
        elif self.family == "power":
            out.update(base=self.params[0], amplitude=self.params[1], exponent=self.params[2])
        else:
            out.update(t=list(self.params[0]), w=list(self.params[1]))
        return out


def _build(family, params, domain, monotone=None) -> WeightFunction:
    if family == "const":
        (c,) = params
        if not c > 0:
            raise NonPositive(f"constant weight must be positive, got {c}")
        return WeightFunction("const", (float(c),), domain, float(c), True,
                              lambda t: np.full_like(t, float(c), dtype=float))
    if family in ("exp", "power"):
        base, amp, third = (float(p) for p in params)
        if not third > 0:
            raise ValidationError(f"{family} weight needs a positive rate/exponent, got {third}")
        if base < 0:
            raise NonPositive(f"{family} weight base must be >= 0, got {base}")
        if family == "exp":
            fn = lambda t: base + amp * np.exp(-third * t)  # noqa: E731
        else:
            fn = lambda t: base + amp * (1.0 + t) ** (-third)  # noqa: E731
        # value at 0 and limit bound the range (monotone family)
        lo = base if isinstance(domain, HalfLine) else min(base + amp, float(fn(domain.A)))
        if base + amp <= 0 or lo < 0 or (lo == 0 and not (amp > 0 and isinstance(domain, HalfLine))):
            raise NonPositive(f"{family}:{base},{amp},{third} is not positive on {domain}")
        return WeightFunction(family, (base, amp, third), domain, base, amp >= 0, fn)
    if family == "tab":
        t, w = (np.asarray(p, dtype=float) for p in params)
        if t.ndim != 1 or t.shape != w.shape or t.size < 2:
            raise ValidationError("tabulated weight needs matching 1-D t and w arrays")
        if np.any(np.diff(t) <= 0) or t[0] > 0:
            raise ValidationError("tabulated grid must be strictly increasing and start at 0")
        if np.any(w <= 0):
            raise NonPositive("tabulated weight has non-positive samples")
        if isinstance(domain, Segment) and t[-1] < domain.A:
            raise ValidationError("tabulated grid does not cover the segment")
        interp = PchipInterpolator(t, w, extrapolate=False)
        last = float(w[-1])

        def fn(x, interp=interp, tmax=t[-1], last=last):
            x = np.asarray(x, dtype=float)
            return np.where(x >= tmax, last, interp(np.clip(x, 0.0, tmax)))

        if monotone is None:
            monotone = bool(np.all(np.diff(w) <= 0))
        return WeightFunction("tab", (tuple(t), tuple(w)), domain, last, bool(monotone), fn)
    raise ValidationError(f"unknown weight family {family!r}")


_ALIASES = {
    "const": "const", "constant": "const",
    "exp": "exp", "expdecay": "exp",
    "power": "power", "powerdecay": "power",
    "tab": "tab", "tabulated": "tab",
}


def read_weight_csv(path) -> tuple[np.ndarray, np.ndarray]:
    ts, ws = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ts.append(float(row["t"]))
            ws.append(float(row["w"]))
    return np.array(ts), np.array(ws)


def make_weight(spec, domain=None) -> WeightFunction:
    """Build a weight from a family descriptor.

    Accepts a dict such as ``{"family": "exp", "base": 0, "amplitude": 1,
    "rate": 1}``, the command-line shorthand ``"exp:0,1,1"`` /
    ``"const:1"`` / ``"power:0,1,3"`` / ``"tab:weights.csv"``, or an
    existing :class:`WeightFunction` (returned unchanged unless ``domain``
    differs).
    """
    if isinstance(spec, WeightFunction):
        if domain is None or parse_domain(domain) == spec.domain:
            return spec
        if spec.family == "tab":
            return _build("tab", spec.params, parse_domain(domain), spec.monotone_nonincreasing)
        return _build(spec.family, spec.params, parse_domain(domain))
    if isinstance(spec, str):
        head, _, rest = spec.partition(":")
        family = _ALIASES.get(head.strip().lower())
        if family is None:
            raise ValidationError(f"unknown weight family in {spec!r}")
        if family == "tab":
            spec = {"family": "tab", "path": rest}
        else:
            try:
                vals = [float(v) for v in rest.split(",") if v.strip()]
            except ValueError as exc:
                raise ValidationError(f"bad weight parameters in {spec!r}") from exc
            spec = {"family": family, "params": vals}
    if not isinstance(spec, dict):
        raise ValidationError(f"cannot interpret weight spec {spec!r}")

    family = _ALIASES.get(str(spec.get("family", "")).lower())
    if family is None:
        raise ValidationError(f"unknown weight family {spec.get('family')!r}")
    dom = parse_domain(domain if domain is not None else spec.get("domain"))
    if "params" in spec:
        params = tuple(spec["params"])
    elif family == "const":
        params = (spec.get("value", spec.get("c", 1.0)),)
    elif family == "exp":
        params = (spec.get("base", 0.0), spec.get("amplitude", 1.0), spec.get("rate", 1.0))
    elif family == "power":
        params = (spec.get("base", 0.0), spec.get("amplitude", 1.0), spec.get("exponent", spec.get("p", 2.0)))
    else:
        if "path" in spec:
            params = read_weight_csv(spec["path"])
        else:
            params = (spec["t"], spec["w"])
    expected = {"const": 1, "exp": 3, "power": 3, "tab": 2}[family]
    if len(params) != expected:
        raise ValidationError(f"{family} weight takes {expected} parameters, got {len(params)}")
    w = _build(family, params, dom, spec.get("monotone"))
    if isinstance(dom, HalfLine) and w.limit_at_infinity is None:
        raise MissingLimit("half-line weight without a computable limit")
    return w


# --------------------------------------------------------------------------
# weighted sup-norm


def _objective(x_vals, fm, fp):
    return np.maximum(x_vals, 0.0) / fp + np.maximum(-x_vals, 0.0) / fm


def half_line_grid(scale: float, n: int = 4097, start: float = 0.0) -> np.ndarray:
    """Points covering [start, inf) through t = start + scale*u/(1-u)."""
    u = np.linspace(0.0, 1.0, n, endpoint=False)
    return start + scale * u / (1.0 - u)


def sup_with_argmax(x: Callable, f_minus, f_plus, end: float, *, limit=None,
                    breakpoints: Sequence[float] = (), scale: float = 1.0,
                    n: int = 2049, rtol: float = SUP_RTOL, start: float = 0.0):
    """Return (value, argmax) of the weighted objective on [start, end].

    ``argmax`` is ``inf`` when the supremum is only attained in the limit.
    """
    if math.isinf(end):
        grid = half_line_grid(scale, 2 * n - 1, start)
    else:
        grid = np.linspace(start, end, n)
    if len(breakpoints):
        bp = np.asarray([b for b in breakpoints if start <= b <= end], dtype=float)
        grid = np.unique(np.concatenate([grid, bp]))

    def obj(t):
        t = np.asarray(t, dtype=float)
        return _objective(np.asarray(x(t), dtype=float), f_minus(t), f_plus(t))

    vals = obj(grid)
    if not np.all(np.isfinite(vals)):
        raise NotFinite("weighted objective is not finite on the sampling grid")
    best_val, best_t = -1.0, math.nan

    # refine the few largest interior local maxima
    interior = np.flatnonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])) + 1
    cand = list(interior[np.argsort(vals[interior])[::-1][:6]])
    for i in (0, len(grid) - 1):
        cand.append(i)
    for i in cand:
        if vals[i] > best_val:
            best_val, best_t = float(vals[i]), float(grid[i])
        if 0 < i < len(grid) - 1 and vals[i] > 0:
            lo, hi = grid[i - 1], grid[i + 1]
            res = minimize_scalar(lambda s: -float(obj(s)), bounds=(lo, hi), method="bounded",
                                  options={"xatol": max(1e-13, rtol * 1e-3 * (1.0 + abs(grid[i])))})
            if -res.fun > best_val:
                best_val, best_t = float(-res.fun), float(res.x)
    if limit is not None and math.isinf(end):
        lim_val = float(_objective(np.float64(limit), f_minus.at_infinity(), f_plus.at_infinity()))
        if lim_val > best_val:
            best_val, best_t = lim_val, math.inf
    if not math.isfinite(best_val) or best_val > OVERFLOW_GUARD:
        raise NotFinite("weighted norm exceeds the overflow guard")
    return best_val, best_t


def weighted_norm(x, f_minus: WeightFunction, f_plus: WeightFunction | None = None, *,
                  domain=None, limit=None, breakpoints: Sequence[float] = (),
                  scale: float | None = None, rtol: float = SUP_RTOL) -> float:
    """Asymmetric weighted sup-norm sup_t [x_+(t)/f+(t) + x_-(t)/f-(t)].

    ``x`` is a vectorised callable (a :class:`PerfectGSpline` works directly)
    or an array of samples on an explicit grid passed as ``breakpoints``.
    On the half-line the limit value of ``x`` (if known) is a candidate too.
    With ``f_plus`` omitted the symmetric norm sup |x|/f is computed.
    """
    if f_plus is None:
        f_plus = f_minus
    if not callable(x):
        samples = np.asarray(x, dtype=float)
        grid = np.asarray(breakpoints, dtype=float)
        if grid.shape != samples.shape:
            raise ValidationError("sampled input needs its grid passed as breakpoints")
        val = float(np.max(_objective(samples, f_minus(grid), f_plus(grid)))) if samples.size else 0.0
        if limit is not None:
            val = max(val, float(_objective(np.float64(limit), f_minus.at_infinity(), f_plus.at_infinity())))
        return val
    dom = getattr(x, "domain", None) or (parse_domain(domain) if domain is not None else f_plus.domain)
    if limit is None:
        limit = getattr(x, "limit_value", None) if isinstance(dom, HalfLine) else None
    knots = getattr(x, "knots", ())
    bps = list(breakpoints) + list(np.asarray(knots, dtype=float))
    if scale is None:
        scale = max(1.0, max(bps) if bps else 1.0)
        calc = getattr(x, "calc", None)
        if calc is not None and isinstance(dom, HalfLine):
            scale = max(scale, calc.length_scale())
    val, _ = sup_with_argmax(x, f_minus, f_plus, dom.end, limit=limit, breakpoints=bps,
                             scale=scale, rtol=rtol)
    return val


# --------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionReport:
    positivity: bool
    monotonicity: bool
    f_limit_positive: bool
    th0: bool
    th1: bool
    liminf: bool
    sup_th2: bool
    heuristic: bool = False
    notes: list[str] = field(default_factory=list)

    CONDITIONS = ("positivity", "monotonicity", "f_limit_positive", "th0", "th1", "liminf", "sup_th2")

    @property
    def all_pass(self) -> bool:
        return all(getattr(self, c) for c in self.CONDITIONS)

    @property
    def halfline_ok(self) -> bool:
        """Conditions needed to build half-line splines (no liminf)."""
        return self.positivity and self.monotonicity and self.f_limit_positive and self.th0 and self.th1

    def failed(self) -> list[str]:
        return [c for c in self.CONDITIONS if not getattr(self, c)]

    def to_json(self) -> dict:
        out = {c: getattr(self, c) for c in self.CONDITIONS}
        out["heuristic"] = self.heuristic
        out["notes"] = list(self.notes)
        return out


def _positive(w: WeightFunction) -> bool:
    if w.family == "tab":
        return bool(np.all(np.asarray(w.params[1]) > 0))
    # closed forms are validated at construction
    return True


def _sampled_monotone(w: WeightFunction) -> bool:
    end = w.domain.end
    grid = np.linspace(0.0, end, MONOTONE_GRID) if math.isfinite(end) else half_line_grid(4.0, MONOTONE_GRID)
    vals = w(grid)
    return bool(np.all(np.diff(vals) <= 1e-14 * np.maximum(1.0, np.abs(vals[:-1]))))


def _moment_finite(g: WeightFunction, k: int) -> bool | None:
    """Is int_0^inf t^k g(t) dt finite?  None means undecided analytically."""
    if g.family == "const":
        return False
    if g.family == "exp":
        return g.params[0] == 0.0
    if g.family == "power":
        return g.params[0] == 0.0 and g.params[2] > k + 1
    return None


def _decay(w: WeightFunction):
    """Leading behaviour of w(t) - w(inf): ('zero',), ('exp', rate) or ('power', exponent)."""
    if w.family == "const" or (w.family in ("exp", "power") and w.params[1] == 0):
        return ("zero",)
    if w.family == "exp":
        return ("exp", w.params[2])
    if w.family == "power":
        return ("power", w.params[2])
    return None


def _liminf_ratio_zero(f: WeightFunction, g: WeightFunction, r: int) -> bool | None:
    """Analytic decision of liminf (f(t)-f(inf)) / |P_r(t)| = 0."""
    df, dg = _decay(f), _decay(g)
    if df == ("zero",):
        return True
    if df is None or g.family not in ("exp", "power"):
        return None
    # |P_r| ~ e^{-mu t} (exp g) or (1+t)^{r-p} (power g)
    if g.family == "exp":
        return df[0] == "exp" and df[1] > g.params[2]
    p = g.params[2]
    if df[0] == "exp":
        return True
    return df[1] > p - r


def check_assumptions(f_minus: WeightFunction, f_plus: WeightFunction, g: WeightFunction,
                      r: int) -> AssumptionReport:
    """Decide the standing half-line assumptions for (f-, f+, g, r).

    Closed-form families are decided analytically; tabulated weights are
    probed numerically and the report is flagged ``heuristic``.
    """
    if not (f_minus.domain == f_plus.domain == g.domain):
        raise DomainMismatch("f-, f+ and g must share a domain")
    if int(r) != r or r < 1:
        raise ValidationError(f"order r must be a positive integer, got {r}")
    r = int(r)
    notes: list[str] = []
    heuristic = any(w.family == "tab" for w in (f_minus, f_plus, g))
    weights = (f_minus, f_plus, g)
    positivity = all(_positive(w) for w in weights)
    monotonicity = True
    for name, w in zip(("f-", "f+", "g"), weights):
        if not w.monotone_nonincreasing:
            monotonicity = False
            notes.append(f"{name} not declared non-increasing")
        elif not _sampled_monotone(w):
            monotonicity = False
            notes.append(f"{name} declared non-increasing but sampling disagrees")
    if isinstance(g.domain, Segment):
        # all finite-segment integrals exist; the half-line conditions are vacuous
        return AssumptionReport(positivity, monotonicity, True, True, True, True, True, heuristic,
                                notes + ["segment domain: half-line conditions not applicable"])

    f_limit_positive = f_minus.limit_at_infinity > 0 and f_plus.limit_at_infinity > 0
    if not f_limit_positive:
        notes.append("f(inf) = 0")

    moments = [_moment_finite(g, k) for k in range(r)]
    if any(m is None for m in moments):
        heuristic = True
        moments = [_numeric_moment_finite(g, k) for k in range(r)]
    th0 = bool(moments[0])
    th1 = all(moments[1:]) if r > 1 else True
    if not th0:
        notes.append("integral of g diverges")
    elif not th1:
        notes.append("some tail constant A_k is infinite")

    liminf = False
    sup_th2 = False
    if th0 and th1:
        from .calculus import build_calculus  # local import: calculus depends on weights

        calc = None
        decisions = []
        for f in (f_minus, f_plus):
            d = _liminf_ratio_zero(f, g, r)
            if d is None:
                heuristic = True
                calc = calc or build_calculus(g, r)
                d = _numeric_liminf(f, calc, r)
            decisions.append(d)
        liminf = all(decisions)
        if not liminf:
            notes.append("liminf (f(t)-f(inf))/P_r(t) is not zero")
        if f_limit_positive:
            # P_r is bounded by A_{r-1} and f >= f(inf) > 0
            sup_th2 = True
        else:
            heuristic = True
            calc = calc or build_calculus(g, r)
            sup_th2 = all(_numeric_th2(f, calc, r) for f in (f_minus, f_plus))
    return AssumptionReport(positivity, monotonicity, bool(f_limit_positive), th0, th1,
                            bool(liminf), bool(sup_th2), heuristic, notes)


def _numeric_moment_finite(g: WeightFunction, k: int) -> bool:
    lim = g.limit_at_infinity
    if lim is None or lim > 0:
        return False
    # t^{k+1} g(t) must decay: compare on an expanding grid
    t = 2.0 ** np.arange(2, 40)
    v = t ** (k + 2) * g(t)
    return bool(v[-1] < v[len(v) // 2] and v[-1] < 1.0)


def _numeric_liminf(f: WeightFunction, calc, r: int) -> bool:
    t = 2.0 ** np.arange(0, 12)
    p = np.abs(calc.P(r, t))
    ok = p > 1e-280
    ratio = (f(t[ok]) - f.limit_at_infinity) / p[ok]
    return bool(ratio.size and np.min(ratio[-4:]) < 1e-6)


def _numeric_th2(f: WeightFunction, calc, r: int) -> bool:
    t = 2.0 ** np.arange(0, 12)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.abs(calc.P(r, t)) / f(t)
    return bool(np.all(np.isfinite(ratio)) and ratio[-1] <= ratio[len(ratio) // 2] * 1.0 + 1e-300)
