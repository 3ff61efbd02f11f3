import math
import warnings

import numpy as np
import pytest

from conftest import seg_weights
from oscispline import (AssumptionsNotVerified, InvalidEnvelope, ValidationError, build_calculus, cn_curve,
                        compute_Cn, make_weight, oscillate_halfline, oscillate_segment,
                        sign_changes_and_zeros)
from oscispline.oscillate import limit_offset, truncation_point, worker_count

G_EXP = make_weight("exp:0,1,1")
F_ONE = make_weight("const:1")


def envelope_report(sol, f_minus, f_plus, n_grid=4096):
    """(max G/(C f+), min G/(C f-)) on a dense grid including the touches."""
    G = sol.spline
    grid = np.unique(np.concatenate([G.sample_grid(n_grid), sol.oscillation_points[np.isfinite(
        sol.oscillation_points)]]))
    vals = G(grid)
    return np.max(vals / (sol.C * f_plus(grid))), np.min(vals / (sol.C * f_minus(grid)))


def check_touches(sol, f_minus, f_plus, tol=1e-8):
    G = sol.spline
    pts = sol.oscillation_points
    assert len(pts) == sol.n + 1
    assert np.all(np.diff(pts) > 0)
    for k, s in enumerate(pts, start=1):
        target = sol.C * f_plus(s) if k % 2 else -sol.C * f_minus(s)
        assert G(s) == pytest.approx(target, rel=tol, abs=tol * sol.C)


# --------------------------------------------------------------------------
# segment


def test_segment_r1_closed_form():
    A = math.log(4)
    fs = seg_weights(A)[1]
    gs = seg_weights(A)[0]
    sol = oscillate_segment(1, 1, A, fs, fs, gs)
    # G drops 2C from s_1 = 0 to the knot, then rises C back to G(A) = 0: 3C = 1 - e^{-A}
    assert sol.C == pytest.approx(0.25, abs=1e-12)
    assert sol.knots[0] == pytest.approx(math.log(2), abs=1e-10)
    assert sol.oscillation_points[0] == pytest.approx(0.0, abs=1e-12)
    check_touches(sol, fs, fs)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_segment_zero_knots(r):
    gs, fs = seg_weights(3.0)
    sol = oscillate_segment(r, 0, 3.0, fs, fs, gs)
    t = np.linspace(0, 3, 3001)
    assert sol.C == pytest.approx(np.max(np.abs(sol.spline(t))), rel=1e-9)
    assert len(sol.oscillation_points) == 1 and sol.n == 0


@pytest.mark.parametrize("r,n", [(1, 2), (2, 1), (2, 2), (3, 2), (2, 3), (4, 2)])
def test_segment_invariants(r, n):
    A = 5.0
    gs, fs = seg_weights(A)
    fm = make_weight("exp:1,0.5,1", domain=fs.domain)
    sol = oscillate_segment(r, n, A, fm, fs, gs)
    assert sol.n == n
    d = np.asarray(sol.diagnostics["deltas"])
    assert np.max(np.abs(d - d.min())) / d.min() < 1e-8
    check_touches(sol, fm, fs)
    hi, lo = envelope_report(sol, fm, fs)
    assert hi <= 1 + 1e-7 and lo >= -1 - 1e-7
    for j in range(r):
        assert abs(sol.spline.eval(j, A)) < 1e-14
    assert len([z for z in sign_changes_and_zeros(sol.spline, 0) if z.sign_change]) == n


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_segment_scaling(lam):
    A = 4.0
    gs, fs = seg_weights(A)
    base = oscillate_segment(2, 2, A, fs, fs, gs)
    scaled_f = make_weight(f"const:{lam}", domain=fs.domain)
    sol = oscillate_segment(2, 2, A, scaled_f, scaled_f, gs)
    assert sol.C == pytest.approx(base.C / lam, rel=1e-9)
    assert np.allclose(sol.knots, base.knots, atol=1e-8)


def test_segment_validation():
    gs, fs = seg_weights(3.0)
    with pytest.raises(ValidationError):
        oscillate_segment(2, -1, 3.0, fs, fs, gs)
    with pytest.raises(ValidationError):
        oscillate_segment(2, 1, math.inf, fs, fs, gs)
    with pytest.raises(InvalidEnvelope):
        oscillate_segment(2, 1, 3.0, fs, fs, gs, offset=2.0)


# --------------------------------------------------------------------------
# half-line


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 4.0])
def test_halfline_r1_closed_form(alpha):
    sol = oscillate_halfline(1, 1, alpha, F_ONE, F_ONE, G_EXP)
    assert sol.C == pytest.approx((1 + alpha) / (2 * (2 + alpha)), abs=1e-12)
    assert sol.knots[0] == pytest.approx(math.log(2 + alpha), abs=1e-10)
    assert sol.oscillation_points[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.oscillation_points[1] == pytest.approx(math.log(2 + alpha), abs=1e-8)
    G_inf = sol.spline(math.inf)
    assert G_inf == pytest.approx(sol.C * (1 - alpha) / (1 + alpha), abs=1e-12)
    # the alpha-condition
    ratio = (sol.C - G_inf) / (sol.C + G_inf)
    assert ratio == pytest.approx(alpha, rel=1e-8)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_halfline_r1_levels(n):
    assert compute_Cn(1, n, 1.0, F_ONE, F_ONE, G_EXP) == pytest.approx(1 / (2 * n + 1), abs=1e-12)


@pytest.mark.parametrize("r,n,alpha", [(2, 1, 1.0), (2, 2, 0.5), (3, 2, 2.0), (2, 3, 1.0), (3, 3, 0.3)])
def test_halfline_invariants(r, n, alpha):
    fm = make_weight("exp:1,1,1")
    fp = make_weight("exp:1,1,1")
    sol = oscillate_halfline(r, n, alpha, fm, fp, G_EXP)
    assert sol.n == n and np.all(np.isfinite(sol.oscillation_points))
    check_touches(sol, fm, fp)
    hi, lo = envelope_report(sol, fm, fp)
    assert hi <= 1 + 1e-7 and lo >= -1 - 1e-7
    G_inf = sol.spline(math.inf)
    a = limit_offset(alpha, fm, fp)
    assert G_inf == pytest.approx(sol.C * a, abs=1e-14)
    ratio = (sol.C * fp.limit_at_infinity - G_inf) / (sol.C * fm.limit_at_infinity + G_inf)
    assert ratio == pytest.approx(alpha, rel=1e-8)
    # knots lie right of the critical points of G (f- = f+)
    crit = [z.t for z in sign_changes_and_zeros(sol.spline, 1, interval=(0.0, math.inf))
            if z.sign_change]
    for t, s in zip(sol.knots, crit):
        assert t >= s - 1e-9


def test_halfline_paths_agree():
    direct = oscillate_halfline(2, 2, 1.0, F_ONE, F_ONE, G_EXP)
    trunc = oscillate_halfline(2, 2, 1.0, F_ONE, F_ONE, G_EXP, method="truncated")
    assert abs(direct.C - trunc.C) < 1e-7
    warm = oscillate_halfline(2, 2, 1.0, F_ONE, F_ONE, G_EXP, initial=oscillate_halfline(
        2, 2, 1.5, F_ONE, F_ONE, G_EXP))
    assert abs(direct.C - warm.C) < 1e-8


def test_cn_comparison():
    alphas = [0.3, 1.0, 4.0]
    for n in (2, 3):
        lower = [compute_Cn(2, n, a, F_ONE, F_ONE, G_EXP) for a in alphas]
        upper = [compute_Cn(2, n - 1, b, F_ONE, F_ONE, G_EXP) for b in alphas]
        assert max(lower) <= min(upper) + 1e-10


def test_halfline_validation():
    with pytest.raises(ValidationError):
        oscillate_halfline(2, 0, 1.0, F_ONE, F_ONE, G_EXP)
    with pytest.raises(ValidationError):
        oscillate_halfline(2, 1, -1.0, F_ONE, F_ONE, G_EXP)
    with pytest.raises(AssumptionsNotVerified):
        oscillate_halfline(2, 1, 1.0, F_ONE, F_ONE, make_weight("power:0,1,1.5"))
    with pytest.raises(ValidationError):
        oscillate_halfline(2, 1, 1.0, F_ONE, F_ONE, G_EXP, method="bogus")


def test_truncation_point():
    calc = build_calculus(G_EXP, 2)
    T = truncation_point(calc)
    assert T == pytest.approx(-math.log(1e-10), rel=1e-9)


# --------------------------------------------------------------------------
# curves


def test_cn_curve_r1():
    grid = [0.5, 1.0, 2.0, 4.0]
    curve = cn_curve(1, 1, grid, F_ONE, F_ONE, G_EXP)
    exact = [(1 + a) / (2 * (2 + a)) for a in grid]
    assert np.allclose(curve.values, [0.3, 1 / 3, 0.375, 5 / 12], atol=1e-15)
    assert np.allclose(curve.values, exact, atol=1e-12)
    assert not curve.warnings


@pytest.mark.parametrize("n", [1, 2, 3])
def test_cn_curve_monotone(n):
    grid = np.geomspace(0.1, 10, 6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        curve = cn_curve(2, n, grid, F_ONE, F_ONE, G_EXP)
    d = np.diff(curve.values)
    assert np.all(d >= -1e-12) if n % 2 else np.all(d <= 1e-12)


def test_cn_curve_parallel_matches_serial(monkeypatch):
    grid = [0.5, 1.0, 2.0]
    serial = cn_curve(2, 2, grid, F_ONE, F_ONE, G_EXP)
    monkeypatch.setenv("OSCISPLINE_THREADS", "3")
    assert worker_count() == 3
    par = cn_curve(2, 2, grid, F_ONE, F_ONE, G_EXP, warm_start=False)
    assert np.allclose(serial.values, par.values, atol=1e-10)


def test_cn_curve_validation():
    with pytest.raises(ValidationError):
        cn_curve(2, 1, [1.0, 0.5], F_ONE, F_ONE, G_EXP)


def test_last_knot_grows_with_alpha():
    grid = np.geomspace(1.0, 1e3, 7)
    curve = cn_curve(2, 1, grid, F_ONE, F_ONE, G_EXP)
    last = np.array([p.solution.knots[-1] for p in curve.points])
    assert np.all(np.diff(last) > 0)
    c3 = cn_curve(2, 3, grid, F_ONE, F_ONE, G_EXP)
    knots = np.array([p.solution.knots for p in c3.points])
    assert np.all(np.diff(knots[:, -1]) > 0)
    # the earlier knots move much less than the last one
    assert np.ptp(knots[:, 0]) < np.ptp(knots[:, -1])
