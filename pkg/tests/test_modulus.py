import math

import numpy as np
import pytest
from scipy.optimize import minimize

from oscispline import (HALF_LINE, AssumptionsNotVerified, NormInverter, OutOfRange, PreconditionViolated,
                        Regime, ValidationError, c0_witness, compute_C0, least_deviating_primitive,
                        make_weight, omega, omega_curve, spline_with_norm, weighted_norm)
from oscispline.modulus import saturated

G_EXP = make_weight("exp:0,1,1")
F_ONE = make_weight("const:1")


@pytest.fixture(scope="module")
def inv2():
    return NormInverter(2, F_ONE, G_EXP)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_c0_exp(r):
    C0, a = compute_C0(r, F_ONE, F_ONE, G_EXP)
    assert C0 == pytest.approx(0.5, abs=1e-10)
    assert a == pytest.approx((-1) ** (r + 1) / 2, abs=1e-10)


def test_c0_against_grid_search():
    f = make_weight("exp:1,1,2")
    C0, a = compute_C0(2, f, f, G_EXP)
    t = np.concatenate([np.linspace(0, 40, 40001)])
    P = np.exp(-t)

    def norm(c):
        x = P + c
        return max(np.max(np.maximum(x, 0) / f(t)), np.max(np.maximum(-x, 0) / f(t)), abs(c))

    cs = np.linspace(-1, 1, 20001)
    vals = [norm(c) for c in cs]
    i = int(np.argmin(vals))
    assert C0 == pytest.approx(vals[i], abs=1e-4)
    assert a == pytest.approx(cs[i], abs=2e-4)


def test_c0_relaxed_envelope():
    C0, _ = compute_C0(2, F_ONE, F_ONE, G_EXP)
    C0_relaxed, _ = compute_C0(2, F_ONE, make_weight("const:2"), G_EXP)
    assert C0_relaxed <= C0 + 1e-12
    assert C0_relaxed == pytest.approx(1 / 3, abs=1e-10)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_c0_witness_touches_both_sides(r):
    w = c0_witness(r, F_ONE, F_ONE, G_EXP)
    assert w.n == 0 and w.C == pytest.approx(0.5, abs=1e-10)
    vals = [w.spline(s) for s in w.oscillation_points]
    assert sorted(np.sign(vals)) == [-1.0, 1.0]
    assert np.allclose(np.abs(vals), 0.5, atol=1e-10)


def test_saturation_rule():
    assert saturated(0.5, 0.5) and saturated(0.5 - 1e-12, 0.5) and not saturated(0.49, 0.5)


def test_spline_with_norm_r1():
    sol = spline_with_norm(1, 1 / 3, F_ONE, G_EXP)
    assert sol.n == 1
    assert sol.alpha == pytest.approx(1.0, abs=1e-8)
    assert sol.knots[0] == pytest.approx(math.log(3), abs=1e-8)


def test_spline_with_norm_moves_to_n2():
    # C_1 ranges over (1/4, 1/2) for r = 1; slightly below it needs two knots
    sol = spline_with_norm(1, 0.24, F_ONE, G_EXP)
    assert sol.n == 2 and sol.C == pytest.approx(0.24, abs=1e-10)


def test_spline_with_norm_at_c0():
    sol = spline_with_norm(2, 0.5, F_ONE, G_EXP)
    assert sol.n == 0
    assert weighted_norm(sol.spline, F_ONE, F_ONE, domain=HALF_LINE, limit=sol.spline(math.inf)) == \
        pytest.approx(0.5, abs=1e-10)


def test_spline_with_norm_errors(inv2):
    with pytest.raises(OutOfRange):
        spline_with_norm(2, 0.6, F_ONE, G_EXP, inverter=inv2)
    with pytest.raises(ValidationError):
        spline_with_norm(2, -0.1, F_ONE, G_EXP, inverter=inv2)
    with pytest.raises(AssumptionsNotVerified):
        NormInverter(2, make_weight("exp:1,1,0.5"), G_EXP)


@pytest.mark.parametrize("C", [0.2, 0.3, 0.45])
def test_round_trip(inv2, C):
    sol = spline_with_norm(2, C, F_ONE, G_EXP, inverter=inv2)
    norm = weighted_norm(sol.spline, F_ONE, F_ONE, domain=HALF_LINE, limit=sol.spline(math.inf))
    assert norm == pytest.approx(C, abs=1e-7)


def test_omega_saturated(inv2):
    for delta in (0.5, 0.75, 2.0):
        res = omega(2, 1, delta, F_ONE, G_EXP, inverter=inv2)
        assert res.regime is Regime.SATURATED
        assert res.omega_value == pytest.approx(1.0, abs=1e-12)
    res = omega(3, 2, 0.9, F_ONE, G_EXP)
    assert res.omega_value == pytest.approx(1.0, abs=1e-12)


def test_omega_spline_regime(inv2):
    res = omega(2, 1, 0.3, F_ONE, G_EXP, inverter=inv2)
    assert res.regime is Regime.SPLINE and not res.truncated
    G = res.witness.spline
    assert res.omega_value == pytest.approx(abs(G.eval(1, 0.0)), abs=0)
    assert weighted_norm(G, F_ONE, F_ONE, domain=HALF_LINE, limit=G(math.inf)) == pytest.approx(0.3, abs=1e-7)
    # derivative bound at the origin
    assert res.omega_value <= 1.0
    js = res.to_json()
    assert js["regime"] == "spline" and js["n"] == res.n


def test_omega_monotone(inv2):
    deltas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    vals = [omega(2, 1, d, F_ONE, G_EXP, inverter=inv2).omega_value for d in deltas]
    assert np.all(np.diff(vals) >= -1e-10)
    assert max(vals) <= 1.0 + 1e-12


def test_omega_curve_matches_pointwise(inv2):
    curve = omega_curve(2, 1, [0.25, 0.6], F_ONE, G_EXP)
    assert curve[0].omega_value == pytest.approx(omega(2, 1, 0.25, F_ONE, G_EXP, inverter=inv2).omega_value,
                                                 abs=1e-9)
    assert curve[1].regime is Regime.SATURATED


def test_omega_preconditions(inv2):
    with pytest.raises(PreconditionViolated):
        omega(1, 1, 0.3, F_ONE, G_EXP)
    with pytest.raises(PreconditionViolated):
        omega(2, 2, 0.3, F_ONE, G_EXP, inverter=inv2)
    with pytest.raises(ValidationError):
        omega(2, 1, 0.0, F_ONE, G_EXP, inverter=inv2)


# --------------------------------------------------------------------------
# least deviating primitive


@pytest.mark.parametrize("a_end", [0.5, 1.0, 3.0, 40.0])
def test_phi_r1_closed_form(a_end):
    fit = least_deviating_primitive(1, a_end, F_ONE, G_EXP)
    assert fit.phi == pytest.approx((1 - math.exp(-a_end)) / 2, abs=1e-9)
    assert fit.lower <= fit.phi + 1e-12


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_phi_scaling(lam):
    base = least_deviating_primitive(2, 3.0, F_ONE, G_EXP).phi
    scaled = least_deviating_primitive(2, 3.0, make_weight(f"const:{lam}"), G_EXP).phi
    assert scaled == pytest.approx(base / lam, rel=1e-8)


def test_phi_r2_against_direct_minimax():
    a_end = 3.0
    fit = least_deviating_primitive(2, a_end, F_ONE, G_EXP)
    t = np.linspace(0, a_end, 20001)
    P = np.exp(-t) - math.exp(-a_end) * (1 + a_end - t)  # P_2 with zero data at a_end

    def obj(c):
        return np.max(np.abs(P + c[0] + c[1] * t))

    best = min((minimize(obj, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14,
                                                                  "maxiter": 4000})
                for x0 in ([0, 0], [-0.5, 0.2], [-0.6, 0.25])), key=lambda r: r.fun)
    assert fit.phi == pytest.approx(best.fun, abs=1e-7)
    assert obj(fit.coefficients) == pytest.approx(fit.phi, abs=1e-9)


def test_phi_monotone_in_a_end():
    vals = [least_deviating_primitive(2, a, F_ONE, G_EXP).phi for a in (0.5, 1, 2, 4, 8)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_phi_validation():
    with pytest.raises(ValidationError):
        least_deviating_primitive(0, 1.0, F_ONE, G_EXP)
    with pytest.raises(ValidationError):
        least_deviating_primitive(1, -1.0, F_ONE, G_EXP)
