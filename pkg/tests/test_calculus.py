import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tail_integral
from oscispline import Divergent, build_calculus, envelope_bound, eval_Pk, make_weight, segment_calculus
from oscispline.calculus import tail_constants_by_definition


def test_exp_tail_constants(g_exp):
    calc = build_calculus(g_exp, 3)
    assert calc.A == pytest.approx((1.0, 1.0, 1.0), abs=1e-14)
    # the recursive definition by plain quadrature (cancellation limits accuracy)
    assert tail_constants_by_definition(g_exp, 3) == pytest.approx([1.0, 1.0, 1.0], abs=1e-6)


def test_exp_primitives(g_exp):
    calc = build_calculus(g_exp, 4)
    t = np.linspace(0, 10, 201)
    assert np.allclose(calc.gk(1, t), 1 - np.exp(-t), atol=1e-14)
    for k in range(5):
        assert np.allclose(calc.P(k, t), (-1) ** k * np.exp(-t), atol=1e-14)
    assert eval_Pk(calc, 1, 0.0) == pytest.approx(-1.0)
    assert eval_Pk(calc, 2, math.log(2)) == pytest.approx(0.5)
    assert eval_Pk(calc, 0, 1.3) == pytest.approx(g_exp(1.3))


@pytest.mark.parametrize("spec", ["exp:0,2,0.7", "power:0,1,5.5", "exp:0,1,3"])
def test_numeric_table_matches_closed_form(spec):
    g = make_weight(spec)
    exact = build_calculus(g, 3)
    table = build_calculus(g, 3, force_numeric=True)
    assert exact.closed_form and not table.closed_form
    t = np.linspace(0, 12, 97)
    for k in range(4):
        assert np.max(np.abs(exact.q(k, t) - table.q(k, t))) < 1e-10


@pytest.mark.parametrize("spec", ["power:0,1,4.5", "exp:0,1,0.5"])
def test_primitives_against_quadrature(spec):
    g = make_weight(spec)
    calc = build_calculus(g, 3, force_numeric=True)
    for x in (0.0, 0.7, 3.0, 9.0):
        for k in range(1, 4):
            assert calc.q(k, x) == pytest.approx(tail_integral(g, x, k), rel=1e-9, abs=1e-13)


def test_tabulated_g(tmp_path):
    t = np.linspace(0, 60, 601)
    g = make_weight({"family": "tab", "t": list(t), "w": list(np.exp(-t))})
    # constant extrapolation beyond the table breaks th0 on the half-line
    with pytest.raises(Divergent):
        build_calculus(g, 2)
    seg = segment_calculus(g, 2, 5.0)
    assert seg.q(2, 1.0) == pytest.approx(tail_integral(g, 1.0, 2, end=5.0, points=t), rel=1e-9)


def test_divergent_weight():
    with pytest.raises(Divergent):
        build_calculus(make_weight("power:0,1,1.5"), 2)


def test_segment_calculus_closed_form(g_exp):
    calc = segment_calculus(g_exp, 3, 2.5)
    for x in (0.0, 1.0, 2.4):
        for k in range(4):
            assert calc.q(k, x) == pytest.approx(tail_integral(g_exp, x, k, end=2.5), rel=1e-12, abs=1e-15)
    assert calc.q(2, 2.5) == 0.0


def test_envelope_bound(g_exp):
    calc = build_calculus(g_exp, 2)
    assert envelope_bound(calc, 0.0, 0.0) == pytest.approx(1.0)
    assert envelope_bound(calc, 0.3, 50.0) == pytest.approx(0.3, abs=1e-20)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.01, 15), rate=st.floats(0.3, 3), k=st.integers(1, 4))
def test_derivative_identity(t, rate, k):
    """P_k' = P_{k-1}, checked by central differences."""
    calc = build_calculus(make_weight(f"exp:0,1,{rate}"), 4)
    h = 1e-4
    fd = (calc.P(k, t + h) - calc.P(k, t - h)) / (2 * h)
    assert fd == pytest.approx(calc.P(k - 1, t), rel=1e-6, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(p=st.floats(4.2, 8), k=st.integers(1, 3))
def test_power_sign_and_monotone(p, k):
    calc = build_calculus(make_weight(f"power:0,1,{p}"), 3)
    t = np.linspace(0, 30, 301)
    vals = calc.P(k, t)
    assert np.all(np.sign(vals) == (-1) ** k)
    assert np.all(np.diff(np.abs(vals)) < 0)
    g1 = calc.gk(k, t)
    assert abs(g1[0]) < 1e-14
    assert np.all(np.diff(g1) >= -1e-14)
