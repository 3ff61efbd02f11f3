import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscispline import (HALF_LINE, DomainMismatch, NonPositive, NotFinite, Segment, ValidationError,
                        check_assumptions, make_weight, weighted_norm)
from oscispline.weights import sup_with_argmax


def test_make_weight_exp():
    w = make_weight("exp:0,1,1")
    t = np.linspace(0, 5, 11)
    assert np.allclose(w(t), np.exp(-t), rtol=0, atol=1e-15)
    assert w.limit_at_infinity == 0.0
    assert w.monotone_nonincreasing


def test_make_weight_const_and_shifted_exp():
    one = make_weight("const:1")
    assert one(3.0) == 1.0 and one.limit_at_infinity == 1.0
    w = make_weight({"family": "exp", "base": 1, "amplitude": 1, "rate": 2})
    assert w(0.0) == 2.0
    assert w(1.5) == pytest.approx(1 + math.exp(-3), abs=1e-15)
    assert w.limit_at_infinity == 1.0


def test_make_weight_power_and_json_roundtrip():
    w = make_weight("power:0.5,2,3")
    assert w(1.0) == pytest.approx(0.5 + 2 / 8)
    assert make_weight(w.to_json())(2.0) == pytest.approx(w(2.0))


@pytest.mark.parametrize("spec", ["const:0", "const:-2", "exp:-1,1,1", "exp:0,0,1", "power:0,-1,2"])
def test_make_weight_rejects_nonpositive(spec):
    with pytest.raises(NonPositive):
        make_weight(spec)


def test_make_weight_bad_specs():
    with pytest.raises(ValidationError):
        make_weight("spline:1,2")
    with pytest.raises(ValidationError):
        make_weight("exp:1,2")
    with pytest.raises(ValidationError):
        make_weight("exp:0,1,0")


def test_tabulated_weight(tmp_path):
    path = tmp_path / "w.csv"
    t = np.linspace(0, 4, 9)
    path.write_text("t,w\n" + "\n".join(f"{a},{1 + math.exp(-a)}" for a in t))
    w = make_weight(f"tab:{path}")
    assert w(t[3]) == pytest.approx(1 + math.exp(-t[3]), abs=1e-15)
    assert w(100.0) == pytest.approx(1 + math.exp(-4))
    grid = np.linspace(0, 4, 400)
    assert np.all(np.diff(w(grid)) <= 1e-15)  # monotone interpolation
    assert w.monotone_nonincreasing


def test_check_assumptions_examples(g_exp, f_one):
    rep = check_assumptions(f_one, f_one, g_exp, 2)
    assert rep.all_pass and not rep.heuristic
    rep = check_assumptions(f_one, f_one, make_weight("power:0,1,1"), 2)
    assert not rep.th0
    f_dec = make_weight("exp:0,1,1")
    rep = check_assumptions(f_dec, f_dec, g_exp, 2)
    assert not rep.f_limit_positive


@pytest.mark.parametrize("r", range(1, 7))
def test_exp_g_passes_th0_th1(r, f_one, g_exp):
    rep = check_assumptions(f_one, f_one, g_exp, r)
    assert rep.th0 and rep.th1


def test_check_assumptions_power_moments(f_one):
    g = make_weight("power:0,1,3.5")
    # int t^k g finite iff k < 2.5
    assert check_assumptions(f_one, f_one, g, 3).th1
    assert not check_assumptions(f_one, f_one, g, 4).th1


def test_check_assumptions_liminf():
    g = make_weight("exp:0,1,1")
    fast = make_weight("exp:1,1,2")   # f - f(inf) = e^{-2t} decays faster than P_r
    slow = make_weight("exp:1,1,0.5")
    assert check_assumptions(fast, fast, g, 2).liminf
    assert not check_assumptions(slow, slow, g, 2).liminf


def test_check_assumptions_domain_mismatch(g_exp):
    with pytest.raises(DomainMismatch):
        check_assumptions(make_weight("const:1", Segment(2.0)), make_weight("const:1"), g_exp, 1)


def test_weighted_norm_envelope_touch(f_one):
    f = make_weight("exp:1,1,1")
    fm = make_weight("exp:0.5,1,2")
    assert weighted_norm(f, fm, f, domain=HALF_LINE) == pytest.approx(1.0, abs=1e-12)
    assert weighted_norm(lambda t: -fm(t), fm, f, domain=HALF_LINE) == pytest.approx(1.0, abs=1e-12)


def test_weighted_norm_limit_point(f_one):
    x = lambda t: 0.5 - np.exp(-np.asarray(t))  # noqa: E731
    val = weighted_norm(x, f_one, f_one, domain=HALF_LINE, limit=0.5)
    assert val == pytest.approx(0.5, abs=1e-12)
    v, where = sup_with_argmax(x, f_one, f_one, math.inf, limit=0.5)
    assert v == pytest.approx(0.5, abs=1e-12)
    y = lambda t: 0.7 - np.exp(-np.asarray(t))  # noqa: E731
    v, where = sup_with_argmax(y, f_one, f_one, math.inf, limit=0.7)
    assert v == pytest.approx(0.7, abs=1e-12) and where > 30.0


def test_weighted_norm_sampled_and_overflow(f_one):
    grid = np.linspace(0, 1, 5)
    assert weighted_norm(np.array([0, 0.2, -0.7, 0.1, 0]), f_one, breakpoints=grid) == pytest.approx(0.7)
    with pytest.raises(NotFinite):
        weighted_norm(lambda t: np.full_like(np.asarray(t, float), 1e305), f_one, domain=Segment(1.0))


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.01, 100), c=st.floats(-2, 2), rate=st.floats(0.2, 3))
def test_weighted_norm_homogeneous(lam, c, rate):
    fm = make_weight("exp:1,0.5,1")
    fp = make_weight("const:2")
    x = lambda t: c + np.cos(rate * np.asarray(t)) * np.exp(-np.asarray(t))  # noqa: E731
    a = weighted_norm(x, fm, fp, domain=Segment(6.0))
    b = weighted_norm(lambda t: lam * x(t), fm, fp, domain=Segment(6.0))
    assert b == pytest.approx(lam * a, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-2, 2), rate=st.floats(0.2, 3))
def test_weighted_norm_symmetric_paths_agree(c, rate):
    f = make_weight("exp:1,1,0.7")
    x = lambda t: c * np.sin(rate * np.asarray(t))  # noqa: E731
    grid = np.linspace(0, 5, 20001)
    direct = np.max(np.abs(x(grid)) / f(grid))
    assert weighted_norm(x, f, domain=Segment(5.0)) == pytest.approx(direct, rel=1e-7, abs=1e-15)


def test_weighted_norm_zero(f_one):
    assert weighted_norm(lambda t: np.zeros_like(np.asarray(t, float)), f_one, domain=Segment(3.0)) == 0.0
