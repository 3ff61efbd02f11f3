import math

import numpy as np
import pytest
from hypothesis import settings
from scipy.integrate import quad

from oscispline import Segment, make_weight

# fixed seeds keep the property suites reproducible run to run
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def g_exp():
    return make_weight("exp:0,1,1")


@pytest.fixture(scope="session")
def f_one():
    return make_weight("const:1")


def seg_weights(A, g="exp:0,1,1", f="const:1"):
    return make_weight(g, Segment(A)), make_weight(f, Segment(A))


def tail_integral(g, x, k, end=math.inf, points=None):
    """int_x^end (s-x)^(k-1)/(k-1)! g(s) ds by scipy quadrature (oracle).

    ``points`` are breakpoints of g (finite ``end`` only), integrated cell by cell.
    """
    if k == 0:
        return float(g(x))
    fk = math.factorial(k - 1)
    edges = [x] + sorted(p for p in (() if points is None else points) if x < p < end) + [end]
    return sum(quad(lambda s: (s - x) ** (k - 1) / fk * float(g(s)), a, b, epsabs=1e-14, epsrel=1e-13,
                    limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))


def spline_by_quadrature(r, knots, sign, g, x, end, limit=0.0):
    """G(x) = L + (-1)^r int_x^end (s-x)^(r-1)/(r-1)! sigma(s) g(s) ds, cell by cell."""
    pts = [x] + [t for t in knots if t > x] + [end]
    total = 0.0
    fk = math.factorial(r - 1)
    for a, b in zip(pts[:-1], pts[1:]):
        sig = sign * (-1) ** int(np.sum(np.asarray(knots) <= a))
        total += sig * quad(lambda s: (s - x) ** (r - 1) / fk * float(g(s)), a, b, epsabs=1e-14,
                            epsrel=1e-13, limit=200)[0]
    return limit + (-1) ** r * total
