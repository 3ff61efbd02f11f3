"""Adaptive composite Gauss-Legendre quadrature on finite and infinite ranges."""

import math

import numpy as np

from .errors import Divergent

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(15)


def gl15(fn, a, b):
    """One 15-point Gauss-Legendre panel on [a, b]; ``fn`` must be vectorised."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(_WEIGHTS, fn(mid + half * _NODES)))


def adaptive_quad(fn, a, b, tol=1e-12, max_depth=48):
    """Integrate ``fn`` over [a, b] to absolute tolerance ``tol``.

    A panel is accepted once its 15-point value agrees with the sum over its
    two halves; otherwise both halves are processed with half the tolerance.
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_quad(fn, b, a, tol, max_depth)
    total = 0.0
    stack = [(a, b, gl15(fn, a, b), tol, 0)]
    while stack:
        lo, hi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = gl15(fn, lo, mid)
        right = gl15(fn, mid, hi)
        if abs(left + right - whole) <= eps or depth >= max_depth or mid in (lo, hi):
            total += left + right
        else:
            stack.append((lo, mid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, right, 0.5 * eps, depth + 1))
    return total


def tail_quad(fn, a, tol=1e-12, first=1.0, growth=2.0, stop=1e-14, max_panels=400):
    """Integrate ``fn`` over [a, inf) with geometrically growing panels.

    Stops once two consecutive panels contribute less than ``stop`` relative
    to the running total (or exactly nothing).  Raises
    :class:`Divergent` when the panels keep contributing.
    """
    total = 0.0
    lo, width, quiet = a, first, 0
    for _ in range(max_panels):
        hi = lo + width
        part = adaptive_quad(fn, lo, hi, tol)
        if not math.isfinite(part):
            raise Divergent(f"tail integrand not finite beyond t={lo:g}")
        total += part
        if abs(part) <= stop * abs(total) or part == 0.0:
            quiet += 1
            if quiet >= 2:
                return total
        else:
            quiet = 0
        lo, width = hi, width * growth
        if not math.isfinite(hi):
            break
    raise Divergent(f"tail integral from {a:g} did not converge")
