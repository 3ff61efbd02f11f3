"""Maximally oscillating perfect g-splines, extremal constants C_n(alpha), C_0
and the modulus of continuity of differentiation on weighted classes."""

__version__ = "0.1.0"

from .calculus import GCalculus, Primitives, build_calculus, envelope_bound, eval_Pk, segment_calculus
from .errors import (AssumptionsNotVerified, Divergent, DomainMismatch, InvalidEnvelope, KnotsNotSorted,
                     KnotsOutOfRange, MissingLimit, NoConvergence, NonPositive, NotFinite, NumericalError,
                     OscisplineError, OutOfDomain, OutOfRange, PreconditionViolated, ValidationError,
                     ZerosTooClose)
from .modulus import (ModulusResult, NormInverter, Regime, c0_witness, compute_C0, least_deviating_primitive,
                      omega, omega_curve, spline_with_norm)
from .oracle import BruteForceConfig, agreement_suite, brute_omega_lower_bound, brute_oscillation
from .oscillate import OscillationSolution, cn_curve, compute_Cn, oscillate_halfline, oscillate_segment
from .spline import (PerfectGSpline, eval_spline, make_halfline_spline, make_segment_spline,
                     sign_changes_and_zeros)
from .weights import (HALF_LINE, AssumptionReport, HalfLine, Segment, WeightFunction, check_assumptions,
                      make_weight, weighted_norm)
from .zerofit import ZeroFitProblem, fit_knots, knot_sensitivity

__all__ = [name for name in dir() if not name.startswith("_")]
