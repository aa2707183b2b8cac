"""Extremal discs in convex bodies of C^n: Kobayashi metric brackets, dual
certificates and holomorphic retractions onto complex geodesics."""

from .disc_space import DiscPoly, Divisor, JetData
from .dual_certificate import certify, solve_dual
from .gauge import ball, complex_ellipsoid, oracle_body, polydisc, polyhedral
from .metrics import (caratheodory_lower, kobayashi_distance, kobayashi_metric, poincare_distance,
                      verify_ck_equality)
from .primal_solver import solve_primal

__all__ = [
    "DiscPoly", "Divisor", "JetData", "ball", "caratheodory_lower", "certify", "complex_ellipsoid",
    "kobayashi_distance", "kobayashi_metric", "oracle_body", "poincare_distance", "polydisc",
    "polyhedral", "solve_dual", "solve_primal", "verify_ck_equality",
]
