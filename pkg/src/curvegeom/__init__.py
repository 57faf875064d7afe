"""Monte Carlo and quadrature tools for the geometry of Brownian curves.

Counter-based random streams, pinned path decompositions, small-ball hitting
chains, self-intersection local times, bounded-cost transport and a
four-attractor interacting particle flow, plus a JSON-configured runner.
"""

from .estimate import Estimate, combined_se
from .paths import BrownianPath, PinSet, TimeGrid, decompose, residual_covariance, sample_path
from .polyline import PolygonalLine, TypeSpec, match_type
from .transport import EmpiricalMeasure, bounded_cost, rho

__all__ = [
    "BrownianPath", "EmpiricalMeasure", "Estimate", "PinSet", "PolygonalLine", "TimeGrid", "TypeSpec",
    "bounded_cost", "combined_se", "decompose", "match_type", "residual_covariance", "rho", "sample_path",
]
