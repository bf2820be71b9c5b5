"""Periodic billiard trajectories in strictly convex bodies as critical
points of the length functional, with their Morse index iteration theory."""

from .configuration import (
    Configuration,
    CriticalOrbit,
    canonicalize,
    distinct,
    find_critical,
    gradient,
    iterate,
    length,
    make_seeds,
    reflow_deviation,
)
from .errors import BilliardError
from .geometry import (
    ConvexBody,
    billiard_flow,
    body_from_spec,
    circle,
    ellipsoid,
    quartic,
    register_body,
    sphere,
    superellipsoid,
)
from .spectral import (
    assemble_hessian,
    bott_split,
    index_triple,
    iteration_report,
    mean_index,
    monodromy,
    semicontinuity_scan,
    twisted_hessian,
)
from .topology import bangert_lift, betti_polynomial, equivariant_polynomial

__version__ = "0.1.0"

__all__ = [
    "BilliardError",
    "bangert_lift",
    "betti_polynomial",
    "equivariant_polynomial",
    "Configuration",
    "CriticalOrbit",
    "canonicalize",
    "distinct",
    "find_critical",
    "gradient",
    "iterate",
    "length",
    "make_seeds",
    "reflow_deviation",
    "ConvexBody",
    "billiard_flow",
    "body_from_spec",
    "circle",
    "ellipsoid",
    "quartic",
    "register_body",
    "sphere",
    "superellipsoid",
    "assemble_hessian",
    "bott_split",
    "index_triple",
    "iteration_report",
    "mean_index",
    "monodromy",
    "semicontinuity_scan",
    "twisted_hessian",
]
