"""Numerical holonomy of the affine (Cartan) connection of Riemannian charts."""

from .affine import (
    AffineFrame,
    AffineIsometry,
    FixedPointResult,
    frame_to_product,
    compactness_verdict,
    compose,
    frame_right_action,
    product_right_action,
    solve_fixed_point,
)
from .geometry import MetricChart, christoffels, curvature_op, geodesic, ricci_direction
from .tolerances import Tolerances

__all__ = [
    "AffineFrame",
    "AffineIsometry",
    "FixedPointResult",
    "MetricChart",
    "Tolerances",
    "christoffels",
    "frame_to_product",
    "compactness_verdict",
    "compose",
    "curvature_op",
    "frame_right_action",
    "geodesic",
    "product_right_action",
    "ricci_direction",
    "solve_fixed_point",
]

__version__ = "0.1.0"
