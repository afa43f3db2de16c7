from .pipeline import VerifyParams, verify_pair
from .ransac import (
    InlierSet,
    canonical_fundamental,
    eight_point,
    ransac_fundamental,
    required_iterations,
    symmetric_epipolar_distance,
)
from .sao import (
    NeighborOrder,
    SaoResult,
    SaoScore,
    angular_order,
    ced,
    ced_batch,
    knn_from_delaunay,
    levenshtein,
    neighbor_orders,
    sao_filter,
    sao_scores,
)
from .synthetic import TwoViewSample, two_view_sample

__all__ = [
    "InlierSet",
    "NeighborOrder",
    "SaoResult",
    "SaoScore",
    "TwoViewSample",
    "VerifyParams",
    "angular_order",
    "canonical_fundamental",
    "ced",
    "ced_batch",
    "eight_point",
    "knn_from_delaunay",
    "levenshtein",
    "neighbor_orders",
    "ransac_fundamental",
    "required_iterations",
    "sao_filter",
    "sao_scores",
    "symmetric_epipolar_distance",
    "two_view_sample",
    "verify_pair",
]
