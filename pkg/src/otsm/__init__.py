"""Optimal-transport surrogate modeling of scalar fields and geometries
represented as clouds of identical Gaussian particles."""

__version__ = "0.1.0"

from .grids import FieldSample, Grid, reference_grid
from .splat import ParticleCloud, decompose, evaluate_cloud, normalize_field
from .matching import MatchedEnsemble, match_multi, match_pair
from .geometry import BarycentricWeights, GeometryDomain, barycenter
from .surrogate import (ModelContainer, TrainSettings, infer_cross_geometry,
                        infer_fixed_geometry, relative_error, train)

__all__ = [
    "FieldSample", "Grid", "reference_grid",
    "ParticleCloud", "decompose", "evaluate_cloud", "normalize_field",
    "MatchedEnsemble", "match_multi", "match_pair",
    "BarycentricWeights", "GeometryDomain", "barycenter",
    "ModelContainer", "TrainSettings", "infer_cross_geometry",
    "infer_fixed_geometry", "relative_error", "train",
    "__version__",
]
