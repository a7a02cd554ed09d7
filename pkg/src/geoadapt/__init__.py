"""Geometry-aware domain adaptation and fairness primitives with verifiable oracles."""

from . import crossview, directed, faircluster, fairmetrics, flows, grassmann, linalg, synthdata
from .errors import (
    ConfigError,
    DegenerateNormError,
    DimensionError,
    ExhaustionError,
    GeoAdaptError,
    InvalidInputError,
    InvalidStateError,
    NumericalFailure,
    RankDeficiencyError,
    SchemaError,
    SizeLimitError,
)
from .grassmann import GeodesicKernel, Subspace, geodesic_flow_kernel, principal_system

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateNormError",
    "DimensionError",
    "ExhaustionError",
    "GeoAdaptError",
    "GeodesicKernel",
    "InvalidInputError",
    "InvalidStateError",
    "NumericalFailure",
    "RankDeficiencyError",
    "SchemaError",
    "SizeLimitError",
    "Subspace",
    "crossview",
    "directed",
    "faircluster",
    "fairmetrics",
    "flows",
    "geodesic_flow_kernel",
    "grassmann",
    "linalg",
    "principal_system",
    "synthdata",
]
