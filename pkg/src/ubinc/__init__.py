"""Network-calculus latency bounds for device -> base station -> cloud pipelines."""

from .curves import (
    Curve,
    RateLatency,
    TokenBucket,
    TSpec,
    as_curve,
    delta0,
    h_dev,
    min_plus_conv,
    min_plus_deconv,
    pointwise_min,
    v_dev,
)
from .errors import (
    ConfigError,
    CurveError,
    DomainError,
    InstabilityError,
    QuantileCapError,
    SnrRangeError,
    TopologyError,
)

__all__ = [
    "Curve",
    "RateLatency",
    "TokenBucket",
    "TSpec",
    "as_curve",
    "delta0",
    "h_dev",
    "min_plus_conv",
    "min_plus_deconv",
    "pointwise_min",
    "v_dev",
    "ConfigError",
    "CurveError",
    "DomainError",
    "InstabilityError",
    "QuantileCapError",
    "SnrRangeError",
    "TopologyError",
]
