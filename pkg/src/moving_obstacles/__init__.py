"""Accessibility of moving obstacles by time-like curves.

Submodules:

``boundary``
    Parametrised moving curves, time-likeness checks and the Stefanov wall.
``characteristics``
    Null characteristic speeds on the boundary, their integration and the
    orbit analysis of periodic speed fields.
``accessibility``
    Accessibility fans, explicit interior paths and a grid reachability
    oracle for obstacle domains.
``stefanov``
    Drift analysis of the oscillating wall and the inaccessible channel.
``cone_geometry``
    Hyperbolic quadratic forms, time-like vectors and flow constructions.
``cli``
    Batch command line front end writing JSON, CSV and SVG artifacts.
"""

from .errors import (
    ConfigError,
    CurveRejected,
    DegenerateCurve,
    DomainError,
    HypothesisViolation,
    Inaccessible,
    MovingObstacleError,
    NumericalError,
    PropertyViolation,
    StepFailure,
    TimelikeViolation,
    Undetermined,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigError",
    "CurveRejected",
    "DegenerateCurve",
    "DomainError",
    "HypothesisViolation",
    "Inaccessible",
    "MovingObstacleError",
    "NumericalError",
    "PropertyViolation",
    "StepFailure",
    "TimelikeViolation",
    "Undetermined",
]
