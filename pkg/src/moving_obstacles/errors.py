"""Exception hierarchy shared by all modules.

The CLI maps the three top-level families onto exit codes:
``ConfigError`` -> 2, ``NumericalError`` -> 3, ``PropertyViolation`` -> 4.
"""

from __future__ import annotations

from typing import Any


class MovingObstacleError(Exception):
    """Base class. ``payload`` carries structured diagnostics for reports."""

    def __init__(self, message: str, **payload: Any) -> None:
        super().__init__(message)
        self.payload = payload

    def to_dict(self) -> dict:
        out = {"error": type(self).__name__, "message": str(self)}
        for key, value in self.payload.items():
            out[key] = _jsonable(value)
        return out


class ConfigError(MovingObstacleError, ValueError):
    """Invalid configuration or out-of-bounds numeric knob."""


class NumericalError(MovingObstacleError):
    """A computation could not be completed to the requested tolerance."""


class PropertyViolation(MovingObstacleError):
    """A mathematical property that should hold was found to fail."""


class DomainError(NumericalError, ValueError):
    """A curve parameter lies outside the curve's sigma domain."""


class DegenerateCurve(PropertyViolation):
    """The tangent x_sigma vanishes (or nearly so)."""


class TimelikeViolation(PropertyViolation):
    """The boundary fails to be time-like at some evaluated point."""


class CurveRejected(PropertyViolation):
    """Uniform non-degeneracy or time-likeness constants are not positive."""


class StepFailure(NumericalError):
    """The integrator could not meet its tolerance."""


class Undetermined(NumericalError):
    """Orbit classification was inconclusive within the horizon."""


class HypothesisViolation(PropertyViolation):
    """A named precondition of a flow or map construction fails."""


class Inaccessible(NumericalError):
    """No accessibility certificate could be produced for a point."""


def _jsonable(value: Any) -> Any:
    try:
        import numpy as np
    except ImportError:  # pragma: no cover
        np = None
    if np is not None:
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, np.generic):
            return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value
