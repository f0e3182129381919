"""
Exception hierarchy shared by the models, controllers, analysis and harness.
"""

from __future__ import annotations

from typing import Optional


class BipedLabError(Exception):
    """Root of every error raised by this package."""


class ConfigError(BipedLabError, ValueError):
    """Scenario configuration failed validation."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


# ----------------------------------------------------------------------
# Integration
# ----------------------------------------------------------------------
class IntegrationError(BipedLabError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


# ----------------------------------------------------------------------
# Models
# ----------------------------------------------------------------------
class ModelError(BipedLabError, ValueError):
    pass


class LegNotInContact(ModelError):
    pass


class ZeroLegLength(ModelError):
    pass


class NoContactLegs(ModelError):
    pass


class DynamicsError(BipedLabError):
    pass


class SingularKkt(DynamicsError):
    pass


class SingularImpactMatrix(DynamicsError):
    pass


class SingularTaskInertia(DynamicsError):
    pass


# ----------------------------------------------------------------------
# Controllers
# ----------------------------------------------------------------------
class ControlError(BipedLabError):
    pass


class DegenerateDenominator(ControlError):
    pass


class EmptyFeasibleSet(ControlError):
    pass


class ZeroVector(ControlError):
    pass


class SingularDecoupling(ControlError):
    pass


class ReferenceOutOfRange(ControlError):
    pass


class InvalidMeasurement(BipedLabError, ValueError):
    pass


# ----------------------------------------------------------------------
# Stride analysis
# ----------------------------------------------------------------------
class AnalysisError(BipedLabError):
    pass


class NotStabilizable(AnalysisError):
    pass


class Uncontrollable(AnalysisError):
    pass


class MapFailure(AnalysisError):
    pass


class FellBeforeSection(MapFailure):
    pass


class NoSectionCrossing(MapFailure):
    pass


class NoConvergence(AnalysisError):
    pass


# ----------------------------------------------------------------------
# Harness
# ----------------------------------------------------------------------
class SimulationError(BipedLabError):
    """Closed-loop run aborted; the partial log has already been flushed."""

    def __init__(self, message: str, partial_log: Optional[str] = None):
        self.partial_log = partial_log
        super().__init__(message)
