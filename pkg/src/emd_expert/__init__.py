"""Surrogate-assisted preliminary design for wound-rotor synchronous generators."""

from .errors import EmdError, EmdWarning
from .wrsg import (Boundaries, DependentParams, GeometryVars, OracleConstants, Performance,
                   ValidityReport, derive_dependent, evaluate_performance, power_density,
                   validate)

__version__ = "0.1.0"
