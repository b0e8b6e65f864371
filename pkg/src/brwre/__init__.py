"""Branching random walks in i.i.d. random environment on Z^d.

Exact rational model objects and certificates (:mod:`brwre.model`,
:mod:`brwre.criteria`), keyed lazy environments, a batched population
simulator, the coupled hitting-time construction, induced walks and Monte
Carlo estimators.
"""

from .model import (
    EnvironmentLaw,
    ModelValidationError,
    OffspringVector,
    SiteLaw,
    StepSet,
    conditions,
    load_model,
    validate_model,
)
from .environment import EnvironmentPatch, EnvironmentRealization
from .simulator import SimConfig, run
from .criteria import classify

__all__ = [
    "EnvironmentLaw", "ModelValidationError", "OffspringVector", "SiteLaw", "StepSet", "conditions",
    "load_model", "validate_model", "EnvironmentPatch", "EnvironmentRealization", "SimConfig", "run", "classify",
]
__version__ = "0.1.0"
