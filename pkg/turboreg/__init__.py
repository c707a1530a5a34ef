from .exceptions import DegenerateConfiguration, InputError, NoHypothesis, SizingError, TurboRegError
from .manager import RegistrationManager
from .schemas import (
    CorrespondenceSet,
    EstimatorParams,
    GraphMode,
    RegistrationResult,
    RigidTransform,
    SuccessCriteria,
    SynthConfig,
)
from .solver import estimate, ransac_baseline

__all__ = [
    "CorrespondenceSet",
    "DegenerateConfiguration",
    "EstimatorParams",
    "GraphMode",
    "InputError",
    "NoHypothesis",
    "RegistrationManager",
    "RegistrationResult",
    "RigidTransform",
    "SizingError",
    "SuccessCriteria",
    "SynthConfig",
    "TurboRegError",
    "estimate",
    "ransac_baseline",
]
