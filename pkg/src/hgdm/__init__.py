"""Score-based graph diffusion on the Poincare ball."""

from .geom import BallPoint, DomainError, PoincareBall, TangentVector, project_to_ball
from .hwn import HwnParams
from .sde import NoiseSchedule, PerturbedSample

__all__ = [
    "BallPoint",
    "DomainError",
    "HwnParams",
    "NoiseSchedule",
    "PerturbedSample",
    "PoincareBall",
    "TangentVector",
    "project_to_ball",
]

__version__ = "0.1.0"
