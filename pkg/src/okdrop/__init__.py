"""Droplet-regime Ohta-Kawasaki energetics on a flat torus."""
from .errors import (
    ConsistencyError,
    ConstraintError,
    ConstructionError,
    DomainError,
    GeometryError,
    LiftingError,
    OkdropError,
    ParameterError,
    RelaxationError,
    SingularityError,
    StepSizeError,
)
from .torus import TorusParams

__version__ = "0.1.0"

from .droplets import DropletConfig, disk, disk_config, polygon
from .green import build_green
from .sharp import sharp_energy
