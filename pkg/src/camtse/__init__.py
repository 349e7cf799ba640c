"""Traffic state estimation on a road link from a moving camera.

Pipeline: synthetic or ingested trajectories -> Edie density matrices ->
fundamental-diagram calibration -> boundary estimation -> evaluation.
"""
from .core import (BoundaryVector, ConfigurationError, DensityMatrix, DomainError, FDParams, GridSpec,
                   Quartet, SpaceTimeDiagram, Trajectory, ctm_run, ctm_step, flow)

__version__ = "0.1.0"

__all__ = [
    "BoundaryVector", "ConfigurationError", "DensityMatrix", "DomainError", "FDParams", "GridSpec",
    "Quartet", "SpaceTimeDiagram", "Trajectory", "ctm_run", "ctm_step", "flow",
]
