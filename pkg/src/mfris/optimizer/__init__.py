"""Perfect-CSI joint beamforming and surface optimization."""
from .ao import AOResult, alternating_optimize, initialize
from .model import BeamformerState, Instance, Settings

__all__ = ["AOResult", "alternating_optimize", "initialize", "BeamformerState", "Instance", "Settings"]
