"""Multifunctional reconfigurable surfaces: closed-form analysis, joint
beamforming and surface optimization, and worst-case robust design."""

__version__ = "0.1.0"
