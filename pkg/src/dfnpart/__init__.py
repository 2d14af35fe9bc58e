"""Partitioning, DOF reordering and striped solves for DFN Darcy flow."""

from . import geometry, fixtures  # noqa: F401

__version__ = "0.1.0"
