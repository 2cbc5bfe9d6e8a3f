"""Rigid body of arbitrary shape in a viscous incompressible fluid, simulated in the body frame."""

__version__ = "0.1.0"
