"""Ginzburg-Landau vortex solutions concentrating on codimension-two submanifolds.

Modules: vortex2d (radial vortex), lattice (discrete functional), linop (linearised
operator), geometry (model manifolds, Jacobi operator), ansatz (approximate solutions),
gluing (inner corrector and balancing), cli_diagnostics (driver and diagnostics).
"""
from .errors import GLError

__version__ = "0.1.0"
__all__ = ["GLError", "__version__"]
