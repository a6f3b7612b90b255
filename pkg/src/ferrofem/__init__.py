"""Mixed finite element solver for a stationary ferrofluid flow model.

The model couples a magnetostatic scalar potential with a Langevin
magnetization law to the incompressible Navier-Stokes equations. The
package provides the decoupled fixed-point solver, edge-element field
recovery, and a manufactured-solution convergence harness.
"""

from .material import MaterialParams, alpha, beta, langevin, magnetization
from .mesh2d import Mesh2D, build_uniform_square, mesh_size

__all__ = [
    "MaterialParams",
    "Mesh2D",
    "alpha",
    "beta",
    "build_uniform_square",
    "langevin",
    "magnetization",
    "mesh_size",
]

__version__ = "0.1.0"
