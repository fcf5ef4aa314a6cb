"""Truncated-octahedron meshes, 24-node Wachspress elasticity and
mask-based topology optimisation."""

from .estimator import MaskTopologyOptimizer
from .fem import Material, element_kernel
from .mesh import GridSpec, Mesh, build_mesh, count_elements, count_points
from .mmos import MmosParams, density, density_jacobian_product
from .opt import OptProblem, OptResult, run
from .solve import BoundaryConditions, PcgSettings, solve_displacement

__all__ = [
    "BoundaryConditions", "GridSpec", "MaskTopologyOptimizer", "Material", "Mesh",
    "MmosParams", "OptProblem", "OptResult", "PcgSettings", "build_mesh",
    "count_elements", "count_points", "density", "density_jacobian_product",
    "element_kernel", "run", "solve_displacement",
]
__version__ = "0.1.0"
