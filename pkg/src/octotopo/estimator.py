"""Estimator-style wrapper around :func:`octotopo.opt.run`.

``fit`` takes a mesh and boundary conditions and optimises the masks;
``predict`` evaluates the resulting density field at arbitrary points.
"""

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import mmos
from .fem import Material, element_kernel
from .mesh import Mesh
from .opt import OptProblem, default_bounds, init_mask_grid, run
from .solve import BoundaryConditions, PcgSettings


def check_points(X):
    """Finite float array of shape (n, 3)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"expected points of shape (n, 3), got {X.shape}")
    return X


def check_masks(masks):
    """Finite float array of shape (TM, 7)."""
    masks = check_array(np.atleast_2d(masks), dtype=np.float64)
    if masks.shape[1] != 7:
        raise ValueError(f"expected masks of shape (TM, 7), got {masks.shape}")
    return masks


def _check_positive(name, value, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(value, kind) or isinstance(value, bool) or value <= 0:
        raise ValueError(f"{name} must be a positive {'integer' if integer else 'number'}, "
                         f"got {value!r}")


class MaskTopologyOptimizer(BaseEstimator):
    """Compliance minimisation by negative spheroidal masks.

    Parameters mirror the problem-file keys. ``mask_grid`` is used when no
    initial masks are passed to :meth:`fit`.

    Attributes
    ----------
    masks_ : (TM, 7) optimised masks
    density_ : (TE,) element densities of the final design
    trace_ : :class:`~octotopo.opt.OptTrace`
    objective_, constraint_ : final compliance and volume constraint
    n_iter_ : outer iterations performed
    """

    def __init__(self, vf=0.15, alpha=3.0, eta=3.0, rho_min=1e-4, epsilon=None,
                 max_iter=400, move_limit=0.02, stagnation_tol=1e-4,
                 algorithm="mma", pcg_tol=1e-6, pcg_max_iter=5000,
                 mask_grid=(3, 3, 3), foci_offset=1.0, d0=3.0, margin=20.0,
                 d_min=-3.0, d_max=20.0, lam=10.0, mu=10.0, out_dir=None,
                 snapshot_interval=0):
        self.vf = vf
        self.alpha = alpha
        self.eta = eta
        self.rho_min = rho_min
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.move_limit = move_limit
        self.stagnation_tol = stagnation_tol
        self.algorithm = algorithm
        self.pcg_tol = pcg_tol
        self.pcg_max_iter = pcg_max_iter
        self.mask_grid = mask_grid
        self.foci_offset = foci_offset
        self.d0 = d0
        self.margin = margin
        self.d_min = d_min
        self.d_max = d_max
        self.lam = lam
        self.mu = mu
        self.out_dir = out_dir
        self.snapshot_interval = snapshot_interval

    def _params(self, mesh):
        eps = self.epsilon
        if eps is None:
            lo, hi = mesh.bounds()
            eps = 1e-8 * max(float(np.linalg.norm(hi - lo)), mesh.spec.edge_len)
        return mmos.MmosParams(alpha=self.alpha, epsilon=eps, rho_min=self.rho_min,
                               eta=self.eta)

    def _validate(self):
        if not 0 < self.vf < 1:
            raise ValueError(f"vf must lie in (0, 1), got {self.vf!r}")
        _check_positive("max_iter", self.max_iter, integer=True)
        _check_positive("move_limit", self.move_limit)
        if self.algorithm not in ("mma", "pg"):
            raise ValueError(f"algorithm must be 'mma' or 'pg', got {self.algorithm!r}")

    def build_problem(self, mesh, bc, masks=None, kernel=None):
        """The :class:`OptProblem` that :meth:`fit` would solve."""
        self._validate()
        if not isinstance(mesh, Mesh):
            raise TypeError("mesh must be an octotopo Mesh")
        if not isinstance(bc, BoundaryConditions):
            raise TypeError("bc must be BoundaryConditions")
        if kernel is None:
            kernel = element_kernel(mesh.spec.edge_len, Material(self.lam, self.mu))
        if masks is None:
            masks = init_mask_grid(mesh.bounds(), self.mask_grid, self.foci_offset, self.d0)
        masks = check_masks(masks)
        lower, upper = default_bounds(mesh, masks.shape[0], self.margin, self.d_min, self.d_max)
        return OptProblem(mesh=mesh, kernel=kernel, bc=bc, masks=masks,
                          params=self._params(mesh), vf=self.vf, lower=lower, upper=upper,
                          max_outer_iter=self.max_iter,
                          snapshot_interval=self.snapshot_interval, out_dir=self.out_dir,
                          pcg=PcgSettings(self.pcg_tol, self.pcg_max_iter),
                          move_limit=self.move_limit, stagnation_tol=self.stagnation_tol,
                          optimizer=self.algorithm)

    def fit(self, mesh, bc, masks=None, kernel=None, callback=None):
        problem = self.build_problem(mesh, bc, masks, kernel)
        result = run(problem, callback=callback)
        self.masks_ = result.masks
        self.density_ = result.rho
        self.trace_ = result.trace
        self.objective_ = result.objective
        self.constraint_ = result.constraint
        self.n_iter_ = len(result.trace)
        self.params_ = problem.params
        return self

    def predict(self, X):
        """Density of the fitted design at points ``X`` (n, 3)."""
        check_is_fitted(self, "masks_")
        return mmos.density(self.masks_, check_points(X), self.params_)
