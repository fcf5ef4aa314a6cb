"""Matrix-free stiffness operator, density-weighted diagonal preconditioner
and preconditioned conjugate gradients."""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class NumericalBreakdown(RuntimeError):
    """PCG produced a non-finite residual or lost positive definiteness."""


@dataclass
class BoundaryConditions:
    fixed_dofs: np.ndarray
    load_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    load_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        self.load_dofs = np.asarray(self.load_dofs, dtype=np.int64)
        self.load_values = np.asarray(self.load_values, dtype=float)
        if self.load_dofs.shape != self.load_values.shape:
            raise ValueError("load_dofs and load_values must have equal length")
        if self.fixed_dofs.size < 6:
            raise ValueError("at least 6 DOFs must be fixed")
        if np.intersect1d(self.fixed_dofs, self.load_dofs).size:
            raise ValueError("a DOF cannot be both fixed and loaded")

    def force_vector(self, n_dofs):
        f = np.zeros(n_dofs)
        np.add.at(f, self.load_dofs, self.load_values)
        return f

    def free_mask(self, n_dofs):
        mask = np.ones(n_dofs, dtype=bool)
        mask[self.fixed_dofs] = False
        return mask


@dataclass(frozen=True)
class PcgSettings:
    rel_tol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class PcgResult:
    u: np.ndarray
    iterations: int
    residual: float
    converged: bool


def apply_stiffness(mesh, kernel, scaled_densities, u):
    """Internal force ``K(rho) u`` assembled element by element."""
    edofs = mesh.element_dofs
    ue = u[edofs]                                  # (TE, 72)
    fe = (ue @ kernel.K0) * scaled_densities[:, None]
    return np.bincount(edofs.ravel(), weights=fe.ravel(), minlength=u.shape[0])


def build_preconditioner(mesh, kernel, scaled_densities, fixed_dofs=()):
    """Assembled diagonal of ``K(rho)``; fixed DOFs get 1."""
    edofs = mesh.element_dofs
    diag = np.bincount(edofs.ravel(),
                       weights=np.outer(scaled_densities, np.diag(kernel.K0)).ravel(),
                       minlength=mesh.n_dofs)
    diag[np.asarray(fixed_dofs, dtype=np.int64)] = 1.0
    return diag


class StiffnessOperator:
    """``K(rho)`` restricted to free DOFs (fixed entries zeroed on both sides)."""

    def __init__(self, mesh, kernel, scaled_densities, fixed_dofs):
        self.mesh = mesh
        self.kernel = kernel
        self.scaled = np.asarray(scaled_densities, dtype=float)
        self.fixed = np.asarray(fixed_dofs, dtype=np.int64)
        self.n_applies = 0

    def __call__(self, v):
        v = v.copy()
        v[self.fixed] = 0.0
        out = apply_stiffness(self.mesh, self.kernel, self.scaled, v)
        out[self.fixed] = 0.0
        self.n_applies += 1
        return out


def pcg_solve(operator, preconditioner, f, settings=PcgSettings(), x0=None):
    """Solve ``operator(u) = f`` with diagonal preconditioning.

    ``preconditioner`` is the diagonal as a vector (applied by division).
    Stops when ``|f - K u| / |f| <= rel_tol``; hitting ``max_iter`` is
    reported through ``converged=False``.
    """
    f = np.asarray(f, dtype=float)
    fnorm = np.linalg.norm(f)
    u = np.zeros_like(f) if x0 is None else np.array(x0, dtype=float)
    if fnorm == 0.0:
        return PcgResult(np.zeros_like(f), 0, 0.0, True)
    r = f - operator(u) if x0 is not None else f.copy()
    rel = np.linalg.norm(r) / fnorm
    if rel <= settings.rel_tol:
        return PcgResult(u, 0, rel, True)
    z = r / preconditioner
    p = z.copy()
    rz = r @ z
    for it in range(1, settings.max_iter + 1):
        q = operator(p)
        pq = p @ q
        if not np.isfinite(pq) or pq <= 0.0:
            raise NumericalBreakdown(f"non-positive curvature p.Kp={pq:.3e} at iteration {it}")
        step = rz / pq
        u += step * p
        r -= step * q
        rel = np.linalg.norm(r) / fnorm
        if not np.isfinite(rel):
            raise NumericalBreakdown(f"non-finite residual at iteration {it}")
        if rel <= settings.rel_tol:
            return PcgResult(u, it, rel, True)
        z = r / preconditioner
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    log.warning("PCG hit max_iter=%d with relative residual %.3e", settings.max_iter, rel)
    return PcgResult(u, settings.max_iter, rel, False)


def simp_scale(rho, eta=3.0, rho_min=1e-4):
    """``rho**eta * (1 - rho_min) + rho_min``."""
    return np.asarray(rho, dtype=float) ** eta * (1.0 - rho_min) + rho_min


def solve_displacement(mesh, kernel, rho, bc, eta=3.0, rho_min=1e-4,
                       settings=PcgSettings(), x0=None, precondition=True):
    """Displacements for densities ``rho``. Returns ``(PcgResult, force)``."""
    scaled = simp_scale(rho, eta, rho_min)
    op = StiffnessOperator(mesh, kernel, scaled, bc.fixed_dofs)
    f = bc.force_vector(mesh.n_dofs)
    f[bc.fixed_dofs] = 0.0
    if precondition is True:
        m = build_preconditioner(mesh, kernel, scaled, bc.fixed_dofs)
    elif precondition is False or precondition is None:
        m = np.ones(mesh.n_dofs)
    else:
        m = np.asarray(precondition, dtype=float)
    res = pcg_solve(op, m, f, settings, x0=x0)
    return res, f


def compliance_and_gradient(mesh, kernel, rho, u, f, eta=3.0, rho_min=1e-4):
    """Compliance ``u.f / 2`` and its derivative with respect to each density."""
    ue = u[mesh.element_dofs]
    energy = ((ue @ kernel.K0) * ue).sum(axis=1)
    rho = np.asarray(rho, dtype=float)
    dscale = eta * rho ** (eta - 1.0) * (1.0 - rho_min)
    return 0.5 * float(u @ f), -0.5 * dscale * energy
