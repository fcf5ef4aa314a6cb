"""Compliance minimisation with negative spheroidal masks."""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mmos
from .mma import MMA, ProjectedGradient
from .solve import (NumericalBreakdown, PcgSettings, compliance_and_gradient,
                    solve_displacement)

log = logging.getLogger(__name__)


class EvaluationError(RuntimeError):
    pass


def default_bounds(mesh, n_masks, margin=20.0, d_min=-3.0, d_max=20.0):
    """Focal points may leave the centroid box by ``margin`` on every side."""
    lo, hi = mesh.bounds()
    lower = np.concatenate([lo - margin, lo - margin, [d_min]])
    upper = np.concatenate([hi + margin, hi + margin, [d_max]])
    return np.tile(lower, (n_masks, 1)), np.tile(upper, (n_masks, 1))


def init_mask_grid(box, counts, foci_offset=1.0, d0=3.0):
    """Masks centred on a uniform ``gx x gy x gz`` grid inside ``box``.

    ``box`` is ``(lo, hi)``; centres sit at cell midpoints of the subdivided
    box and the foci are offset by ``foci_offset`` along +-x.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 1:
        raise ValueError(f"mask grid counts must be three positive integers, got {counts}")
    axes = [lo[a] + (np.arange(n) + 0.5) * (hi[a] - lo[a]) / n
            for a, n in enumerate(counts)]
    cz, cy, cx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    centres = np.column_stack([cx.ravel(), cy.ravel(), cz.ravel()])
    off = np.array([foci_offset, 0.0, 0.0])
    d = np.full((centres.shape[0], 1), float(d0))
    return np.hstack([centres - off, centres + off, d])


def volume_constraint(rho, mesh, vf):
    """``sum(rho_i v_i) - vf * sum(v_i)`` and its (constant) gradient."""
    v = mesh.element_volume
    rho = np.asarray(rho, dtype=float)
    value = v * rho.sum() - vf * v * rho.size
    return float(value), np.full(rho.size, v)


@dataclass
class OptProblem:
    mesh: object
    kernel: object
    bc: object
    masks: np.ndarray
    params: mmos.MmosParams = field(default_factory=mmos.MmosParams)
    vf: float = 0.15
    lower: np.ndarray = None
    upper: np.ndarray = None
    max_outer_iter: int = 400
    snapshot_interval: int = 0
    out_dir: str = None
    pcg: PcgSettings = field(default_factory=PcgSettings)
    move_limit: float = 0.1
    stagnation_tol: float = 1e-4
    optimizer: str = "mma"
    density_threshold: float = 0.2

    def __post_init__(self):
        self.masks = mmos.as_masks(self.masks)
        if self.masks.shape[0] < 1:
            raise ValueError("at least one mask is required")
        if not 0 < self.vf < 1:
            raise ValueError("vf must lie in (0, 1)")
        if self.lower is None or self.upper is None:
            lo, hi = default_bounds(self.mesh, self.masks.shape[0])
            self.lower = lo if self.lower is None else self.lower
            self.upper = hi if self.upper is None else self.upper
        shape = self.masks.shape
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), shape).copy()
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if self.optimizer not in ("mma", "pg"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def n_design(self):
        return self.masks.size

    @property
    def target_volume(self):
        return self.vf * self.mesh.element_volume * self.mesh.n_elements


@dataclass
class Evaluation:
    objective: float
    constraint: float
    d_objective: np.ndarray
    d_constraint: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    pcg_iterations: int


def evaluate(problem, psi, x0=None):
    """Objective, volume constraint and both gradients at ``psi``."""
    psi = np.asarray(psi, dtype=float).reshape(problem.masks.shape)
    clipped = np.clip(psi, problem.lower, problem.upper)
    if not np.array_equal(clipped, psi):
        log.warning("design variables outside bounds were clamped")
    psi = clipped
    mesh, prm = problem.mesh, problem.params
    rho = mmos.density(psi, mesh.centroids, prm)
    try:
        res, f = solve_displacement(mesh, problem.kernel, rho, problem.bc,
                                    eta=prm.eta, rho_min=prm.rho_min,
                                    settings=problem.pcg, x0=x0)
    except NumericalBreakdown as exc:
        raise EvaluationError(f"state solve failed: {exc}") from exc
    obj, dobj_drho = compliance_and_gradient(mesh, problem.kernel, rho, res.u, f,
                                             eta=prm.eta, rho_min=prm.rho_min)
    con, dcon_drho = volume_constraint(rho, mesh, problem.vf)
    d_obj = mmos.density_jacobian_product(psi, mesh.centroids, prm, dobj_drho, rho=rho)
    d_con = mmos.density_jacobian_product(psi, mesh.centroids, prm, dcon_drho, rho=rho)
    return Evaluation(obj, con, d_obj, d_con, rho, res.u, res.iterations)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    constraint: float
    max_dpsi: float
    pcg_iters: int
    seconds: float


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    status: str = "running"

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def constraints(self):
        return np.array([r.constraint for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "constraint", "max_dpsi",
                        "pcg_iters", "seconds"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.objective), repr(r.constraint),
                            repr(r.max_dpsi), r.pcg_iters, f"{r.seconds:.4f}"])


@dataclass
class OptResult:
    masks: np.ndarray
    rho: np.ndarray
    trace: OptTrace
    u: np.ndarray = None
    objective: float = None
    constraint: float = None

    @property
    def feasible(self):
        return self.constraint is not None and self.constraint <= 0.0


def _write_snapshot(problem, out, it, psi, rho):
    from .export import write_vtk

    mmos.write_masks(out / f"masks_{it:04d}.txt", psi)
    write_vtk(out / f"density_{it:04d}.vtk", problem.mesh, cell_data={"rho": rho})


def run(problem, callback=None, final_evaluation=True):
    """Optimise the masks of ``problem``.

    Each outer iteration evaluates objective, constraint and gradients at
    the current design and takes one optimizer step. The recorded
    objective/constraint belong to the design at the start of the
    iteration. Stops after ``max_outer_iter`` iterations or when the largest
    bound-normalised design change drops below ``stagnation_tol``. With
    ``final_evaluation`` the returned design is solved once more so that
    ``objective``/``constraint`` describe it.
    """
    psi = problem.masks.copy()
    trace = OptTrace()
    if problem.max_outer_iter <= 0:
        rho = mmos.density(psi, problem.mesh.centroids, problem.params)
        trace.status = "no iterations"
        return OptResult(psi, rho, trace)

    span = (problem.upper - problem.lower).ravel()
    lower, upper = problem.lower.ravel(), problem.upper.ravel()
    stepper = (MMA(lower, upper, move=problem.move_limit) if problem.optimizer == "mma"
               else ProjectedGradient(lower, upper, move=problem.move_limit))
    out = Path(problem.out_dir) if problem.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    v_star = problem.target_volume
    f_ref = None
    u = None
    ev = None
    trace.status = "max iterations"
    for it in range(1, problem.max_outer_iter + 1):
        t0 = time.perf_counter()
        try:
            ev = evaluate(problem, psi, x0=u)
        except EvaluationError as exc:
            log.error("iteration %d: %s", it, exc)
            trace.status = f"failed: {exc}"
            break
        u = ev.u
        if f_ref is None:
            f_ref = abs(ev.objective) or 1.0
        # objective scaled to 10 at the start, constraint relative to V*
        x = psi.ravel()
        xnew = stepper.step(x, 10.0 * ev.objective / f_ref,
                            10.0 * ev.d_objective.ravel() / f_ref,
                            ev.constraint / v_star, ev.d_constraint.ravel() / v_star)
        dpsi = float(np.max(np.abs(xnew - x) / span))
        psi = xnew.reshape(psi.shape)
        rec = IterationRecord(it, ev.objective, ev.constraint, dpsi,
                              ev.pcg_iterations, time.perf_counter() - t0)
        trace.append(rec)
        log.info("it %4d  obj %.6e  con %+.3e  dpsi %.2e  pcg %d",
                 it, ev.objective, ev.constraint, dpsi, ev.pcg_iterations)
        if out is not None and problem.snapshot_interval and it % problem.snapshot_interval == 0:
            _write_snapshot(problem, out, it, psi, ev.rho)
        if callback is not None:
            callback(it, psi, ev)
        if dpsi < problem.stagnation_tol:
            trace.status = "stagnated"
            break

    result = OptResult(psi, mmos.density(psi, problem.mesh.centroids, problem.params),
                       trace, u)
    if final_evaluation and not trace.status.startswith("failed"):
        try:
            ev = evaluate(problem, psi, x0=u)
            result.u, result.objective, result.constraint = ev.u, ev.objective, ev.constraint
        except EvaluationError as exc:
            log.error("final evaluation: %s", exc)
            trace.status = f"failed: {exc}"
    if out is not None:
        trace.write_csv(out / "trace.csv")
        mmos.write_masks(out / "masks_final.txt", psi)
    return result
