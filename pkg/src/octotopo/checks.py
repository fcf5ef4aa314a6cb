"""Finite-difference verification of the analytical sensitivities."""

from dataclasses import replace

import numpy as np

from . import mmos
from .opt import evaluate
from .solve import PcgSettings


def _rel_err(analytic, fd, floor=1e-12):
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    keep = np.abs(fd) > floor
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(analytic[keep] - fd[keep]) / np.abs(fd[keep])))


def random_mask_instance(rng, n_masks=4, n_points=60):
    """Random masks and a centroid cloud in a 6-unit cube."""
    masks = np.empty((n_masks, 7))
    masks[:, :6] = rng.uniform(-2.0, 2.0, (n_masks, 6))
    masks[:, 6] = rng.uniform(0.5, 3.0, n_masks)
    points = rng.uniform(-3.0, 3.0, (n_points, 3))
    return masks, points


def density_gradient_error(masks, points, params, weights, step=1e-6, floor=1e-6):
    """Max relative error of ``density_jacobian_product`` vs central differences.

    Components below ``floor`` times the largest difference quotient are
    skipped; in double precision they are dominated by rounding.
    """
    g = mmos.density_jacobian_product(masks, points, params, weights)
    fd = np.zeros_like(masks)
    for idx in np.ndindex(*masks.shape):
        mp, mm = masks.copy(), masks.copy()
        mp[idx] += step
        mm[idx] -= step
        fd[idx] = (weights @ mmos.density(mp, points, params)
                   - weights @ mmos.density(mm, points, params)) / (2 * step)
    return _rel_err(g, fd, floor * np.abs(fd).max())


def check_density_gradients(n_instances=20, seed=0, params=None):
    rng = np.random.default_rng(seed)
    params = params or mmos.MmosParams(epsilon=1e-10)
    errs = []
    for _ in range(n_instances):
        masks, pts = random_mask_instance(rng)
        w = rng.normal(size=pts.shape[0])
        errs.append(density_gradient_error(masks, pts, params, w))
    return max(errs)


def objective_gradient_error(problem, n_components=None, step=1e-6, seed=0,
                             pcg_tol=1e-12, floor=None):
    """Relative error of the composed objective and constraint gradients.

    Returns ``(objective_error, constraint_error)`` over the sampled
    components (all when ``n_components`` is ``None``). Components whose
    finite difference is below ``floor`` (default ``1e-6`` of the largest)
    are skipped.
    """
    prob = replace(problem, pcg=PcgSettings(pcg_tol, max(problem.pcg.max_iter, 20000)))
    psi = prob.masks.ravel().copy()
    ev = evaluate(prob, psi)
    idx = np.arange(psi.size)
    if n_components is not None and n_components < psi.size:
        idx = np.random.default_rng(seed).choice(psi.size, n_components, replace=False)
    fd_obj = np.zeros(idx.size)
    fd_con = np.zeros(idx.size)
    for n, i in enumerate(idx):
        vals = []
        for s in (step, -step):
            p = psi.copy()
            p[i] += s
            e = evaluate(prob, p, x0=ev.u)
            vals.append((e.objective, e.constraint))
        fd_obj[n] = (vals[0][0] - vals[1][0]) / (2 * step)
        fd_con[n] = (vals[0][1] - vals[1][1]) / (2 * step)
    go = ev.d_objective.ravel()[idx]
    gc = ev.d_constraint.ravel()[idx]
    fo = floor if floor is not None else 1e-6 * np.abs(fd_obj).max()
    fc = floor if floor is not None else 1e-6 * np.abs(fd_con).max()
    return _rel_err(go, fd_obj, fo), _rel_err(gc, fd_con, fc)


SMALL_CANTILEVER = """
[grid]
nx = {n}
ny = {n}
nz = {n}
edge_len = 0.25

[fix.wall]
region = x <= 0

[load.edge]
elements = x >= max, y <= min
local_nodes = 22, 23
force = 0, -0.125, 0

[masks]
grid = 2, 2, 2
foci_offset = 0.4
d0 = 0.6

[params]
vf = 0.15
"""


def small_problem(n=5):
    """Cantilever on an ``n^3`` grid with four partly overlapping masks."""
    from .config import build_problem, loads_config

    return build_problem(loads_config(SMALL_CANTILEVER.format(n=n), source="<small>"))
