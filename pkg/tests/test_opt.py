import csv
from dataclasses import replace

import numpy as np
import pytest

from octotopo import mmos
from octotopo.checks import objective_gradient_error, small_problem
from octotopo.fem import quadrature
from octotopo.mma import MMA, ProjectedGradient
from octotopo.opt import (EvaluationError, OptProblem, evaluate, init_mask_grid, run,
                          volume_constraint)
from octotopo.solve import PcgSettings, solve_displacement, compliance_and_gradient


@pytest.fixture(scope="module")
def problem():
    return small_problem(5)


@pytest.mark.parametrize("counts, n_masks", [((6, 6, 5), 180), ((6, 4, 4), 96),
                                             ((10, 6, 5), 300)])
def test_mask_grid_sizes(counts, n_masks):
    masks = init_mask_grid((np.zeros(3), np.ones(3)), counts)
    assert masks.shape == (n_masks, 7) and masks.size == 7 * n_masks


def test_mask_grid_layout():
    masks = init_mask_grid((np.zeros(3), np.array([4.0, 2.0, 2.0])), (2, 1, 1), 0.5, 1.5)
    centres = 0.5 * (masks[:, :3] + masks[:, 3:6])
    assert np.allclose(centres, [[1, 1, 1], [3, 1, 1]])
    assert np.allclose(masks[:, 3] - masks[:, 0], 1.0)
    assert np.all(masks[:, 6] == 1.5)
    with pytest.raises(ValueError):
        init_mask_grid((np.zeros(3), np.ones(3)), (0, 1, 1))


def test_volume_constraint(mesh_factory):
    mesh = mesh_factory(3)
    v = mesh.element_volume
    val, grad = volume_constraint(np.ones(mesh.n_elements), mesh, 0.15)
    assert val == pytest.approx(0.85 * mesh.n_elements * v) and val > 0
    val, _ = volume_constraint(np.full(mesh.n_elements, 0.15), mesh, 0.15)
    assert val == pytest.approx(0.0, abs=1e-12)
    assert np.all(grad == 8 * np.sqrt(2) * 0.25 ** 3)
    assert grad[0] == pytest.approx(quadrature(0.25)[1].sum(), rel=1e-12)


def test_composed_gradients_match_finite_differences(problem):
    assert problem.masks.shape[0] == 8
    obj, con = objective_gradient_error(problem)
    assert obj < 1e-3
    assert con < 1e-5


def test_vanished_masks_give_solid_design(problem):
    masks = problem.masks.copy()
    masks[:, 6] = problem.lower[:, 6]
    ev = evaluate(problem, masks)
    mesh = problem.mesh
    assert ev.constraint == pytest.approx((1 - problem.vf) * mesh.n_elements
                                          * mesh.element_volume, rel=1e-2)
    res, f = solve_displacement(mesh, problem.kernel, np.ones(mesh.n_elements), problem.bc)
    solid, _ = compliance_and_gradient(mesh, problem.kernel, np.ones(mesh.n_elements),
                                       res.u, f)
    assert ev.objective == pytest.approx(solid, rel=1e-2)


def test_zero_iterations_returns_initial_masks(problem):
    res = run(replace(problem, max_outer_iter=0))
    assert np.array_equal(res.masks, problem.masks)
    assert len(res.trace) == 0


def test_out_of_bounds_design_is_clamped(problem, caplog):
    psi = problem.upper + 1.0
    ev = evaluate(problem, psi)
    assert np.all(np.isfinite(ev.d_objective))
    assert "clamped" in caplog.text


def test_short_run_writes_outputs(problem, tmp_path):
    prob = replace(problem, max_outer_iter=4, snapshot_interval=2, out_dir=str(tmp_path),
                   move_limit=0.02)
    res = run(prob)
    assert len(res.trace) == 4
    assert np.all(res.masks >= prob.lower) and np.all(res.masks <= prob.upper)
    for name in ("trace.csv", "masks_final.txt", "masks_0002.txt", "masks_0004.txt",
                 "density_0002.vtk"):
        assert (tmp_path / name).exists(), name
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "objective", "constraint", "max_dpsi", "pcg_iters",
                       "seconds"]
    assert len(rows) == 5
    assert np.array_equal(mmos.read_masks(tmp_path / "masks_final.txt"), res.masks)
    assert res.objective is not None and np.isfinite(res.constraint)


def test_run_is_deterministic(problem):
    prob = replace(problem, max_outer_iter=3)
    a, b = run(prob), run(prob)
    assert np.array_equal(a.masks, b.masks)


def test_mirror_symmetric_problem_gives_mirrored_design(problem):
    lo, hi = problem.mesh.bounds()
    zc = 0.5 * (lo[2] + hi[2])
    rng = np.random.default_rng(3)
    masks = problem.masks + rng.uniform(-0.2, 0.2, problem.masks.shape)
    mirrored = masks.copy()
    mirrored[:, [2, 5]] = 2 * zc - mirrored[:, [2, 5]]
    pcg = PcgSettings(1e-12, 20000)
    a = run(replace(problem, masks=masks, max_outer_iter=6, pcg=pcg))
    b = run(replace(problem, masks=mirrored, max_outer_iter=6, pcg=pcg))
    c = problem.mesh.centroids
    key = {tuple(np.round(x * 1e6).astype(int)): i for i, x in enumerate(c)}
    cm = c.copy()
    cm[:, 2] = 2 * zc - cm[:, 2]
    perm = np.array([key[tuple(np.round(x * 1e6).astype(int))] for x in cm])
    assert np.abs(a.rho - b.rho[perm]).max() < 1e-6


def test_pg_optimizer_reduces_violation(problem):
    # the start is over the volume target, so the penalty dominates
    res = run(replace(problem, optimizer="pg", max_outer_iter=5, move_limit=0.01))
    assert res.trace.constraints[0] > 0
    assert res.constraint < res.trace.constraints[0]


def test_problem_validation(problem):
    with pytest.raises(ValueError):
        OptProblem(problem.mesh, problem.kernel, problem.bc, problem.masks, vf=1.5)
    with pytest.raises(ValueError):
        OptProblem(problem.mesh, problem.kernel, problem.bc, np.empty((0, 7)))
    with pytest.raises(ValueError):
        OptProblem(problem.mesh, problem.kernel, problem.bc, problem.masks, optimizer="x")


def test_failed_solve_raises_evaluation_error(problem):
    prob = replace(problem, pcg=PcgSettings(1e-6, 5))
    prob.kernel = replace(problem.kernel, K0=-problem.kernel.K0)
    with pytest.raises(EvaluationError):
        evaluate(prob, prob.masks)


def _quadratic(x):
    # min sum (x - 2)^2  s.t.  sum(x) <= 2, 0 <= x <= 3 ; optimum x = 2/n
    return (np.sum((x - 2) ** 2), 2 * (x - 2), np.sum(x) - 2, np.ones_like(x))


@pytest.mark.parametrize("n", [1, 4, 10])
def test_mma_solves_constrained_quadratic(n):
    x = np.full(n, 0.1)
    opt = MMA(np.zeros(n), np.full(n, 3.0), move=0.5)
    for _ in range(60):
        f, df, g, dg = _quadratic(x)
        x = opt.step(x, f, df, g, dg)
    assert np.allclose(x, 2.0 / n, atol=1e-4)


def test_mma_respects_bounds_and_move_limit():
    rng = np.random.default_rng(0)
    lo, hi = np.zeros(20), np.full(20, 2.0)
    opt = MMA(lo, hi, move=0.05)
    x = rng.uniform(0, 2, 20)
    for _ in range(10):
        xn = opt.step(x, 0.0, rng.normal(size=20), -1.0, rng.normal(size=20))
        assert np.all(xn >= lo) and np.all(xn <= hi)
        assert np.all(np.abs(xn - x) <= 0.05 * 2 + 1e-12)
        x = xn


def test_projected_gradient_step():
    pg = ProjectedGradient(np.zeros(3), np.ones(3), move=0.1)
    x = pg.step(np.full(3, 0.5), 0.0, np.array([1.0, 0.0, -1.0]), -1.0, np.zeros(3))
    assert np.allclose(x, [0.4, 0.5, 0.6])
    with pytest.raises(ValueError):
        MMA(np.ones(2), np.zeros(2))
