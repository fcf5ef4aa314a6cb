"""Command-line front end.

Every failure prints exactly one line to stderr of the form
``error: KIND: message`` with ``KIND`` in ``usage``, ``config`` or
``numerical``, and exits with 2 (usage/config) or 3 (numerical).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import mmos
from .config import ConfigError, build_problem, load_config, shipped_config
from .export import write_binary, write_vtk
from .fem import element_kernel
from .mesh import build_mesh, count_points
from .opt import EvaluationError, run
from .solve import NumericalBreakdown, compliance_and_gradient, solve_displacement

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class CliError(Exception):
    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_CONFIG)


def _resolve_config(arg):
    path = Path(arg)
    if not path.exists() and not path.suffix:
        try:
            path = shipped_config(arg)
        except FileNotFoundError:
            pass
    if not path.exists():
        raise ConfigError("config file not found", str(arg))
    return load_config(path)


def _out_dir(args, cfg, default):
    out = Path(args.out or (cfg.output if cfg is not None and cfg.output else default))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}", str(out)) from exc
    return out


def cmd_mesh(args):
    cfg = _resolve_config(args.config)
    mesh = build_mesh(cfg.grid)
    out = _out_dir(args, cfg, "mesh_out")
    write_vtk(out / "mesh.vtk", mesh)
    write_binary(out / "mesh.bin", mesh)
    print(f"TE={mesh.n_elements} TN={mesh.n_nodes} TP={count_points(cfg.grid)}")
    return EXIT_OK


def _solve_fields(cfg, masks_path):
    mesh = build_mesh(cfg.grid)
    kernel = element_kernel(cfg.grid.edge_len, cfg.material)
    problem = build_problem(cfg, mesh=mesh, kernel=kernel)
    if masks_path:
        rho = mmos.density(mmos.read_masks(masks_path), mesh.centroids, problem.params)
    else:
        rho = np.ones(mesh.n_elements)
    prm = problem.params
    res, f = solve_displacement(mesh, kernel, rho, problem.bc, eta=prm.eta,
                                rho_min=prm.rho_min, settings=problem.pcg)
    comp, _ = compliance_and_gradient(mesh, kernel, rho, res.u, f, prm.eta, prm.rho_min)
    return mesh, rho, res, comp


def cmd_solve(args):
    cfg = _resolve_config(args.config)
    mesh, rho, res, comp = _solve_fields(cfg, args.masks)
    if not res.converged:
        raise NumericalBreakdown(f"PCG did not converge in {res.iterations} iterations "
                                 f"(residual {res.residual:.3e})")
    out = _out_dir(args, cfg, "solve_out")
    u = res.u.reshape(-1, 3)
    mag = np.linalg.norm(u, axis=1)
    write_vtk(out / "solution.vtk", mesh, cell_data={"rho": rho},
              point_data={"displacement": u, "displacement_magnitude": mag})
    print(f"compliance={comp:.10e} pcg_iters={res.iterations} max_disp={mag.max():.10e}")
    return EXIT_OK


def cmd_optimize(args):
    cfg = _resolve_config(args.config)
    if args.max_iter is not None:
        cfg.max_outer_iter = args.max_iter
    out = _out_dir(args, cfg, "opt_out")
    problem = build_problem(cfg, out_dir=str(out))
    result = run(problem)
    mesh = problem.mesh
    write_vtk(out / "density_final.vtk", mesh, cell_data={"rho": result.rho})
    solid = np.flatnonzero(result.rho > problem.density_threshold)
    if solid.size:
        write_vtk(out / "density_final_solid.vtk", mesh, cell_data={"rho": result.rho},
                  cells=solid)
    if result.trace.status.startswith("failed"):
        raise NumericalBreakdown(result.trace.status)
    print(f"iterations={len(result.trace)} status={result.trace.status.replace(' ', '_')} "
          f"objective={result.objective:.10e} constraint={result.constraint:.10e}")
    return EXIT_OK


def cmd_check_gradients(args):
    from .checks import check_density_gradients, objective_gradient_error, small_problem

    dens = check_density_gradients(args.instances, seed=args.seed)
    if args.config:
        cfg = _resolve_config(args.config)
        problem = build_problem(cfg)
    else:
        problem = small_problem()
    obj, con = objective_gradient_error(problem, n_components=args.components,
                                        seed=args.seed)
    print(f"density_max_rel_err={dens:.3e} objective_max_rel_err={obj:.3e} "
          f"constraint_max_rel_err={con:.3e}")
    return EXIT_OK


def make_parser():
    p = _Parser(prog="octotopo", description="Truncated-octahedron meshing, "
                "elasticity and mask-based topology optimisation.")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="INI problem file or shipped config name")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("mesh", help="build and export the mesh")
    common(sp)
    sp.set_defaults(func=cmd_mesh)
    sp = sub.add_parser("solve", help="single elastic solve")
    common(sp)
    sp.add_argument("--masks", help="mask file; solid design if omitted")
    sp.set_defaults(func=cmd_solve)
    sp = sub.add_parser("optimize", help="run the optimiser")
    common(sp)
    sp.add_argument("--max-iter", type=int, default=None,
                    help="override [optimizer] max_outer_iter")
    sp.set_defaults(func=cmd_optimize)
    sp = sub.add_parser("check-gradients", help="finite-difference gradient checks")
    common(sp, config_required=False)
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--components", type=int, default=None)
    sp.set_defaults(func=cmd_check_gradients)
    return p


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads is not None and args.threads < 1:
            raise CliError("usage", "--threads must be positive", EXIT_CONFIG)
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(args.threads):
                return args.func(args)
        return args.func(args)
    except CliError as exc:
        err = exc
    except ConfigError as exc:
        err = CliError("config", str(exc), EXIT_CONFIG)
    except (NumericalBreakdown, EvaluationError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        err = CliError("numerical", str(exc), EXIT_NUMERICAL)
    except (ValueError, OSError) as exc:
        err = CliError("config", str(exc), EXIT_CONFIG)
    except RuntimeError as exc:
        err = CliError("numerical", str(exc), EXIT_NUMERICAL)
    msg = " ".join(str(err).split())
    print(f"error: {err.kind}: {msg}", file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
