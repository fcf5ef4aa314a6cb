"""INI problem files.

Sections
--------
``[grid]``       nx, ny, nz, edge_len
``[material]``   lambda, mu
``[fix.NAME]``   region (node predicate), dofs (subset of "xyz")
``[load.NAME]``  elements (centroid predicate), local_nodes, force
                 -- or -- region (node predicate), force
``[masks]``      grid (gx, gy, gz), foci_offset, d0 -- or -- file
``[params]``     alpha, eta, rho_min, epsilon, vf
``[bounds]``     margin, d_min, d_max
``[solver]``     rel_tol, max_iter
``[optimizer]``  max_outer_iter, snapshot_interval, move_limit, algorithm,
                 stagnation_tol, output

A predicate is a comma-separated conjunction of ``AXIS OP VALUE`` terms with
``AXIS`` in x/y/z, ``OP`` in ``<= >= == < >`` and ``VALUE`` a number or the
keywords ``min``/``max`` (extent of the coordinates being filtered). The word
``all`` selects everything. Comparisons use a tolerance of ``1e-6 * l``.
"""

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mmos
from .fem import Material, element_kernel
from .mesh import GridSpec, build_mesh
from .opt import OptProblem, default_bounds, init_mask_grid
from .solve import BoundaryConditions, PcgSettings


class ConfigError(ValueError):
    """Invalid problem file; ``line`` is 1-based or ``None``."""

    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


_TERM = re.compile(r"^\s*([xyz])\s*(<=|>=|==|<|>)\s*(\S+)\s*$")
_AXES = {"x": 0, "y": 1, "z": 2}


def parse_predicate(text):
    """Parse a predicate into a list of ``(axis, op, value)`` terms."""
    text = text.strip()
    if text.lower() == "all":
        return []
    terms = []
    for part in text.split(","):
        m = _TERM.match(part)
        if not m:
            raise ValueError(f"bad predicate term {part.strip()!r}")
        axis, op, val = m.groups()
        if val not in ("min", "max"):
            val = _number(val)
        terms.append((_AXES[axis], op, val))
    return terms


def select(coords, terms, tol):
    """Boolean mask of rows of ``coords`` satisfying every term."""
    coords = np.asarray(coords, dtype=float)
    keep = np.ones(coords.shape[0], dtype=bool)
    for axis, op, val in terms:
        c = coords[:, axis]
        if val == "min":
            val = c.min()
        elif val == "max":
            val = c.max()
        if op == "<=":
            keep &= c <= val + tol
        elif op == ">=":
            keep &= c >= val - tol
        elif op == "==":
            keep &= np.abs(c - val) <= tol
        elif op == "<":
            keep &= c < val - tol
        else:
            keep &= c > val + tol
    return keep


def _number(text):
    """Float literal, also accepting ``sqrt(k)`` factors like ``0.125*sqrt(2)``."""
    text = text.strip()
    m = re.fullmatch(r"([-+]?[\d.eE+-]*)\s*\*?\s*sqrt\(([\d.]+)\)", text)
    if m:
        coef = m.group(1)
        coef = 1.0 if coef in ("", "+") else (-1.0 if coef == "-" else float(coef))
        return coef * math.sqrt(float(m.group(2)))
    return float(text)


@dataclass
class FixBlock:
    name: str
    region: list
    dofs: str = "xyz"


@dataclass
class LoadBlock:
    name: str
    force: tuple
    elements: list = None
    local_nodes: tuple = ()
    region: list = None


@dataclass
class ProblemConfig:
    grid: GridSpec
    material: Material = field(default_factory=Material)
    fixes: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    mask_grid: tuple = (3, 3, 3)
    foci_offset: float = 1.0
    d0: float = 3.0
    mask_file: str = None
    alpha: float = 3.0
    eta: float = 3.0
    rho_min: float = 1e-4
    epsilon: float = None
    vf: float = 0.15
    margin: float = 20.0
    d_min: float = -3.0
    d_max: float = 20.0
    rel_tol: float = 1e-6
    max_iter: int = 5000
    max_outer_iter: int = 400
    snapshot_interval: int = 0
    move_limit: float = 0.1
    stagnation_tol: float = 1e-4
    algorithm: str = "mma"
    output: str = None
    source: str = None


def _key_line(text, section, key=None):
    cur = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            if key is None and cur == section:
                return no
        elif cur == section and key is not None:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            if k == key:
                return no
    return None


def _floats(text, n=None):
    vals = [_number(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} values, got {len(vals)}")
    return vals


def loads_config(text, source=None):
    """Parse INI text into a :class:`ProblemConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], source,
                          getattr(exc, "lineno", None)) from exc

    def get(section, key, conv, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                raise ConfigError(f"missing [{section}] {key}", source,
                                  _key_line(text, section))
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}", source,
                              _key_line(text, section, key)) from exc

    if not cp.has_section("grid"):
        raise ConfigError("missing [grid] section", source)
    try:
        grid = GridSpec(get("grid", "nx", int, required=True),
                        get("grid", "ny", int, required=True),
                        get("grid", "nz", int, required=True),
                        get("grid", "edge_len", _number, 1.0))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), source, _key_line(text, "grid")) from exc

    cfg = ProblemConfig(grid=grid, source=source)
    if cp.has_section("material"):
        try:
            cfg.material = Material(get("material", "lambda", _number, 10.0),
                                    get("material", "mu", _number, 10.0))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), source, _key_line(text, "material")) from exc

    for sec in cp.sections():
        if sec.startswith("fix."):
            dofs = get(sec, "dofs", str.strip, "xyz")
            if not dofs or set(dofs) - set("xyz"):
                raise ConfigError(f"[{sec}] dofs must be letters from 'xyz'",
                                  source, _key_line(text, sec, "dofs"))
            cfg.fixes.append(FixBlock(sec[4:], get(sec, "region", parse_predicate,
                                                   required=True), dofs))
        elif sec.startswith("load."):
            force = get(sec, "force", lambda s: tuple(_floats(s, 3)), required=True)
            blk = LoadBlock(sec[5:], force)
            if cp.has_option(sec, "elements"):
                blk.elements = get(sec, "elements", parse_predicate)
                blk.local_nodes = tuple(int(v) for v in get(
                    sec, "local_nodes", _floats, required=True))
                if any(not 1 <= n <= 24 for n in blk.local_nodes):
                    raise ConfigError(f"[{sec}] local_nodes must lie in 1..24",
                                      source, _key_line(text, sec, "local_nodes"))
            else:
                blk.region = get(sec, "region", parse_predicate, required=True)
            cfg.loads.append(blk)
        elif sec not in ("grid", "material", "masks", "params", "bounds",
                         "solver", "optimizer"):
            raise ConfigError(f"unknown section [{sec}]", source, _key_line(text, sec))

    if cp.has_section("masks"):
        cfg.mask_file = get("masks", "file", str.strip)
        cfg.mask_grid = tuple(int(v) for v in get("masks", "grid",
                                                  lambda s: _floats(s, 3), (3, 3, 3)))
        cfg.foci_offset = get("masks", "foci_offset", _number, 1.0)
        cfg.d0 = get("masks", "d0", _number, 3.0)
    for key, conv in (("alpha", _number), ("eta", _number), ("rho_min", _number),
                      ("epsilon", _number), ("vf", _number)):
        setattr(cfg, key, get("params", key, conv, getattr(cfg, key)))
    for key in ("margin", "d_min", "d_max"):
        setattr(cfg, key, get("bounds", key, _number, getattr(cfg, key)))
    cfg.rel_tol = get("solver", "rel_tol", _number, cfg.rel_tol)
    cfg.max_iter = get("solver", "max_iter", int, cfg.max_iter)
    cfg.max_outer_iter = get("optimizer", "max_outer_iter", int, cfg.max_outer_iter)
    cfg.snapshot_interval = get("optimizer", "snapshot_interval", int, cfg.snapshot_interval)
    cfg.move_limit = get("optimizer", "move_limit", _number, cfg.move_limit)
    cfg.stagnation_tol = get("optimizer", "stagnation_tol", _number, cfg.stagnation_tol)
    cfg.algorithm = get("optimizer", "algorithm", str.strip, cfg.algorithm)
    cfg.output = get("optimizer", "output", str.strip, cfg.output)

    if not 0 < cfg.vf < 1:
        raise ConfigError("vf must lie in (0, 1)", source, _key_line(text, "params", "vf"))
    if cfg.algorithm not in ("mma", "pg"):
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}", source,
                          _key_line(text, "optimizer", "algorithm"))
    if cfg.d_max <= cfg.d_min:
        raise ConfigError("d_max must exceed d_min", source, _key_line(text, "bounds"))
    try:
        PcgSettings(cfg.rel_tol, cfg.max_iter)
        mmos.MmosParams(cfg.alpha, cfg.epsilon or 1.0, cfg.rho_min, cfg.eta)
    except ValueError as exc:
        raise ConfigError(str(exc), source) from exc
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    return loads_config(text, source=str(path))


def shipped_config(name):
    """Path of a bundled benchmark config, e.g. ``"cantilever_desk"``."""
    path = Path(__file__).with_name("configs") / f"{name}.ini"
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def build_boundary_conditions(cfg, mesh):
    tol = 1e-6 * cfg.grid.edge_len
    fixed = []
    for blk in cfg.fixes:
        nodes = np.flatnonzero(select(mesh.node_coords, blk.region, tol))
        for ch in blk.dofs:
            fixed.append(3 * nodes + _AXES[ch])
    fixed = np.unique(np.concatenate(fixed)) if fixed else np.empty(0, dtype=np.int64)

    load = np.zeros(mesh.n_dofs)
    for blk in cfg.loads:
        if blk.elements is not None:
            elems = np.flatnonzero(select(mesh.centroids, blk.elements, tol))
            nodes = mesh.connectivity[elems][:, np.array(blk.local_nodes) - 1].ravel()
        else:
            nodes = np.flatnonzero(select(mesh.node_coords, blk.region, tol))
        if nodes.size == 0:
            raise ConfigError(f"[load.{blk.name}] selects no nodes", cfg.source)
        for a in range(3):
            if blk.force[a] != 0.0:
                np.add.at(load, 3 * nodes + a, blk.force[a])
    load[fixed] = 0.0
    dofs = np.flatnonzero(load)
    try:
        return BoundaryConditions(fixed, dofs, load[dofs])
    except ValueError as exc:
        raise ConfigError(str(exc), cfg.source) from exc


def mmos_params(cfg, mesh):
    lo, hi = mesh.bounds()
    eps = cfg.epsilon if cfg.epsilon else 1e-8 * max(float(np.linalg.norm(hi - lo)), cfg.grid.edge_len)
    return mmos.MmosParams(alpha=cfg.alpha, epsilon=eps, rho_min=cfg.rho_min, eta=cfg.eta)


def initial_masks(cfg, mesh):
    if cfg.mask_file:
        path = Path(cfg.mask_file)
        if not path.is_absolute() and cfg.source:
            path = Path(cfg.source).parent / path
        return mmos.read_masks(path)
    return init_mask_grid(mesh.bounds(), cfg.mask_grid, cfg.foci_offset, cfg.d0)


def build_problem(cfg, mesh=None, kernel=None, masks=None, out_dir=None):
    """Assemble an :class:`OptProblem` from a parsed config."""
    mesh = mesh if mesh is not None else build_mesh(cfg.grid)
    kernel = kernel if kernel is not None else element_kernel(cfg.grid.edge_len, cfg.material)
    bc = build_boundary_conditions(cfg, mesh)
    masks = initial_masks(cfg, mesh) if masks is None else mmos.as_masks(masks)
    lower, upper = default_bounds(mesh, masks.shape[0], cfg.margin, cfg.d_min, cfg.d_max)
    return OptProblem(mesh=mesh, kernel=kernel, bc=bc, masks=masks,
                      params=mmos_params(cfg, mesh), vf=cfg.vf, lower=lower,
                      upper=upper, max_outer_iter=cfg.max_outer_iter,
                      snapshot_interval=cfg.snapshot_interval,
                      out_dir=out_dir if out_dir is not None else cfg.output,
                      pcg=PcgSettings(cfg.rel_tol, cfg.max_iter),
                      move_limit=cfg.move_limit, stagnation_tol=cfg.stagnation_tol,
                      optimizer=cfg.algorithm)
