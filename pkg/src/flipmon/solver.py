"""Variable-coefficient Laplace solver on rectilinear grids.

Discretization is a node-centered finite-volume (box integration) scheme:
the conductance of the edge between two adjacent nodes is the sum over the
four cell quadrants flanking that edge of eps0*eps_r*(quadrant area)/length.
Because grid lines coincide with all material boundaries, permittivity is
single-valued along every internode segment, so the scheme is consistent and
second order; the discrete energy, conductor charges, and the quadratic form
agree identically (whole-cell quadrature below uses the mean of the four
edge gradients per cell, which makes U_tot == 1/2 sum_i V_i Q_i exact up to
the linear-solve residual).

Large systems are solved with conjugate gradients preconditioned by a
smoothed-aggregation multigrid V-cycle; small systems go through a sparse
direct factorization. Both paths are deterministic: repeated runs on the
same machine produce bit-identical potentials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import defaults
from .constants import EPS0, UM
from .errors import (
    GeometryError,
    NetNotFound,
    NoConvergence,
    PlaneOutsideDomain,
)
from .geometry import DeviceGeometry, validate
from .mesh import MeshPolicy, RectilinearGrid, build_grid

_DIRECT_SOLVE_MAX = 3000
_AXIS_NAMES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


@dataclass
class FieldSolution:
    """Electrostatic potential for one drive configuration."""

    grid: RectilinearGrid
    phi: np.ndarray               # (nx, ny, nz) volts
    drive: dict[str, float]
    residual: float
    iterations: int


@dataclass
class CapacitanceMatrix:
    """Maxwell capacitance matrix over a set of conductor nets (farads)."""

    nets: tuple[str, ...]
    entries: np.ndarray           # symmetrized
    asymmetry: float              # max relative |Cij - Cji| before averaging
    grounded_boundary: bool

    def index(self, net: str) -> int:
        try:
            return self.nets.index(net)
        except ValueError:
            raise NetNotFound(f"net {net!r} not in capacitance matrix") from None

    def mutual(self, a: str, b: str) -> float:
        """Mutual capacitance between two nets: -C_ab of the Maxwell form."""
        return -self.entries[self.index(a), self.index(b)]

    def to_ground(self, net: str) -> float:
        """Row sum: capacitance of the net to everything held at 0 V."""
        return float(np.sum(self.entries[self.index(net)]))


# ----------------------------------------------------------------------
# operator assembly (cached per grid)
# ----------------------------------------------------------------------

def _edge_conductances(grid: RectilinearGrid):
    """Per-axis edge conductance arrays, SI (farads, i.e. eps0 included)."""
    dx, dy, dz = grid.spacings()
    eps = grid.eps_cell
    out = []
    spac = (dx, dy, dz)
    for axis in range(3):
        t1, t2 = [a for a in range(3) if a != axis]
        # quadrant "areas"/4 on the transverse axes
        qa = 0.25 * np.einsum(
            "i,j->ij", spac[t1], spac[t2]
        )
        shp = [1, 1, 1]
        shp[t1], shp[t2] = len(spac[t1]), len(spac[t2])
        p = eps * qa.reshape(shp)
        # sum the four quadrants around each transverse node line
        pad_shape = list(p.shape)
        pad_shape[t1] += 2
        pad_shape[t2] += 2
        pp = np.zeros(pad_shape)
        sl = [slice(None)] * 3
        sl[t1] = slice(1, -1)
        sl[t2] = slice(1, -1)
        pp[tuple(sl)] = p

        def quad(o1, o2):
            s = [slice(None)] * 3
            n1, n2 = pad_shape[t1], pad_shape[t2]
            s[t1] = slice(o1, n1 - 1 + o1)
            s[t2] = slice(o2, n2 - 1 + o2)
            return pp[tuple(s)]

        s4 = quad(0, 0) + quad(0, 1) + quad(1, 0) + quad(1, 1)
        dshape = [1, 1, 1]
        dshape[axis] = len(spac[axis])
        g = EPS0 * s4 / spac[axis].reshape(dshape)
        out.append(g)
    return out


def _operators(grid: RectilinearGrid) -> dict:
    ops = grid._cache.get("ops")
    if ops is not None:
        return ops
    nx, ny, nz = grid.shape
    nn = grid.n_nodes
    node_ids = np.arange(nn, dtype=np.int64).reshape(nx, ny, nz)

    gx, gy, gz = _edge_conductances(grid)
    e_i0 = np.concatenate([
        node_ids[:-1, :, :].ravel(),
        node_ids[:, :-1, :].ravel(),
        node_ids[:, :, :-1].ravel(),
    ])
    e_i1 = np.concatenate([
        node_ids[1:, :, :].ravel(),
        node_ids[:, 1:, :].ravel(),
        node_ids[:, :, 1:].ravel(),
    ])
    e_g = np.concatenate([gx.ravel(), gy.ravel(), gz.ravel()])

    net_flat = grid.node_net.ravel()
    grounded = np.zeros((nx, ny, nz), dtype=bool)
    faces = grid.geometry.outer_boundary
    slicers = {
        "xmin": (0, slice(None), slice(None)),
        "xmax": (-1, slice(None), slice(None)),
        "ymin": (slice(None), 0, slice(None)),
        "ymax": (slice(None), -1, slice(None)),
        "zmin": (slice(None), slice(None), 0),
        "zmax": (slice(None), slice(None), -1),
    }
    from .geometry import BOUNDARY_FACES
    for face, kind in zip(BOUNDARY_FACES, faces):
        if kind == "grounded":
            grounded[slicers[face]] = True
    grounded_flat = grounded.ravel() & (net_flat < 0)

    dirichlet = (net_flat >= 0) | grounded_flat
    free = ~dirichlet
    nf = int(np.count_nonzero(free))
    perm = np.full(nn, -1, dtype=np.int64)
    perm[free] = np.arange(nf)

    f0 = free[e_i0]
    f1 = free[e_i1]
    both = f0 & f1
    r = perm[e_i0[both]]
    c = perm[e_i1[both]]
    v = e_g[both]
    diag = (
        np.bincount(perm[e_i0[f0]], weights=e_g[f0], minlength=nf)
        + np.bincount(perm[e_i1[f1]], weights=e_g[f1], minlength=nf)
    )
    rows = np.concatenate([r, c, np.arange(nf)])
    cols = np.concatenate([c, r, np.arange(nf)])
    vals = np.concatenate([-v, -v, diag])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nf, nf)).tocsr()

    # free<->dirichlet edges feed the right-hand side
    fd = f0 & ~f1
    df = ~f0 & f1
    rhs_rows = np.concatenate([perm[e_i0[fd]], perm[e_i1[df]]])
    rhs_src = np.concatenate([e_i1[fd], e_i0[df]])
    rhs_g = np.concatenate([e_g[fd], e_g[df]])

    ops = {
        "edges": (e_i0, e_i1, e_g),
        "net_flat": net_flat,
        "grounded_flat": grounded_flat,
        "free": free,
        "perm": perm,
        "nf": nf,
        "A": A,
        "rhs": (rhs_rows, rhs_src, rhs_g),
    }
    grid._cache["ops"] = ops
    return ops


def _preconditioner(grid: RectilinearGrid, A):
    # Classical AMG semi-coarsens along the strong couplings created by
    # high-aspect cells, which smoothed aggregation handles poorly here.
    ml = grid._cache.get("ml")
    if ml is None:
        ml = pyamg.ruge_stuben_solver(A, max_coarse=300)
        grid._cache["ml"] = ml
    return ml.aspreconditioner(cycle="V")


def _dirichlet_values(grid: RectilinearGrid, ops, drive: dict[str, float]) -> np.ndarray:
    for net, volt in drive.items():
        if net not in grid.net_names:
            raise NetNotFound(f"drive names unknown net {net!r}")
        if not np.isfinite(volt):
            raise GeometryError(f"drive voltage for {net!r} is not finite")
    volts = np.zeros(len(grid.net_names))
    for i, name in enumerate(grid.net_names):
        volts[i] = drive.get(name, 0.0)
    xd = np.zeros(grid.n_nodes)
    net_flat = ops["net_flat"]
    mask = net_flat >= 0
    xd[mask] = volts[net_flat[mask]]
    # grounded outer boundary nodes stay at 0
    return xd


# ----------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------

def solve(grid: RectilinearGrid, drive: dict[str, float],
          tol: float = defaults.SOLVER_TOL,
          max_iter: int = defaults.SOLVER_MAX_ITER) -> FieldSolution:
    """Solve div(eps grad phi) = 0 with conductor nets at drive voltages.

    Free-node relative residual is at most ``tol`` on return; conductor
    nodes carry their drive voltage exactly. Raises NoConvergence if the
    iteration budget is exhausted.
    """
    if tol <= 0:
        raise GeometryError("tol must be > 0")
    ops = _operators(grid)
    xd = _dirichlet_values(grid, ops, drive)

    nf = ops["nf"]
    b = np.zeros(nf)
    rhs_rows, rhs_src, rhs_g = ops["rhs"]
    if len(rhs_rows):
        b = np.bincount(rhs_rows, weights=rhs_g * xd[rhs_src], minlength=nf)

    bnorm = float(np.linalg.norm(b))
    if nf == 0 or bnorm == 0.0:
        xf = np.zeros(nf)
        res, iters = 0.0, 0
    else:
        A = ops["A"]
        if nf <= _DIRECT_SOLVE_MAX:
            xf = spla.spsolve(A.tocsc(), b)
            iters = 1
        else:
            M = _preconditioner(grid, A)
            count = {"n": 0}

            def _cb(_xk):
                count["n"] += 1

            xf, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter,
                               M=M, callback=_cb)
            iters = count["n"]
            if info != 0:
                res = float(np.linalg.norm(b - A @ xf) / bnorm)
                raise NoConvergence(iters, res)
        res = float(np.linalg.norm(b - A @ xf) / bnorm)
        if res > tol * 1.001 and nf > _DIRECT_SOLVE_MAX:
            raise NoConvergence(iters, res)

    phi = xd.copy()
    phi[ops["free"]] = xf
    return FieldSolution(
        grid=grid,
        phi=phi.reshape(grid.shape),
        drive=dict(drive),
        residual=res,
        iterations=iters,
    )


def superpose(solutions: list[FieldSolution],
              coeffs: list[float]) -> FieldSolution:
    """Linear combination of solutions on one grid (exact by linearity)."""
    if len(solutions) != len(coeffs) or not solutions:
        raise GeometryError("superpose needs matching solutions and coeffs")
    grid = solutions[0].grid
    for s in solutions[1:]:
        if s.grid is not grid:
            raise GeometryError("superpose requires a shared grid")
    phi = np.zeros_like(solutions[0].phi)
    drive: dict[str, float] = {}
    res = 0.0
    for s, c in zip(solutions, coeffs):
        phi += c * s.phi
        res += abs(c) * s.residual
        for net, v in s.drive.items():
            drive[net] = drive.get(net, 0.0) + c * v
    return FieldSolution(
        grid=grid,
        phi=phi,
        drive=drive,
        residual=res,
        iterations=max(s.iterations for s in solutions),
    )


# ----------------------------------------------------------------------
# derived quantities
# ----------------------------------------------------------------------

def cell_energy(solution: FieldSolution) -> np.ndarray:
    """Electric-field energy per cell (joules).

    Uses the mean of the four edge gradients per cell and direction, which
    is the quadrature consistent with the box-integration stencil: summed
    over all cells it reproduces the discrete quadratic form exactly.
    """
    grid = solution.grid
    phi = solution.phi
    dx, dy, dz = grid.spacings()

    def mean_sq(axis, spacing):
        d = np.diff(phi, axis=axis)
        shape = [1, 1, 1]
        shape[axis] = len(spacing)
        d = d / spacing.reshape(shape)
        t1, t2 = [a for a in range(3) if a != axis]
        out = 0.0
        for o1 in (0, 1):
            for o2 in (0, 1):
                s = [slice(None)] * 3
                s[t1] = slice(o1, d.shape[t1] - 1 + o1)
                s[t2] = slice(o2, d.shape[t2] - 1 + o2)
                out = out + d[tuple(s)] ** 2
        return 0.25 * out

    vol = np.einsum("i,j,k->ijk", dx, dy, dz)
    dens = mean_sq(0, dx) + mean_sq(1, dy) + mean_sq(2, dz)
    return 0.5 * EPS0 * grid.eps_cell * vol * dens


def energy(solution: FieldSolution) -> float:
    """Total field energy U_tot = 1/2 integral eps |grad phi|^2 dV (joules)."""
    return float(np.sum(cell_energy(solution)))


def charge_on_net(solution: FieldSolution, net: str) -> float:
    """Charge on a conductor net from the discrete flux integral (coulombs).

    Sums the finite-volume fluxes leaving the net's node set, which is the
    Gauss-law surface integral evaluated half a cell off the conductor.
    """
    grid = solution.grid
    nid = grid.net_index(net)
    ops = _operators(grid)
    e_i0, e_i1, e_g = ops["edges"]
    nets = ops["net_flat"]
    phi = solution.phi.ravel()
    out = (nets[e_i0] == nid) & (nets[e_i1] != nid)
    q = np.sum(e_g[out] * (phi[e_i0[out]] - phi[e_i1[out]]))
    inc = (nets[e_i1] == nid) & (nets[e_i0] != nid)
    q += np.sum(e_g[inc] * (phi[e_i1[inc]] - phi[e_i0[inc]]))
    return float(q)


@dataclass
class CapExtraction:
    """Capacitance matrix together with the grid and per-net solutions."""

    cmat: CapacitanceMatrix
    grid: RectilinearGrid
    solutions: dict[str, FieldSolution]


def extract_capacitance(
    geometry: DeviceGeometry,
    policy: MeshPolicy | None = None,
    tol: float = defaults.SOLVER_TOL,
    max_iter: int = defaults.SOLVER_MAX_ITER,
    nets: tuple[str, ...] | None = None,
    grid: RectilinearGrid | None = None,
) -> CapExtraction:
    """One unit-voltage solve per net; C_ij = Q_j under drive i.

    ``nets`` defaults to every net that is not a ground-role net (ground
    planes are held at 0 V, so their coupling shows up in the row sums).
    """
    geometry = validate(geometry)
    if grid is None:
        grid = build_grid(geometry, policy)
    if nets is None:
        roles = {n.name: n.role for n in geometry.nets}
        nets = tuple(n for n in grid.net_names if roles.get(n) != "ground")
    if not nets:
        raise NetNotFound("no nets to extract")

    solutions: dict[str, FieldSolution] = {}
    n = len(nets)
    raw = np.zeros((n, n))
    for i, name in enumerate(nets):
        sol = solve(grid, {name: 1.0}, tol=tol, max_iter=max_iter)
        solutions[name] = sol
        for j, other in enumerate(nets):
            raw[i, j] = charge_on_net(sol, other)

    asym = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            denom = max(abs(raw[i, j]), abs(raw[j, i]), 1e-30)
            asym = max(asym, abs(raw[i, j] - raw[j, i]) / denom)
    sym = 0.5 * (raw + raw.T)
    grounded = "grounded" in geometry.outer_boundary
    cmat = CapacitanceMatrix(
        nets=tuple(nets), entries=sym, asymmetry=asym, grounded_boundary=grounded
    )
    return CapExtraction(cmat=cmat, grid=grid, solutions=solutions)


def capacitance_matrix(
    geometry: DeviceGeometry,
    policy: MeshPolicy | None = None,
    tol: float = defaults.SOLVER_TOL,
    max_iter: int = defaults.SOLVER_MAX_ITER,
    nets: tuple[str, ...] | None = None,
) -> CapacitanceMatrix:
    return extract_capacitance(geometry, policy, tol, max_iter, nets).cmat


# ----------------------------------------------------------------------
# field sampling
# ----------------------------------------------------------------------

@dataclass
class FieldSlice:
    """|E| sampled on an axis-aligned plane, for rendering or CSV export."""

    axis: int
    value_m: float
    u_m: np.ndarray
    v_m: np.ndarray
    emag: np.ndarray              # (len(u), len(v)) V/m, 0 inside conductors


def field_slice(solution: FieldSolution, axis, value_m: float,
                nu: int = 160, nv: int = 160) -> FieldSlice:
    """Sample |grad phi| on a regular grid over one plane.

    The plane is axis=value (meters). Samples inside conductor solids are
    exactly zero. Raises PlaneOutsideDomain when the plane misses the box.
    """
    grid = solution.grid
    try:
        ax = _AXIS_NAMES[axis]
    except KeyError:
        raise GeometryError(f"unknown axis {axis!r}") from None
    dom = grid.geometry.domain
    lo, hi = dom[2 * ax] * UM, dom[2 * ax + 1] * UM
    if not (lo <= value_m <= hi):
        raise PlaneOutsideDomain(
            f"plane {('x', 'y', 'z')[ax]}={value_m} m outside [{lo}, {hi}]"
        )
    t1, t2 = [a for a in range(3) if a != ax]
    axes = grid.axes

    def midpoints(a, n):
        edges = np.linspace(a[0], a[-1], n + 1)
        return 0.5 * (edges[1:] + edges[:-1])

    u = midpoints(axes[t1], nu)
    v = midpoints(axes[t2], nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = [None, None, None]
    pts[ax] = np.full_like(U, min(max(value_m, axes[ax][0]), axes[ax][-1]))
    pts[t1] = U
    pts[t2] = V

    ex, ey, ez = _gradient_at(grid, solution.phi, pts[0], pts[1], pts[2])
    emag = np.sqrt(ex**2 + ey**2 + ez**2)

    # zero inside conductors
    xum, yum, zum = (p / UM for p in pts)
    inside = np.zeros(U.shape, dtype=bool)
    for s in grid.geometry.conductor_solids():
        b = s.bounds
        inside |= (
            (xum >= b[0]) & (xum <= b[1])
            & (yum >= b[2]) & (yum <= b[3])
            & (zum >= b[4]) & (zum <= b[5])
        )
    emag = np.where(inside, 0.0, emag)
    return FieldSlice(axis=ax, value_m=value_m, u_m=u, v_m=v, emag=emag)


def _gradient_at(grid, phi, x, y, z):
    """Gradient of the trilinear interpolant of phi at arbitrary points."""
    idx = []
    frac = []
    for a, q in zip(grid.axes, (x, y, z)):
        i = np.clip(np.searchsorted(a, q, side="right") - 1, 0, len(a) - 2)
        idx.append(i)
        frac.append((q - a[i]) / (a[i + 1] - a[i]))
    i, j, k = idx
    u, v, w = [np.clip(f, 0.0, 1.0) for f in frac]
    d = [np.diff(a) for a in grid.axes]

    def P(oi, oj, ok):
        return phi[i + oi, j + oj, k + ok]

    ex = (
        (P(1, 0, 0) - P(0, 0, 0)) * (1 - v) * (1 - w)
        + (P(1, 1, 0) - P(0, 1, 0)) * v * (1 - w)
        + (P(1, 0, 1) - P(0, 0, 1)) * (1 - v) * w
        + (P(1, 1, 1) - P(0, 1, 1)) * v * w
    ) / d[0][i]
    ey = (
        (P(0, 1, 0) - P(0, 0, 0)) * (1 - u) * (1 - w)
        + (P(1, 1, 0) - P(1, 0, 0)) * u * (1 - w)
        + (P(0, 1, 1) - P(0, 0, 1)) * (1 - u) * w
        + (P(1, 1, 1) - P(1, 0, 1)) * u * w
    ) / d[1][j]
    ez = (
        (P(0, 0, 1) - P(0, 0, 0)) * (1 - u) * (1 - v)
        + (P(1, 0, 1) - P(1, 0, 0)) * u * (1 - v)
        + (P(0, 1, 1) - P(0, 1, 0)) * (1 - u) * v
        + (P(1, 1, 1) - P(1, 1, 0)) * u * v
    ) / d[2][k]
    return ex, ey, ez


# ----------------------------------------------------------------------
# potential dump (flat binary + structured text header)
# ----------------------------------------------------------------------

def dump_solution(solution: FieldSolution, prefix) -> tuple[Path, Path]:
    """Write <prefix>.json (header) and <prefix>.f64 (raw potentials)."""
    prefix = Path(prefix)
    header = {
        "shape": list(solution.phi.shape),
        "order": "C",
        "dtype": "float64",
        "axes_m": [a.tolist() for a in solution.grid.axes],
        "drive": solution.drive,
        "residual": solution.residual,
        "iterations": solution.iterations,
    }
    hpath = prefix.with_suffix(".json")
    dpath = prefix.with_suffix(".f64")
    with open(hpath, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    solution.phi.astype("<f8").tofile(dpath)
    return hpath, dpath


def load_dump(prefix) -> tuple[dict, np.ndarray]:
    """Read back a dump written by :func:`dump_solution`."""
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        header = json.load(fh)
    phi = np.fromfile(prefix.with_suffix(".f64"), dtype="<f8")
    return header, phi.reshape(header["shape"])
