"""Rectilinear grid construction for the field solver.

Grid lines always include every solid boundary coordinate. Between mandatory
lines, spacing follows a Lipschitz size field: cells adjacent to classified
surfaces are at most ``min_cell_um`` wide and sizes grow away from surfaces
no faster than ``max_growth_ratio``. Short vacuum gaps bounded by conductors
on both sides (the parallel-plate gap) are meshed uniformly at ``min_cell_um``
so the main energy region is well resolved.

Coordinates inside the grid are in meters; this is the single point where
the micrometer-based geometry is converted to SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .constants import UM
from .errors import GeometryError, MeshBudgetExceeded
from .geometry import DeviceGeometry, classify_surfaces, validate

_LINE_TOL_UM = 1e-9


@dataclass(frozen=True)
class MeshPolicy:
    """Knobs controlling grid resolution.

    min_cell_um is the cell size used against classified surfaces (and
    across short conductor-bounded gaps). refine_near_surfaces=False drops
    all surface constraints, leaving only mandatory lines and max_cell_um.
    max_cell_um=None picks extent/10 per axis.
    """

    min_cell_um: float = defaults.MIN_CELL_UM
    refine_near_surfaces: bool = True
    max_growth_ratio: float = defaults.MAX_GROWTH_RATIO
    max_cell_um: float | None = None
    uniform_gap_um: float = defaults.UNIFORM_GAP_UM
    max_cells: int = defaults.MAX_CELLS
    max_aspect: float = defaults.MAX_ASPECT

    def __post_init__(self):
        if self.min_cell_um <= 0:
            raise GeometryError("min_cell_um must be > 0")
        if self.max_growth_ratio <= 1.0:
            raise GeometryError("max_growth_ratio must be > 1")


@dataclass
class RectilinearGrid:
    """Tensor-product grid with per-cell permittivity and per-node net ids."""

    axes: tuple[np.ndarray, np.ndarray, np.ndarray]  # meters
    eps_cell: np.ndarray          # (nx-1, ny-1, nz-1) relative permittivity
    cell_kind: np.ndarray         # int8: 0 vacuum, 1 dielectric, 2 conductor
    node_net: np.ndarray          # (nx, ny, nz) int32, -1 = free
    net_names: tuple[str, ...]
    geometry: DeviceGeometry
    policy: MeshPolicy
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.shape
        return (nx - 1) * (ny - 1) * (nz - 1)

    def spacings(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.diff(a) for a in self.axes)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(0.5 * (a[1:] + a[:-1]) for a in self.axes)

    def net_index(self, name: str) -> int:
        try:
            return self.net_names.index(name)
        except ValueError:
            from .errors import NetNotFound
            raise NetNotFound(f"net {name!r} not in grid") from None

    def line_index(self, axis: int, coord_m: float) -> int:
        ax = self.axes[axis]
        i = int(np.argmin(np.abs(ax - coord_m)))
        if abs(ax[i] - coord_m) > 1e-12 + 1e-9 * max(1.0, abs(coord_m)):
            raise GeometryError(
                f"coordinate {coord_m} is not a grid line on axis {axis}"
            )
        return i


# ----------------------------------------------------------------------
# 1D subdivision
# ----------------------------------------------------------------------

def _size_field(x: np.ndarray, targets: np.ndarray, slope: float,
                hmax: float, hmin: float) -> np.ndarray:
    h = np.full_like(x, hmax)
    for c in targets:
        h = np.minimum(h, hmin + slope * np.abs(x - c))
    return np.maximum(h, 1e-6 * hmin)


def _subdivide_interval(a: float, b: float, targets: np.ndarray,
                        policy: MeshPolicy, hmax: float) -> np.ndarray:
    """Interior points of [a, b] placed by equal arc length of 1/h(x)."""
    length = b - a
    hmin = policy.min_cell_um
    if length <= hmax * (1 + 1e-9) and (
        not policy.refine_near_surfaces or length <= hmin * (1 + 1e-9)
    ):
        return np.empty(0)
    if not policy.refine_near_surfaces or targets.size == 0:
        n = max(1, math.ceil(length / hmax - 1e-9))
        return np.linspace(a, b, n + 1)[1:-1]
    # Slightly shallower slope than (ratio - 1) keeps the realized
    # neighbor-cell ratio strictly under max_growth_ratio.
    slope = 0.95 * (policy.max_growth_ratio - 1.0)
    xs = np.linspace(a, b, 4097)
    h = _size_field(xs, targets, slope, hmax, hmin)
    inv = 1.0 / h
    t = np.concatenate(([0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(xs))))
    total = t[-1]
    n = max(1, math.ceil(total - 1e-9))
    return np.interp(np.linspace(0.0, total, n + 1)[1:-1], t, xs)


def _axis_lines(geometry: DeviceGeometry, axis: int, policy: MeshPolicy,
                facet_coords: set[float], conductor_coords: set[float]) -> np.ndarray:
    lo, hi = geometry.domain[2 * axis], geometry.domain[2 * axis + 1]
    mandatory = {lo, hi}
    for s in geometry.solids:
        b0, b1 = s.axis_bounds(axis)
        mandatory.update((b0, b1))
    lines = sorted(mandatory)
    # collapse near-duplicates
    merged = [lines[0]]
    for c in lines[1:]:
        if c - merged[-1] > _LINE_TOL_UM:
            merged.append(c)
    hmax = policy.max_cell_um if policy.max_cell_um is not None else (hi - lo) / 10.0
    hmax = max(hmax, policy.min_cell_um)
    targets = np.array(sorted(facet_coords)) if policy.refine_near_surfaces else np.empty(0)

    out = []
    for a, b in zip(merged[:-1], merged[1:]):
        out.append(a)
        both_conductor = (
            policy.refine_near_surfaces
            and any(abs(a - c) <= _LINE_TOL_UM for c in conductor_coords)
            and any(abs(b - c) <= _LINE_TOL_UM for c in conductor_coords)
        )
        if both_conductor and (b - a) <= policy.uniform_gap_um * (1 + 1e-9):
            n = max(1, math.ceil((b - a) / policy.min_cell_um - 1e-9))
            out.extend(np.linspace(a, b, n + 1)[1:-1])
        else:
            out.extend(_subdivide_interval(a, b, targets, policy, hmax))
    out.append(merged[-1])
    return np.asarray(out)


# ----------------------------------------------------------------------
# grid assembly
# ----------------------------------------------------------------------

def build_grid(geometry: DeviceGeometry,
               policy: MeshPolicy | None = None) -> RectilinearGrid:
    """Mesh a validated geometry onto a tensor-product grid (meters)."""
    geometry = validate(geometry)
    policy = policy or MeshPolicy()
    surfaces = classify_surfaces(geometry)

    facet_coords: list[set[float]] = [set(), set(), set()]
    for f in surfaces.facets:
        facet_coords[f.axis].add(f.coord)
    conductor_coords: list[set[float]] = [set(), set(), set()]
    for s in geometry.conductor_solids():
        for axis in range(3):
            b0, b1 = s.axis_bounds(axis)
            conductor_coords[axis].update((b0, b1))

    axes_um = [
        _axis_lines(geometry, axis, policy, facet_coords[axis],
                    conductor_coords[axis])
        for axis in range(3)
    ]
    nx, ny, nz = (len(a) for a in axes_um)
    if (nx - 1) * (ny - 1) * (nz - 1) > policy.max_cells:
        raise MeshBudgetExceeded(
            f"{(nx - 1) * (ny - 1) * (nz - 1)} cells exceed the budget of "
            f"{policy.max_cells} (policy min_cell_um={policy.min_cell_um})"
        )
    aspect = _worst_aspect(axes_um)
    if aspect > policy.max_aspect:
        raise MeshBudgetExceeded(
            f"worst cell aspect ratio {aspect:.1f} exceeds configured "
            f"max_aspect {policy.max_aspect}"
        )

    eps_cell, cell_kind = _cell_materials(geometry, axes_um)
    node_net, net_names = _node_nets(geometry, axes_um)

    return RectilinearGrid(
        axes=tuple(np.asarray(a) * UM for a in axes_um),
        eps_cell=eps_cell,
        cell_kind=cell_kind,
        node_net=node_net,
        net_names=net_names,
        geometry=geometry,
        policy=policy,
    )


def _worst_aspect(axes_um) -> float:
    mins = [np.min(np.diff(a)) for a in axes_um]
    maxs = [np.max(np.diff(a)) for a in axes_um]
    worst = 1.0
    for i in range(3):
        for j in range(3):
            if i != j:
                worst = max(worst, maxs[i] / mins[j])
    return worst


def _cell_materials(geometry, axes_um):
    centers = [0.5 * (a[1:] + a[:-1]) for a in axes_um]
    shape = tuple(len(c) for c in centers)
    eps = np.ones(shape)
    kind = np.zeros(shape, dtype=np.int8)
    for s in geometry.solids:
        mat = geometry.material_by_name(s.material)
        sel = _cell_selector(centers, s)
        if mat.kind == "conductor":
            kind[sel] = 2
            eps[sel] = 1.0
        elif mat.kind == "dielectric":
            kind[sel] = 1
            eps[sel] = mat.epsilon_r
        else:
            kind[sel] = 0
            eps[sel] = 1.0
    return eps, kind


def _cell_selector(centers, solid):
    masks = []
    for axis in range(3):
        b0, b1 = solid.axis_bounds(axis)
        masks.append((centers[axis] > b0) & (centers[axis] < b1))
    return np.ix_(masks[0], masks[1], masks[2])


def _node_nets(geometry, axes_um):
    net_names = geometry.net_names()
    shape = tuple(len(a) for a in axes_um)
    node_net = np.full(shape, -1, dtype=np.int32)
    for s in geometry.conductor_solids():
        nid = net_names.index(s.net)
        masks = []
        for axis in range(3):
            b0, b1 = s.axis_bounds(axis)
            ax = axes_um[axis]
            masks.append((ax >= b0 - _LINE_TOL_UM) & (ax <= b1 + _LINE_TOL_UM))
        node_net[np.ix_(masks[0], masks[1], masks[2])] = nid
    return node_net, net_names
