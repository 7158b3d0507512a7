"""Flip-chip device geometry: axis-aligned solid models with conductor nets.

A device is described by an outer domain box, an ordered list of axis-aligned
solids (later solids override earlier ones when they overlap), a material
table, named conductor nets, and a thin-interface-layer specification. All
lengths at this level are in micrometers; the field solver converts to SI at
mesh construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .constants import EPS0, E_CHARGE, UM
from . import defaults
from .errors import (
    DanglingReference,
    DegenerateSolid,
    GeometryError,
    OverlapError,
)

MATERIAL_KINDS = ("conductor", "dielectric", "vacuum")
NET_ROLES = ("pad_top", "pad_bottom", "ground", "bump", "other")
SOLID_ROLES = ("", "pad", "ground", "bump", "island", "substrate", "other")
BOUNDARY_FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
BOUNDARY_KINDS = ("grounded", "insulating")

# Offset (um) used when sampling the medium just outside a face. Must be far
# below the smallest feature size (metal films are >= 0.1 um).
_FACE_PROBE_UM = 1e-4
_TOL_UM = 1e-9


@dataclass(frozen=True)
class Material:
    """A named material: conductor, dielectric, or vacuum."""

    name: str
    kind: str
    epsilon_r: float = 1.0

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise GeometryError(f"unknown material kind {self.kind!r}")
        if self.kind == "vacuum" and self.epsilon_r != 1.0:
            raise GeometryError("vacuum must have epsilon_r = 1 exactly")
        if self.kind != "conductor" and self.epsilon_r < 1.0:
            raise GeometryError(
                f"material {self.name!r}: epsilon_r must be >= 1"
            )


@dataclass(frozen=True)
class Solid:
    """Axis-aligned cuboid (x0, x1, y0, y1, z0, z1) in micrometers."""

    bounds: tuple[float, float, float, float, float, float]
    material: str
    net: str | None = None
    role: str = ""

    def __post_init__(self):
        x0, x1, y0, y1, z0, z1 = self.bounds
        if not (x0 < x1 and y0 < y1 and z0 < z1):
            raise DegenerateSolid(
                f"solid {self.role or self.material!r} has non-positive "
                f"extent: {self.bounds}"
            )
        if self.role not in SOLID_ROLES:
            raise GeometryError(f"unknown solid role {self.role!r}")

    def contains(self, x: float, y: float, z: float, tol: float = _TOL_UM) -> bool:
        x0, x1, y0, y1, z0, z1 = self.bounds
        return (
            x0 - tol <= x <= x1 + tol
            and y0 - tol <= y <= y1 + tol
            and z0 - tol <= z <= z1 + tol
        )

    @property
    def center(self) -> tuple[float, float, float]:
        b = self.bounds
        return ((b[0] + b[1]) / 2, (b[2] + b[3]) / 2, (b[4] + b[5]) / 2)

    def axis_bounds(self, axis: int) -> tuple[float, float]:
        return self.bounds[2 * axis], self.bounds[2 * axis + 1]


@dataclass(frozen=True)
class InterfaceSpec:
    """Thin contaminated-layer model at metal/substrate/vacuum boundaries.

    thickness_t is in meters (typical few nm); the layer is never meshed,
    it enters only through the perturbative participation integrals.
    """

    thickness_t: float = defaults.INTERFACE_THICKNESS_M
    epsilon_layer: float = defaults.INTERFACE_EPSILON
    classes: tuple[str, ...] = ("MA", "MS", "SA")

    def __post_init__(self):
        if self.thickness_t <= 0:
            raise GeometryError("interface thickness must be > 0")
        if self.epsilon_layer < 1.0:
            raise GeometryError("interface epsilon must be >= 1")
        for c in self.classes:
            if c not in ("MA", "MS", "SA"):
                raise GeometryError(f"unknown interface class {c!r}")


@dataclass(frozen=True)
class Net:
    name: str
    role: str = "other"

    def __post_init__(self):
        if self.role not in NET_ROLES:
            raise GeometryError(f"unknown net role {self.role!r}")


@dataclass(frozen=True)
class DeviceGeometry:
    """Complete device description. Use :func:`validate` before solving."""

    domain: tuple[float, float, float, float, float, float]
    materials: tuple[Material, ...]
    solids: tuple[Solid, ...]
    nets: tuple[Net, ...]
    interface_spec: InterfaceSpec = field(default_factory=InterfaceSpec)
    outer_boundary: tuple[str, ...] = ("grounded",) * 6
    # z plane separating the bottom chip from the top chip (None: single chip,
    # everything is tagged bottom).
    chip_split_um: float | None = None
    # z extent of the inter-pad vacuum gap, if the device has one.
    gap_z_um: tuple[float, float] | None = None

    # -- lookups ------------------------------------------------------

    def material_by_name(self, name: str) -> Material:
        for m in self.materials:
            if m.name == name:
                return m
        raise DanglingReference(f"unknown material {name!r}")

    def net_by_role(self, role: str) -> Net:
        for n in self.nets:
            if n.role == role:
                return n
        raise DanglingReference(f"no net with role {role!r}")

    def net_names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nets)

    def conductor_solids(self, net: str | None = None) -> tuple[Solid, ...]:
        out = []
        for s in self.solids:
            if self.material_by_name(s.material).kind != "conductor":
                continue
            if net is None or s.net == net:
                out.append(s)
        return tuple(out)

    def occupant_at(self, x: float, y: float, z: float) -> Solid | None:
        """Last solid containing the point (later solids override earlier)."""
        hit = None
        for s in self.solids:
            if s.contains(x, y, z):
                hit = s
        return hit

    def epsilon_at(self, x: float, y: float, z: float) -> float:
        s = self.occupant_at(x, y, z)
        if s is None:
            return 1.0
        m = self.material_by_name(s.material)
        return 1.0 if m.kind == "conductor" else m.epsilon_r

    def side_of(self, z_um: float) -> str:
        """Chip side tag for a z coordinate: 't' (top) or 'b' (bottom)."""
        if self.chip_split_um is None:
            return "b"
        return "t" if z_um > self.chip_split_um else "b"

    def pad_gap_distance(self) -> float:
        """Vertical vacuum gap between pad-role solids of the two pad nets.

        Minimum positive z separation over pairs of 'pad' solids belonging
        to the pad_top and pad_bottom nets.
        """
        top = self.net_by_role("pad_top").name
        bot = self.net_by_role("pad_bottom").name
        pads_t = [s for s in self.conductor_solids(top) if s.role == "pad"]
        pads_b = [s for s in self.conductor_solids(bot) if s.role == "pad"]
        best = math.inf
        for a in pads_t:
            for b in pads_b:
                lo = max(a.bounds[4], b.bounds[4])
                hi = min(a.bounds[5], b.bounds[5])
                if hi <= lo:  # separated in z
                    sep = max(b.bounds[4] - a.bounds[5], a.bounds[4] - b.bounds[5])
                    best = min(best, sep)
        if not math.isfinite(best):
            raise GeometryError("pad nets have no vertically separated pads")
        return best


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def _boxes_touch_or_overlap(a: Solid, b: Solid) -> bool:
    """Closed-box intersection test (shared faces/edges count as touching)."""
    for ax in range(3):
        a0, a1 = a.axis_bounds(ax)
        b0, b1 = b.axis_bounds(ax)
        if a1 < b0 - _TOL_UM or b1 < a0 - _TOL_UM:
            return False
    return True


def validate(geometry: DeviceGeometry) -> DeviceGeometry:
    """Check all geometry invariants; returns the geometry unchanged.

    Raises OverlapError, DanglingReference, DegenerateSolid, or
    GeometryError. Idempotent and cheap, so downstream operations call it
    themselves rather than tracking a separate validated type.
    """
    g = geometry
    names = {m.name for m in g.materials}
    if len(names) != len(g.materials):
        raise GeometryError("duplicate material names")
    net_names = {n.name for n in g.nets}
    if len(net_names) != len(g.nets):
        raise GeometryError("duplicate net names")

    dx0, dx1, dy0, dy1, dz0, dz1 = g.domain
    if not (dx0 < dx1 and dy0 < dy1 and dz0 < dz1):
        raise DegenerateSolid(f"domain has non-positive extent: {g.domain}")

    referenced_nets: set[str] = set()
    for s in g.solids:
        if s.material not in names:
            raise DanglingReference(f"solid references unknown material {s.material!r}")
        mat = g.material_by_name(s.material)
        if (s.net is not None) != (mat.kind == "conductor"):
            raise GeometryError(
                f"solid {s.role or s.material!r}: a net must be set iff the "
                f"material is a conductor (material {mat.name!r} is {mat.kind})"
            )
        if s.net is not None:
            if s.net not in net_names:
                raise DanglingReference(f"solid references unknown net {s.net!r}")
            referenced_nets.add(s.net)
        x0, x1, y0, y1, z0, z1 = s.bounds
        if not (
            dx0 - _TOL_UM <= x0 and x1 <= dx1 + _TOL_UM
            and dy0 - _TOL_UM <= y0 and y1 <= dy1 + _TOL_UM
            and dz0 - _TOL_UM <= z0 and z1 <= dz1 + _TOL_UM
        ):
            raise GeometryError(f"solid {s.bounds} extends outside domain {g.domain}")

    for n in g.nets:
        if n.name not in referenced_nets:
            raise DanglingReference(f"net {n.name!r} has no conductor solids")

    conductors = g.conductor_solids()
    for i, a in enumerate(conductors):
        for b in conductors[i + 1:]:
            if a.net != b.net and _boxes_touch_or_overlap(a, b):
                raise OverlapError(
                    f"nets {a.net!r} and {b.net!r} intersect or share a face "
                    f"(zero gap): {a.bounds} / {b.bounds}"
                )

    for f in g.outer_boundary:
        if f not in BOUNDARY_KINDS:
            raise GeometryError(f"unknown boundary kind {f!r}")
    if len(g.outer_boundary) != 6:
        raise GeometryError("outer_boundary needs one entry per face (6)")
    return g


# ----------------------------------------------------------------------
# surface classification
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceFacet:
    """One classified rectangle of an exterior solid face.

    cls is MA, MS, SA, or BumpSurface; side is 't'/'b'; axis is the normal
    axis (0, 1, 2) with outward direction +-1; rect holds (u0, u1, v0, v1)
    on the two transverse axes in ascending-axis order. eps_adjacent is the
    relative permittivity of the medium the perpendicular field is sampled
    in (vacuum for MA/BumpSurface, the substrate for MS and SA).
    """

    cls: str
    side: str
    axis: int
    coord: float
    outward: int
    rect: tuple[float, float, float, float]
    net: str | None
    eps_adjacent: float

    @property
    def area_um2(self) -> float:
        u0, u1, v0, v1 = self.rect
        return (u1 - u0) * (v1 - v0)


@dataclass(frozen=True)
class SurfaceSet:
    facets: tuple[SurfaceFacet, ...]

    def select(self, cls: str | None = None, side: str | None = None) -> tuple[SurfaceFacet, ...]:
        out = self.facets
        if cls is not None:
            out = tuple(f for f in out if f.cls == cls)
        if side is not None:
            out = tuple(f for f in out if f.side == side)
        return out

    def area_um2(self, cls: str | None = None, side: str | None = None) -> float:
        return sum(f.area_um2 for f in self.select(cls, side))


def _face_rect_overlay(geometry, solid, axis, outward):
    """Split one face of a solid into sub-rectangles by all solid edges.

    Yields (rect, probe_material_kind, probe_eps, probe_solid) for each
    sub-rectangle, where the probe samples the medium a tiny distance
    outside the face at the sub-rectangle center.
    """
    ua, va = [a for a in range(3) if a != axis]
    coord = solid.axis_bounds(axis)[1 if outward > 0 else 0]
    u0, u1 = solid.axis_bounds(ua)
    v0, v1 = solid.axis_bounds(va)

    ubreaks = {u0, u1}
    vbreaks = {v0, v1}
    for other in geometry.solids:
        if other is solid:
            continue
        ob0, ob1 = other.axis_bounds(ua)
        ubreaks.update(c for c in (ob0, ob1) if u0 < c < u1)
        ob0, ob1 = other.axis_bounds(va)
        vbreaks.update(c for c in (ob0, ob1) if v0 < c < v1)
    us = sorted(ubreaks)
    vs = sorted(vbreaks)

    for i in range(len(us) - 1):
        for j in range(len(vs) - 1):
            uc = 0.5 * (us[i] + us[i + 1])
            vc = 0.5 * (vs[j] + vs[j + 1])
            point = [0.0, 0.0, 0.0]
            point[axis] = coord + outward * _FACE_PROBE_UM
            point[ua] = uc
            point[va] = vc
            occ = geometry.occupant_at(*point)
            if occ is None:
                kind, eps = "vacuum", 1.0
            else:
                mat = geometry.material_by_name(occ.material)
                kind, eps = mat.kind, mat.epsilon_r
            yield (us[i], us[i + 1], vs[j], vs[j + 1]), kind, eps, occ


def _on_domain_boundary(geometry, axis, coord) -> bool:
    lo, hi = geometry.domain[2 * axis], geometry.domain[2 * axis + 1]
    return abs(coord - lo) < _TOL_UM or abs(coord - hi) < _TOL_UM


def classify_surfaces(geometry: DeviceGeometry) -> SurfaceSet:
    """Label every exterior solid face.

    Conductor faces become MA (facing vacuum) or MS (facing substrate);
    lateral faces of bump-role solids become BumpSurface. Dielectric faces
    facing vacuum become SA. Faces buried in another solid of the same net
    (or another dielectric) and faces lying on the domain boundary are not
    emitted. Chip side ('t'/'b') comes from the owning solid's center.
    """
    geometry = validate(geometry)
    facets: list[SurfaceFacet] = []
    for solid in geometry.solids:
        mat = geometry.material_by_name(solid.material)
        if mat.kind == "vacuum":
            continue
        side = geometry.side_of(solid.center[2])
        for axis in range(3):
            for outward in (-1, 1):
                coord = solid.axis_bounds(axis)[1 if outward > 0 else 0]
                if _on_domain_boundary(geometry, axis, coord):
                    continue
                for rect, kind, eps, _occ in _face_rect_overlay(
                    geometry, solid, axis, outward
                ):
                    if mat.kind == "conductor":
                        if kind == "conductor":
                            continue  # buried contact (same net by validation)
                        if kind == "dielectric":
                            cls, eps_adj = "MS", eps
                        elif solid.role == "bump" and axis != 2:
                            cls, eps_adj = "BumpSurface", 1.0
                        else:
                            cls, eps_adj = "MA", 1.0
                    else:  # dielectric
                        if kind != "vacuum":
                            continue
                        cls, eps_adj = "SA", mat.epsilon_r
                    facets.append(
                        SurfaceFacet(
                            cls=cls,
                            side=side,
                            axis=axis,
                            coord=coord,
                            outward=outward,
                            rect=rect,
                            net=solid.net,
                            eps_adjacent=eps_adj,
                        )
                    )
    return SurfaceSet(facets=tuple(facets))


# ----------------------------------------------------------------------
# templates
# ----------------------------------------------------------------------

def _standard_materials(sub_epsilon: float) -> tuple[Material, ...]:
    return (
        Material("vacuum", "vacuum", 1.0),
        Material("substrate", "dielectric", sub_epsilon),
        Material("metal", "conductor"),
    )


def _ring(outer: float, inner: float, z0: float, z1: float, net: str,
          role: str) -> list[Solid]:
    """Square annulus as four rectangles (union semantics, same net)."""
    o, i = outer / 2, inner / 2
    mk = lambda b: Solid(b, "metal", net=net, role=role)
    return [
        mk((-o, o, i, o, z0, z1)),
        mk((-o, o, -o, -i, z0, z1)),
        mk((-o, -i, -i, i, z0, z1)),
        mk((i, o, -i, i, z0, z1)),
    ]


def flipmon_template(
    pad_side: float = defaults.PAD_SIDE_UM,
    gap_d: float = defaults.GAP_UM,
    bump_radius: float = defaults.BUMP_RADIUS_UM,
    substrate_thickness: float = defaults.SUBSTRATE_THICKNESS_UM,
    sub_epsilon: float = defaults.SUBSTRATE_EPSILON,
    *,
    island_side: float = defaults.ISLAND_SIDE_UM,
    island_clearance: float = defaults.ISLAND_CLEARANCE_UM,
    ground_clearance: float = defaults.GROUND_CLEARANCE_UM,
    ground_clearance_top: float | None = None,
    pad_top_overhang: float = defaults.PAD_TOP_OVERHANG_UM,
    metal_thickness: float = defaults.METAL_THICKNESS_UM,
    lateral_factor: float = 3.0,
    z_margin_factor: float = 1.0,
    interface_spec: InterfaceSpec | None = None,
) -> DeviceGeometry:
    """Vacuum-gap flip-chip qubit stack (all lengths in micrometers).

    Bottom chip (carrier): substrate, a ring-shaped capacitor pad with a
    central junction island, and a surrounding ground plane. The junction
    itself is a lumped element and is not drawn. Top chip: a square pad
    facing the ring across the vacuum gap, its own ground plane, and the
    top substrate. An indium bump, modeled as a square prism of equal
    cross-section, spans the gap and galvanically joins the island to the
    top pad, so island + bump + top pad form one net.
    """
    if gap_d <= 0:
        raise GeometryError("gap_d must be > 0")
    if bump_radius <= 0:
        raise GeometryError("bump_radius must be > 0 (degenerate bump)")
    if substrate_thickness <= 0:
        raise GeometryError("substrate_thickness must be > 0")

    bump_side = bump_radius * math.sqrt(math.pi)
    ring_inner = island_side + 2 * island_clearance
    if bump_side > island_side or bump_side > pad_side + 2 * pad_top_overhang:
        raise GeometryError(
            f"bump (side {bump_side:.2f} um) does not fit inside the pad "
            f"footprint (island {island_side} um, pad {pad_side} um)"
        )
    if ring_inner >= pad_side:
        raise GeometryError("island plus clearance exceeds pad footprint")

    t_m = metal_thickness
    z_bot0, z_bot1 = 0.0, t_m                      # bottom metallization
    z_top0, z_top1 = t_m + gap_d, 2 * t_m + gap_d  # top metallization
    z_sub_b = -substrate_thickness
    z_sub_t = z_top1 + substrate_thickness

    if ground_clearance_top is None:
        ground_clearance_top = ground_clearance
    pad_top_side = pad_side + 2 * pad_top_overhang
    gnd_inner_b = pad_side + 2 * ground_clearance
    gnd_inner_t = pad_top_side + 2 * ground_clearance_top
    half_w = max(
        lateral_factor * pad_side,
        gnd_inner_b + 80.0,
        gnd_inner_t + 80.0,
    ) / 2
    zm = z_margin_factor * (z_sub_t - z_sub_b)
    domain = (-half_w, half_w, -half_w, half_w, z_sub_b - zm, z_sub_t + zm)

    solids: list[Solid] = [
        Solid((-half_w, half_w, -half_w, half_w, z_sub_b, 0.0),
              "substrate", role="substrate"),
        Solid((-half_w, half_w, -half_w, half_w, z_top1, z_sub_t),
              "substrate", role="substrate"),
    ]
    # bottom chip metallization
    solids += _ring(pad_side, ring_inner, z_bot0, z_bot1, "pad_bottom", "pad")
    i2 = island_side / 2
    solids.append(Solid((-i2, i2, -i2, i2, z_bot0, z_bot1),
                        "metal", net="pad_top", role="island"))
    solids += _ring(2 * half_w, gnd_inner_b, z_bot0, z_bot1, "ground", "ground")
    # bump spanning the gap
    b2 = bump_side / 2
    solids.append(Solid((-b2, b2, -b2, b2, z_bot1, z_top0),
                        "metal", net="pad_top", role="bump"))
    # top chip metallization
    p2 = pad_top_side / 2
    solids.append(Solid((-p2, p2, -p2, p2, z_top0, z_top1),
                        "metal", net="pad_top", role="pad"))
    solids += _ring(2 * half_w, gnd_inner_t, z_top0, z_top1, "ground", "ground")

    geom = DeviceGeometry(
        domain=domain,
        materials=_standard_materials(sub_epsilon),
        solids=tuple(solids),
        nets=(
            Net("pad_top", "pad_top"),
            Net("pad_bottom", "pad_bottom"),
            Net("ground", "ground"),
        ),
        interface_spec=interface_spec or InterfaceSpec(),
        chip_split_um=t_m + gap_d / 2,
        gap_z_um=(z_bot1, z_top0),
    )
    return validate(geom)


def planar_transmon_template(
    pad_width: float = defaults.PLANAR_PAD_WIDTH_UM,
    pad_height: float = defaults.PLANAR_PAD_HEIGHT_UM,
    pad_gap: float = defaults.PLANAR_PAD_GAP_UM,
    sub_epsilon: float = defaults.SUBSTRATE_EPSILON,
    *,
    substrate_thickness: float = defaults.SUBSTRATE_THICKNESS_UM,
    ground_clearance: float = defaults.GROUND_CLEARANCE_UM,
    metal_thickness: float = defaults.METAL_THICKNESS_UM,
    lateral_factor: float = 3.0,
    z_margin_factor: float = 1.0,
    interface_spec: InterfaceSpec | None = None,
) -> DeviceGeometry:
    """Coplanar two-pad floating capacitor on one substrate, ground around.

    The two electrodes sit side by side along x, separated by pad_gap, and
    take the pad_top / pad_bottom net roles (electrode A / electrode B).
    """
    if pad_gap <= 0:
        # let validate() report the overlap for an exact zero
        pad_gap = max(pad_gap, 0.0)
    t_m = metal_thickness
    extent_x = 2 * pad_width + pad_gap
    half_wx = lateral_factor * extent_x / 2
    half_wy = max(lateral_factor * pad_height / 2, half_wx / 2)
    z_sub = -substrate_thickness
    zm = z_margin_factor * max(substrate_thickness, extent_x / 2)
    domain = (-half_wx, half_wx, -half_wy, half_wy, z_sub - zm, t_m + zm)

    h2 = pad_height / 2
    xa0, xa1 = -pad_gap / 2 - pad_width, -pad_gap / 2
    xb0, xb1 = pad_gap / 2, pad_gap / 2 + pad_width
    gnd_x = extent_x / 2 + ground_clearance
    gnd_y = pad_height / 2 + ground_clearance

    solids: list[Solid] = [
        Solid((-half_wx, half_wx, -half_wy, half_wy, z_sub, 0.0),
              "substrate", role="substrate"),
        Solid((xa0, xa1, -h2, h2, 0.0, t_m), "metal", net="pad_a", role="pad"),
        Solid((xb0, xb1, -h2, h2, 0.0, t_m), "metal", net="pad_b", role="pad"),
    ]
    mk = lambda b: Solid(b, "metal", net="ground", role="ground")
    solids += [
        mk((-half_wx, half_wx, gnd_y, half_wy, 0.0, t_m)),
        mk((-half_wx, half_wx, -half_wy, -gnd_y, 0.0, t_m)),
        mk((-half_wx, -gnd_x, -gnd_y, gnd_y, 0.0, t_m)),
        mk((gnd_x, half_wx, -gnd_y, gnd_y, 0.0, t_m)),
    ]

    geom = DeviceGeometry(
        domain=domain,
        materials=_standard_materials(sub_epsilon),
        solids=tuple(solids),
        nets=(
            Net("pad_a", "pad_top"),
            Net("pad_b", "pad_bottom"),
            Net("ground", "ground"),
        ),
        interface_spec=interface_spec or InterfaceSpec(),
        chip_split_um=None,
        gap_z_um=None,
    )
    return validate(geom)


def plate_pair_template(
    pad_side: float,
    gap_d: float,
    *,
    layers: tuple[tuple[float, float], ...] | None = None,
    full_cross_section: bool = False,
    metal_thickness: float = defaults.METAL_THICKNESS_UM,
    lateral_factor: float = 3.0,
    z_margin: float | None = None,
) -> DeviceGeometry:
    """Two parallel square plates facing each other across gap_d.

    With full_cross_section=True the plates span the whole lateral domain
    and the lateral boundary is insulating, which realizes the textbook 1D
    capacitor (C = eps0*eps_r*A/d with zero fringe). ``layers`` optionally
    stacks dielectric slabs (thickness_um, eps_r) bottom-up inside the gap.
    """
    if gap_d <= 0:
        raise GeometryError("gap_d must be > 0")
    t_m = metal_thickness
    if full_cross_section:
        half_w = pad_side / 2
        zlo, zhi = -t_m, gap_d + t_m
        boundary = ("insulating",) * 4 + ("grounded", "grounded")
    else:
        half_w = lateral_factor * pad_side / 2
        zm = z_margin if z_margin is not None else lateral_factor * gap_d + pad_side / 2
        zlo, zhi = -t_m - zm, gap_d + t_m + zm
        boundary = ("grounded",) * 6
    domain = (-half_w, half_w, -half_w, half_w, zlo, zhi)

    p2 = pad_side / 2
    materials = [Material("vacuum", "vacuum", 1.0), Material("metal", "conductor")]
    solids = [
        Solid((-p2, p2, -p2, p2, -t_m, 0.0), "metal", net="pad_bottom", role="pad"),
        Solid((-p2, p2, -p2, p2, gap_d, gap_d + t_m), "metal", net="pad_top", role="pad"),
    ]
    if layers:
        z = 0.0
        for k, (th, eps) in enumerate(layers):
            name = f"layer{k}"
            materials.append(Material(name, "dielectric", eps))
            solids.append(Solid((-p2, p2, -p2, p2, z, z + th), name))
            z += th
        if z > gap_d + _TOL_UM:
            raise GeometryError("dielectric layers exceed the gap")

    geom = DeviceGeometry(
        domain=domain,
        materials=tuple(materials),
        solids=tuple(solids),
        nets=(Net("pad_top", "pad_top"), Net("pad_bottom", "pad_bottom")),
        outer_boundary=boundary,
        chip_split_um=gap_d / 2,
        gap_z_um=(0.0, gap_d),
    )
    return validate(geom)


def ideal_plate_capacitance(pad_side_um: float, gap_um: float,
                            eps_r: float = 1.0) -> float:
    """Textbook C = eps0*eps_r*A/d in farads for a square plate pair."""
    area = (pad_side_um * UM) ** 2
    return EPS0 * eps_r * area / (gap_um * UM)


def ideal_plate_charging_energy_ghz(pad_side_um: float, gap_um: float) -> float:
    """E_C/h in GHz for the textbook plate capacitor."""
    from .constants import H_PLANCK, GHZ
    c = ideal_plate_capacitance(pad_side_um, gap_um)
    return E_CHARGE**2 / (2.0 * c) / H_PLANCK / GHZ


# ----------------------------------------------------------------------
# file IO (structured JSON, lengths in um, interface thickness in nm)
# ----------------------------------------------------------------------

def to_dict(geometry: DeviceGeometry) -> dict:
    d = {
        "domain": list(geometry.domain),
        "materials": [
            {"name": m.name, "kind": m.kind, "epsilon_r": m.epsilon_r}
            for m in geometry.materials
        ],
        "solids": [
            {
                "bounds": list(s.bounds),
                "material": s.material,
                **({"net": s.net} if s.net is not None else {}),
                **({"role": s.role} if s.role else {}),
            }
            for s in geometry.solids
        ],
        "nets": [{"name": n.name, "role": n.role} for n in geometry.nets],
        "interface": {
            "thickness_nm": geometry.interface_spec.thickness_t / 1e-9,
            "epsilon": geometry.interface_spec.epsilon_layer,
            "classes": list(geometry.interface_spec.classes),
        },
        "boundary": {
            face: kind
            for face, kind in zip(BOUNDARY_FACES, geometry.outer_boundary)
        },
    }
    if geometry.chip_split_um is not None:
        d["chip_split_um"] = geometry.chip_split_um
    if geometry.gap_z_um is not None:
        d["gap_z_um"] = list(geometry.gap_z_um)
    return d


def from_dict(data: dict) -> DeviceGeometry:
    try:
        materials = tuple(
            Material(m["name"], m["kind"], float(m.get("epsilon_r", 1.0)))
            for m in data["materials"]
        )
        solids = tuple(
            Solid(
                tuple(float(v) for v in s["bounds"]),
                s["material"],
                net=s.get("net"),
                role=s.get("role", ""),
            )
            for s in data["solids"]
        )
        nets = tuple(Net(n["name"], n.get("role", "other")) for n in data["nets"])
        iface = data.get("interface", {})
        spec = InterfaceSpec(
            thickness_t=float(iface.get("thickness_nm", 3.0)) * 1e-9,
            epsilon_layer=float(iface.get("epsilon", 10.0)),
            classes=tuple(iface.get("classes", ("MA", "MS", "SA"))),
        )
        bnd = data.get("boundary", "grounded")
        if isinstance(bnd, str):
            boundary = (bnd,) * 6
        else:
            boundary = tuple(bnd.get(face, "grounded") for face in BOUNDARY_FACES)
        geom = DeviceGeometry(
            domain=tuple(float(v) for v in data["domain"]),
            materials=materials,
            solids=solids,
            nets=nets,
            interface_spec=spec,
            outer_boundary=boundary,
            chip_split_um=data.get("chip_split_um"),
            gap_z_um=tuple(data["gap_z_um"]) if "gap_z_um" in data else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GeometryError(f"malformed geometry document: {exc}") from exc
    return validate(geom)


def save_geometry(geometry: DeviceGeometry, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(geometry), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_geometry(path) -> DeviceGeometry:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: not valid JSON: {exc}") from exc
    return from_dict(data)


def with_interface(geometry: DeviceGeometry, *, thickness_t: float | None = None,
                   epsilon_layer: float | None = None) -> DeviceGeometry:
    """Copy of the geometry with interface-layer overrides applied."""
    spec = geometry.interface_spec
    return replace(
        geometry,
        interface_spec=InterfaceSpec(
            thickness_t=thickness_t if thickness_t is not None else spec.thickness_t,
            epsilon_layer=epsilon_layer if epsilon_layer is not None else spec.epsilon_layer,
            classes=spec.classes,
        ),
    )
