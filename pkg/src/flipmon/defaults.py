"""Central table of physical and numerical defaults.

Every CLI run prints this table into its manifest so results stay
reproducible. Values here are plain module constants; functions take them
as default arguments rather than reading global state.
"""

# Thin contaminated interface layers (metal-air, metal-substrate,
# substrate-air): thickness and dielectric constant of the layer.
INTERFACE_THICKNESS_M = 3e-9
INTERFACE_EPSILON = 10.0

# Vacuum gap between the two capacitor pads of the flip-chip stack.
GAP_UM = 5.0

# Isotropic sapphire approximation for the substrate.
SUBSTRATE_EPSILON = 11.45

# Flipmon template defaults. PAD_SIDE_UM is calibrated so that the full
# network (pads + grounds + bump) lands at a charging energy of ~225 MHz
# at the default 5 um gap; see tests/test_acceptance.py.
PAD_SIDE_UM = 146.0
BUMP_RADIUS_UM = 10.0
SUBSTRATE_THICKNESS_UM = 280.0
ISLAND_SIDE_UM = 40.0
ISLAND_CLEARANCE_UM = 12.0
GROUND_CLEARANCE_UM = 60.0
PAD_TOP_OVERHANG_UM = 25.0
METAL_THICKNESS_UM = 0.12

# Planar (coplanar floating pad) template defaults.
PLANAR_PAD_WIDTH_UM = 340.0
PLANAR_PAD_HEIGHT_UM = 180.0
PLANAR_PAD_GAP_UM = 30.0

# Field solver.
SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 50_000

# Mesh policy.
MIN_CELL_UM = 1.0
MAX_GROWTH_RATIO = 1.4
UNIFORM_GAP_UM = 8.0
MAX_CELLS = 3_000_000
MAX_ASPECT = 1000.0


def as_dict() -> dict:
    """All defaults as a plain dict (embedded in run manifests)."""
    return {
        k: v
        for k, v in globals().items()
        if k.isupper() and isinstance(v, (int, float, str))
    }
