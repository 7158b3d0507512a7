"""Physical constants and unit conversions used across the toolkit.

All values are CODATA-2018. Elementary charge and Planck constant are exact
by SI definition; the vacuum permittivity carries the 2018 recommended value.
Every module takes its constants from here so there is a single source of
truth for energy/frequency conversions.
"""

import math

# CODATA-2018
E_CHARGE = 1.602176634e-19      # C (exact)
H_PLANCK = 6.62607015e-34       # J s (exact)
HBAR = H_PLANCK / (2.0 * math.pi)
EPS0 = 8.8541878128e-12         # F/m

# Length units. Geometry files and template arguments are in micrometers;
# the field solver works in meters. The conversion happens in exactly one
# place (mesh construction / file IO) to avoid unit drift.
UM = 1e-6
NM = 1e-9

GHZ = 1e9
MHZ = 1e6


def joules_to_ghz(energy_j: float) -> float:
    """Energy in joules -> equivalent frequency E/h in GHz."""
    return energy_j / H_PLANCK / GHZ


def ghz_to_joules(freq_ghz: float) -> float:
    """Frequency in GHz -> energy h*f in joules."""
    return freq_ghz * GHZ * H_PLANCK
