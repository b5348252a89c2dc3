"""Physical constants used across the simulator (SI units)."""

import scipy.constants as _sc

BOLTZMANN = _sc.k                 # J/K
ELEMENTARY_CHARGE = _sc.e         # C
PLANCK = _sc.h                    # J*s
SPEED_OF_LIGHT = _sc.c            # m/s, vacuum


def photon_energy(wavelength: float) -> float:
    """Energy of one photon at the given vacuum wavelength (J)."""
    return PLANCK * SPEED_OF_LIGHT / wavelength
