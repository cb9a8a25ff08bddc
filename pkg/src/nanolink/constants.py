"""Physical constants (SI) and experiment defaults shared across modules."""

import numpy as np
from scipy import constants as _sc

HBAR = _sc.hbar
H = _sc.h
KB = _sc.k
AMU = _sc.atomic_mass

M_RB87 = 86.909180527 * AMU  # kg

TWO_PI = 2.0 * np.pi


def mhz(f_mhz: float) -> float:
    """Angular frequency (rad/s) from a frequency in MHz."""
    return TWO_PI * f_mhz * 1e6


def khz(f_khz: float) -> float:
    return TWO_PI * f_khz * 1e3


def depth_from_mk(u_mk: float) -> float:
    """Trap depth energy (J) from k_B x millikelvin."""
    return KB * u_mk * 1e-3


def depth_from_mhz(u_mhz: float) -> float:
    """Trap depth energy (J) from h x MHz."""
    return H * u_mhz * 1e6


# Cavity (single transition, 87Rb D2 on resonance).
G_RATE = mhz(786.0) / 2.0
GAMMA_RATE = mhz(6.0)
KAPPA_RATE = mhz(3800.0)

# Waveguide coupling fraction reproducing an empty-cavity reflectivity of 0.40.
KAPPA_WG_FRACTION = (1.0 - np.sqrt(0.40)) / 2.0

# Thermal cooperativity distribution of a trapped atom next to the cavity.
C0_STATIONARY = 47.0
C_MEAN = 27.0
C_SD = 25.0
OMEGA_R_PCC = khz(115.0)
OMEGA_Z_PCC = khz(550.0)
T_PCC = 70e-6

# Reported two-atom reflectivities (thermal averages).
R00_REPORTED = 0.40
R01_REPORTED = 0.94
R11_REPORTED = 0.97

ZETA = 5.4e-4
ALPHA_STANDING_WAVE = 1.2
TRAP_WAVELENGTH = 815e-9
PCC_DEPTH_MHZ = 32.0
