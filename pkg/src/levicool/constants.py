"""Physical constants (CODATA 2018) and unit conversion factors.

All frequencies inside the package are angular (rad/s).  Configuration
ingestion converts "Hz"-suffixed values by multiplying with 2*pi; values
tagged "rad/s" pass through unchanged.
"""

HBAR: float = 1.054571817e-34      # J s
K_BOLTZMANN: float = 1.380649e-23  # J / K
EPSILON_0: float = 8.8541878128e-12  # F / m
C_LIGHT: float = 299792458.0       # m / s

TORR_TO_PA: float = 133.322387415  # Pa per Torr

TWO_PI: float = 6.283185307179586

__all__ = [
    "HBAR",
    "K_BOLTZMANN",
    "EPSILON_0",
    "C_LIGHT",
    "TORR_TO_PA",
    "TWO_PI",
]
