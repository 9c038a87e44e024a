"""Optomechanical coupling of the three cavity fields to the sphere's motion.

The fundamental mode confines the axial (z) motion at a standing-wave slope;
two first-order transverse modes, displaced envelopes along x and y, confine
the transverse axes.  A mode's envelope function f(r) fixes both the optical
potential U(r) = -(pref / 2 V_mode) f(r) omega_cav and the dispersive
resonance shift; their equality (for the full polarizability prefactor) is a
consistency requirement checked in the tests.

Internal sign convention (documented in README): detuning = omega_cavity -
omega_laser, so positive detuning is the red-detuned / cooling side.  The
self-consistent effective detuning is detuning - 2 g^2 |alpha|^2 / omega_cav.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import (CavityGeometry, ModeDrive, SphereProperties, SystemConfig,
                     TrapConfig, ValidationWarning, mode_volumes, polarizability,
                     resolve_linewidth, sphere_mass, zero_point_fluctuation)
from .constants import EPSILON_0


class RegimeError(RuntimeError):
    """A requested operation is outside its modelling regime."""


class BistabilityError(RuntimeError):
    """The steady-state amplitude has multiple stable branches."""

    def __init__(self, msg, fixed_points):
        super().__init__(msg)
        self.fixed_points = fixed_points


# ---------------------------------------------------------------------------
# mode envelopes and their gradients

def _envelope_and_gradient(mode: str, x: float, y: float, z: float,
                           cav: CavityGeometry, phase: float):
    """Dimensionless envelope f(r) of one transverse mode and its gradient.

    TEM00: exp(-2 rho^2/w^2) cos^2(k z + phi)
    TEM01: (x^2/w^2) exp(-2 rho^2/w^2) cos^2(k z + phi)
    TEM10: (y^2/w^2) exp(-2 rho^2/w^2) cos^2(k z + phi)
    """
    w2 = cav.waist ** 2
    k = cav.wavenumber
    env = math.exp(-2.0 * (x * x + y * y) / w2)
    arg = k * z + phase
    cz = math.cos(arg) ** 2
    sz = math.sin(2.0 * arg)
    if mode == "TEM00":
        f = env * cz
        grad = np.array([-4.0 * x / w2 * f,
                         -4.0 * y / w2 * f,
                         -k * sz * env])
    elif mode == "TEM01":
        t = x * x / w2
        f = t * env * cz
        grad = np.array([(2.0 * x / w2) * (1.0 - 2.0 * x * x / w2) * env * cz,
                         -4.0 * y / w2 * f,
                         -k * sz * t * env])
    elif mode == "TEM10":
        t = y * y / w2
        f = t * env * cz
        grad = np.array([-4.0 * x / w2 * f,
                         (2.0 * y / w2) * (1.0 - 2.0 * y * y / w2) * env * cz,
                         -k * sz * t * env])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return f, grad


def _check_position(cav: CavityGeometry, x: float, y: float):
    if math.hypot(x, y) > cav.waist:
        raise ValueError(
            f"position ({x:.3g}, {y:.3g}) m lies beyond one waist off-axis; "
            "the envelope model is not valid there")


def _prefactor(sphere: SphereProperties, finite_eps: bool) -> float:
    """3V in the large-permittivity limit, 3V (eps-1)/(eps+2) otherwise."""
    volume = 4.0 / 3.0 * math.pi * sphere.radius ** 3
    if finite_eps:
        eps = sphere.permittivity
        return 3.0 * volume * (eps - 1.0) / (eps + 2.0)
    return 3.0 * volume


def potential(cav: CavityGeometry, sphere: SphereProperties, trap: TrapConfig,
              mode: str, position=None, finite_eps: bool = False) -> float:
    """Optical potential of one mode at a position, in angular-frequency units.

    Parameters
    ----------
    position : (x, y, z) in metres; defaults to the trap centre.
    finite_eps : scale the prefactor by (eps-1)/(eps+2) instead of the
        large-permittivity limit.

    Returns
    -------
    float
        U(r) [rad/s]; negative inside the trapping field.
    """
    from .config import MODE_AXIS
    x, y, z = position if position is not None else trap.position
    _check_position(cav, x, y)
    f, _ = _envelope_and_gradient(mode, x, y, z, cav, trap.phases[MODE_AXIS[mode]])
    vmode = mode_volumes(cav)[MODE_AXIS[mode]]
    return -_prefactor(sphere, finite_eps) / (2.0 * vmode) * f * cav.mode_frequency


def potential_gradient(cav: CavityGeometry, sphere: SphereProperties,
                       trap: TrapConfig, mode: str, position=None,
                       finite_eps: bool = False) -> np.ndarray:
    """Analytic gradient (dU/dx, dU/dy, dU/dz) of the optical potential [rad/(s m)]."""
    from .config import MODE_AXIS
    x, y, z = position if position is not None else trap.position
    _check_position(cav, x, y)
    _, grad = _envelope_and_gradient(mode, x, y, z, cav, trap.phases[MODE_AXIS[mode]])
    vmode = mode_volumes(cav)[MODE_AXIS[mode]]
    return -_prefactor(sphere, finite_eps) / (2.0 * vmode) * grad * cav.mode_frequency


def cavity_frequency_shift(cav: CavityGeometry, sphere: SphereProperties,
                           trap: TrapConfig, mode: str, position=None) -> float:
    """Dispersive shift of the mode resonance from the dipole at ``position``.

    Computed through the polarizability route,
    -omega_cav * alpha_pol * f(r) / (2 eps0 V_mode); identical to
    ``potential(..., finite_eps=True)`` by construction of the mode volume.
    """
    from .config import MODE_AXIS
    x, y, z = position if position is not None else trap.position
    _check_position(cav, x, y)
    f, _ = _envelope_and_gradient(mode, x, y, z, cav, trap.phases[MODE_AXIS[mode]])
    vmode = mode_volumes(cav)[MODE_AXIS[mode]]
    return -cav.mode_frequency * polarizability(sphere) * f / (2.0 * EPSILON_0 * vmode)


# mapping mode -> which component of the gradient is "its" axis, in the
# package-wide axis order (z, x, y) -> gradient components (x, y, z)
_MODE_GRAD_COMPONENT = {"TEM00": 2, "TEM01": 0, "TEM10": 1}

CROSS_GRADIENT_BOUND = 0.1


@dataclass
class CouplingStrength:
    g: float                   # rad/s, signed
    q_zpf: float               # m
    gradient: np.ndarray       # (dU/dx, dU/dy, dU/dz) [rad/(s m)]
    cross_gradient_ratio: float


def coupling_strength(cav: CavityGeometry, sphere: SphereProperties,
                      trap: TrapConfig, mode: str,
                      finite_eps: bool = False) -> CouplingStrength:
    """Single-phonon coupling g = x_zpf * dU/dq along the mode's mechanical axis.

    Warns when the off-axis gradient components exceed
    ``CROSS_GRADIENT_BOUND`` of the on-axis one at the trap centre (the
    single-axis coupling picture degrades there).
    """
    from .config import MODE_AXIS
    axis = MODE_AXIS[mode]
    grad = potential_gradient(cav, sphere, trap, mode, finite_eps=finite_eps)
    comp = _MODE_GRAD_COMPONENT[mode]
    on_axis = grad[comp]
    others = np.abs(np.delete(grad, comp))
    ratio = float(others.max() / abs(on_axis)) if on_axis != 0.0 else math.inf
    if ratio > CROSS_GRADIENT_BOUND:
        warnings.warn(
            f"{mode}: off-axis potential gradient is {ratio:.1%} of the on-axis one "
            f"(> {CROSS_GRADIENT_BOUND:.0%}); single-axis coupling is approximate",
            ValidationWarning, stacklevel=2)
    mass = sphere_mass(sphere)
    q_zpf = zero_point_fluctuation(mass, trap.frequencies[axis])
    return CouplingStrength(g=q_zpf * on_axis, q_zpf=q_zpf, gradient=grad,
                            cross_gradient_ratio=ratio)


# ---------------------------------------------------------------------------
# steady-state intracavity amplitude

@dataclass
class AmplitudeSolution:
    alpha: complex             # steady-state amplitude (sqrt photons)
    n_photons: float           # |alpha|^2
    detuning: float            # bare, rad/s (cavity - laser)
    effective_detuning: float  # shifted, rad/s
    drive_strength: float      # rad/s
    iterations: int


def _amplitude_cubic_roots(detuning, kappa, g, omega_cav, drive_strength):
    """All non-negative real roots of the steady-state photon-number cubic."""
    beta = 2.0 * g * g / omega_cav
    coeffs = [4.0 * beta * beta, -8.0 * detuning * beta,
              4.0 * detuning * detuning + kappa * kappa,
              -drive_strength ** 2]
    roots = np.roots(coeffs)
    return sorted(float(r.real) for r in roots
                  if abs(r.imag) < 1e-9 * max(1.0, abs(r.real)) and r.real >= 0.0)


def intracavity_amplitude(omega_cav: float, kappa: float, detuning: float,
                          g: float, drive_strength: float | None = None,
                          target_photons: float | None = None,
                          relaxation: float = 0.5, rel_tol: float = 1e-12,
                          max_iter: int = 10_000) -> AmplitudeSolution:
    """Self-consistent steady-state amplitude of one driven mode.

    Solves |alpha|^2 = drive^2 / (4 d_eff^2 + kappa^2) with
    d_eff = detuning - 2 g^2 |alpha|^2 / omega_cav by damped fixed-point
    iteration, or, given ``target_photons``, inverts for the drive strength
    in closed form.

    Raises
    ------
    BistabilityError
        if the iteration does not converge; the exception carries every
        non-negative fixed point of the underlying cubic.
    """
    if (drive_strength is None) == (target_photons is None):
        raise ValueError("give exactly one of drive_strength / target_photons")
    beta = 2.0 * g * g / omega_cav
    if target_photons is not None:
        u = float(target_photons)
        d_eff = detuning - beta * u
        omega_drive = math.sqrt(u * (4.0 * d_eff * d_eff + kappa * kappa))
        alpha = 1j * omega_drive / (2j * (-d_eff) - kappa)
        return AmplitudeSolution(alpha=alpha, n_photons=u, detuning=detuning,
                                 effective_detuning=d_eff,
                                 drive_strength=omega_drive, iterations=0)
    omega_drive = float(drive_strength)
    u = omega_drive ** 2 / (4.0 * detuning * detuning + kappa * kappa)
    for it in range(1, max_iter + 1):
        d_eff = detuning - beta * u
        u_new = omega_drive ** 2 / (4.0 * d_eff * d_eff + kappa * kappa)
        if abs(u_new - u) <= rel_tol * max(u_new, 1e-300):
            u = u_new
            break
        u = (1.0 - relaxation) * u + relaxation * u_new
    else:
        roots = _amplitude_cubic_roots(detuning, kappa, g, omega_cav, omega_drive)
        raise BistabilityError(
            f"amplitude iteration did not converge in {max_iter} steps; "
            f"fixed points of the photon-number cubic: {roots}", roots)
    d_eff = detuning - beta * u
    alpha = 1j * omega_drive / (2j * (-d_eff) - kappa)
    return AmplitudeSolution(alpha=alpha, n_photons=u, detuning=detuning,
                             effective_detuning=d_eff, drive_strength=omega_drive,
                             iterations=it)


# ---------------------------------------------------------------------------
# assembled mode/mechanics pair

@dataclass
class CoupledModePair:
    """Everything the linearized dynamics of one axis needs."""
    mode: str
    axis: int                  # 0=z, 1=x, 2=y
    omega_m: float             # mechanical frequency, rad/s
    kappa: float               # cavity linewidth (FWHM), rad/s
    omega_cav: float           # optical resonance, rad/s
    g: float                   # single-phonon coupling, rad/s (signed)
    detuning: float            # bare detuning, rad/s
    effective_detuning: float  # rad/s; + means cooling side
    alpha: complex
    drive_strength: float

    @property
    def n_photons(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def light_enhanced_coupling(self) -> float:
        """G = |g| |alpha| (rad/s)."""
        return abs(self.g) * abs(self.alpha)


def build_pair(system: SystemConfig, drive: ModeDrive) -> CoupledModePair:
    """Resolve one configured drive into a coupled mode/mechanics pair."""
    cav, sphere, trap = system.cavity, system.sphere, system.trap
    axis = drive.axis
    omega_m = trap.frequencies[axis]
    kappa, _, _ = resolve_linewidth(cav)
    cs = coupling_strength(cav, sphere, trap, drive.mode)
    g = cs.g
    omega_cav = cav.mode_frequency
    beta = 2.0 * g * g / omega_cav

    if drive.detuning == "optimal":
        # place the effective detuning exactly at the mechanical frequency
        if drive.target_photons is not None:
            u = float(drive.target_photons)
            detuning = omega_m + beta * u
            sol = intracavity_amplitude(omega_cav, kappa, detuning, g,
                                        target_photons=u)
        else:
            u = drive.drive_strength ** 2 / (4.0 * omega_m ** 2 + kappa ** 2)
            detuning = omega_m + beta * u
            sol = intracavity_amplitude(omega_cav, kappa, detuning, g,
                                        drive_strength=drive.drive_strength)
    else:
        detuning = float(drive.detuning)
        sol = intracavity_amplitude(omega_cav, kappa, detuning, g,
                                    drive_strength=drive.drive_strength,
                                    target_photons=drive.target_photons)
    return CoupledModePair(mode=drive.mode, axis=axis, omega_m=omega_m,
                           kappa=kappa, omega_cav=omega_cav, g=g,
                           detuning=sol.detuning,
                           effective_detuning=sol.effective_detuning,
                           alpha=sol.alpha, drive_strength=sol.drive_strength)


def build_pairs(system: SystemConfig) -> list[CoupledModePair]:
    return [build_pair(system, d) for d in system.drives]
