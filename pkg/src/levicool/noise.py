"""Laser-noise heating channels and the ground-state feasibility budget.

Three channels: fractional intensity noise (parametric, multiplies the
spring constant — an exponential energy growth rate), beam-pointing noise
(additive force — a constant phonons/s rate), and laser phase noise (sets
a phonon-number floor through the driven cavity).

Frequency convention: formulas are evaluated with angular frequencies
[rad/s] and PSDs per (rad/s) — the package-wide convention.  Because the
source material for this kind of budget is routinely written with
ordinary-frequency symbols instead, every rate is also reported under that
alternate reading (exactly 1/(2 pi) of the angular value for the intensity
channel and 1/(2 pi)^2 for pointing); verdicts use the angular reading.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from . import _kernels
from .config import (NoiseSpectra, SpectralDensity, SystemConfig,
                     ValidationWarning, sphere_mass)
from .constants import HBAR, TWO_PI
from .coupling import build_pairs
from .dynamics import cooling_rate, final_phonon_number

FLOOR_THRESHOLD = 1.0        # ground state considered reachable below this
HEATING_FRACTION = 0.1       # "much smaller": heating < this fraction of cooling


def _psd_at(spectrum, omega: float) -> float:
    if spectrum is None:
        return 0.0
    if isinstance(spectrum, SpectralDensity):
        return spectrum.at(omega)
    return float(spectrum)


def intensity_heating(spectrum, omega_j: float) -> float:
    """Energy e-fold rate (pi/2) omega^2 S_eps(2 omega) from intensity noise.

    ``spectrum`` is the one-sided fractional-intensity PSD per (rad/s),
    sampled at twice the trap frequency (parametric resonance); returns the
    exponential growth rate of the mean oscillator energy [1/s].
    """
    return 0.5 * math.pi * omega_j ** 2 * _psd_at(spectrum, 2.0 * omega_j)


def pointing_heating(spectrum, mass: float, omega_j: float) -> float:
    """Phonon heating rate (pi/2) m omega^3 S_x(omega) / hbar from beam jitter.

    ``spectrum`` is the one-sided trap-position PSD in m^2/(rad/s); the
    additive force channel feeds energy at a constant rate, returned in
    phonons per second.
    """
    return 0.5 * math.pi * mass * omega_j ** 3 * _psd_at(spectrum, omega_j) / HBAR


def phase_noise_spectrum(omega, gamma_l: float, gamma_c: float):
    """Lorentzian frequency-noise PSD 2 Gamma_L gamma_c / (gamma_c^2 + omega^2)."""
    omega = np.asarray(omega, dtype=float)
    return 2.0 * gamma_l * gamma_c / (gamma_c ** 2 + omega ** 2)


def phase_noise_correlation(tau, gamma_l: float, gamma_c: float):
    """Frequency-noise autocorrelation Gamma_L exp(-gamma_c |tau|).

    This is the form whose transform reproduces ``phase_noise_spectrum``
    (the pair fixes 1/gamma_c as the noise correlation time: the
    correlation falls by 1/e there).
    """
    tau = np.asarray(tau, dtype=float)
    return gamma_l * np.exp(-gamma_c * np.abs(tau))


def phase_noise_floor(gamma_l: float, gamma_c: float, omega_j: float,
                      kappa: float, n_cavity: float) -> float:
    """Phonon floor n_c (Gamma_L/kappa) gamma_c^2/(gamma_c^2 + omega_j^2).

    The driven mode's photons convert laser phase diffusion into force
    noise; this is the resulting lower bound on the attainable occupation.
    """
    if min(gamma_l, gamma_c, omega_j, kappa, n_cavity) < 0.0:
        raise ValueError("all phase-noise inputs must be >= 0")
    return n_cavity * (gamma_l / kappa) * gamma_c ** 2 / \
        (gamma_c ** 2 + omega_j ** 2)


# ---------------------------------------------------------------------------
# simulated cross-check of the intensity-noise formula

def simulate_intensity_heating(omega: float, psd_level: float, t_end: float,
                              n_runs: int, seed, dt: float | None = None,
                              n_blocks: int = 20):
    """Measure the parametric heating rate by direct integration.

    Drives an ensemble of oscillators with white fractional spring noise of
    one-sided PSD ``psd_level`` (per rad/s), frozen over each step with
    variance pi S / dt, and fits the exponential growth of the ensemble
    mean energy.  Returns (rate, standard_error) with the error from
    block-wise refits, for comparison against ``intensity_heating``.
    """
    if dt is None:
        dt = 0.02 * TWO_PI / omega
    n_steps = int(math.ceil(t_end / dt))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    eps = rng.normal(0.0, math.sqrt(math.pi * psd_level / dt),
                     size=(n_runs, n_steps))
    x0 = np.ones(n_runs)
    v0 = np.zeros(n_runs)
    stride = max(1, n_steps // 400)
    times, energies = _kernels.param_heating_ensemble(omega, eps, x0, v0, dt,
                                                      stride)
    slope = np.polyfit(times, np.log(energies.mean(axis=1)), 1)[0]
    block = max(1, n_runs // n_blocks)
    slopes = []
    for b in range(0, n_runs - block + 1, block):
        slopes.append(np.polyfit(times,
                                 np.log(energies[:, b:b + block].mean(axis=1)),
                                 1)[0])
    stderr = float(np.std(slopes, ddof=1) / math.sqrt(len(slopes)))
    return float(slope), stderr


# ---------------------------------------------------------------------------
# the assembled report

def _phase_floor_or_zero(noise: NoiseSpectra, omega: float,
                         kappa: float) -> float:
    if None in (noise.laser_linewidth, noise.phase_correlation_rate,
                noise.mean_cavity_photons):
        return 0.0
    return phase_noise_floor(noise.laser_linewidth,
                             noise.phase_correlation_rate, omega, kappa,
                             noise.mean_cavity_photons)


@dataclass
class AxisBudget:
    axis: int
    mode: str
    omega: float                  # rad/s
    cooling_rate: float           # 1/s
    sideband_floor: float         # phonons
    phase_floor: float            # phonons
    total_floor: float            # phonons
    intensity_efold: float        # 1/s (energy e-fold), angular reading
    intensity_efold_ordinary: float
    intensity_phonon_rate: float  # phonons/s at the floor occupation
    pointing_rate: float          # phonons/s, angular reading
    pointing_rate_ordinary: float
    pointing_implied_floor: float  # phonons: pointing_rate / cooling_rate
    floor_ok: bool
    heating_ok: bool
    violations: list               # each failed inequality, spelled out

    @property
    def ok(self) -> bool:
        return self.floor_ok and self.heating_ok


@dataclass
class BudgetReport:
    axes: list
    floor_threshold: float
    heating_fraction: float
    reference: dict | None        # phase floor quoted at a fiducial frequency

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.axes)

    def to_dict(self) -> dict:
        return {"axes": [asdict(a) | {"ok": a.ok} for a in self.axes],
                "floor_threshold": self.floor_threshold,
                "heating_fraction": self.heating_fraction,
                "reference": self.reference,
                "ok": self.ok}


def budget(system: SystemConfig, pairs=None,
           floor_threshold: float = FLOOR_THRESHOLD,
           heating_fraction: float = HEATING_FRACTION) -> BudgetReport:
    """Assemble the per-axis ground-state feasibility report.

    Verdict per axis: the combined phonon floor (sideband + phase noise)
    must sit below ``floor_threshold``, and every heating channel must stay
    below ``heating_fraction`` of the cooling rate — the intensity channel
    compared as an e-fold rate against the cooling rate, the pointing
    channel as the extra floor it implies (phonons/s divided by the cooling
    rate).  Both frequency readings of each heating rate are reported; the
    angular one decides.
    """
    if pairs is None:
        pairs = build_pairs(system)
    noise: NoiseSpectra | None = system.noise
    mass = sphere_mass(system.sphere)
    axes = []
    for pair in sorted(pairs, key=lambda p: p.axis):
        omega = pair.omega_m
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ValidationWarning)
            gamma = cooling_rate(pair.g, pair.alpha, pair.kappa, omega)
            n_sb = final_phonon_number(omega, pair.effective_detuning, pair.kappa)
        if noise is not None:
            g_eps = intensity_heating(noise.intensity_psd, omega)
            g_pt = pointing_heating(noise.pointing_psd, mass, omega)
            n_ph = _phase_floor_or_zero(noise, omega, pair.kappa)
        else:
            g_eps = g_pt = n_ph = 0.0
        total_floor = n_sb + n_ph
        implied = g_pt / gamma if gamma > 0.0 else math.inf
        violations = []
        if not total_floor < floor_threshold:
            violations.append(
                f"sideband_floor + phase_floor = {total_floor:.6g} "
                f">= floor_threshold = {floor_threshold:.6g}")
        if not g_eps < heating_fraction * gamma:
            violations.append(
                f"intensity_efold = {g_eps:.6g} 1/s >= heating_fraction * "
                f"cooling_rate = {heating_fraction * gamma:.6g} 1/s")
        if not implied < heating_fraction:
            violations.append(
                f"pointing_rate / cooling_rate = {implied:.6g} "
                f">= heating_fraction = {heating_fraction:.6g}")
        axes.append(AxisBudget(
            axis=pair.axis, mode=pair.mode, omega=omega, cooling_rate=gamma,
            sideband_floor=n_sb, phase_floor=n_ph, total_floor=total_floor,
            intensity_efold=g_eps,
            intensity_efold_ordinary=g_eps / TWO_PI,
            intensity_phonon_rate=g_eps * (total_floor + 0.5),
            pointing_rate=g_pt,
            pointing_rate_ordinary=g_pt / TWO_PI ** 2,
            pointing_implied_floor=implied,
            floor_ok=bool(total_floor < floor_threshold),
            heating_ok=bool(g_eps < heating_fraction * gamma
                            and implied < heating_fraction),
            violations=violations))
    reference = None
    if noise is not None and noise.reference_frequency is not None and pairs:
        reference = {
            "frequency": noise.reference_frequency,
            "phase_floor": _phase_floor_or_zero(noise,
                                                noise.reference_frequency,
                                                pairs[0].kappa)}
    return BudgetReport(axes=axes, floor_threshold=floor_threshold,
                        heating_fraction=heating_fraction, reference=reference)
