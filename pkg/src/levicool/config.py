"""System description: unit-aware config ingestion, parameter containers and
the derived quantities that depend on them (mass, polarizability, zero-point
amplitudes, mode volumes, linewidth, thermal amplitudes).

Configuration files are JSON with numeric values given either as bare numbers
(dimensionless) or as strings ``"<number> <unit>"``.  Every frequency is
converted to angular units (rad/s) on ingestion: a "Hz"-family suffix is
multiplied by 2*pi, a "rad/s"-family suffix passes through.  Spectral
densities are one-sided in angular frequency internally; "/Hz"-suffixed
densities are divided by 2*pi on ingestion.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

from .constants import C_LIGHT, EPSILON_0, HBAR, K_BOLTZMANN, TORR_TO_PA, TWO_PI


class ConfigError(ValueError):
    """Raised when a configuration file is malformed or inconsistent."""


class ValidationWarning(UserWarning):
    """Non-fatal modelling concern detected during validation."""


# ---------------------------------------------------------------------------
# unit parsing

_UNIT_TABLES = {
    "frequency": {
        "hz": TWO_PI, "khz": TWO_PI * 1e3, "mhz": TWO_PI * 1e6, "ghz": TWO_PI * 1e9,
        "rad/s": 1.0, "krad/s": 1e3, "mrad/s": 1e6, "grad/s": 1e9,
    },
    "length": {
        "m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "pm": 1e-12,
    },
    "pressure": {"pa": 1.0, "mbar": 1e2, "bar": 1e5, "torr": TORR_TO_PA},
    "temperature": {"k": 1.0, "mk": 1e-3, "uk": 1e-6},
    "mass": {"kg": 1.0, "g": 1e-3, "amu": 1.66053906660e-27, "u": 1.66053906660e-27},
    "density": {"kg/m^3": 1.0, "kg/m3": 1.0, "g/cm^3": 1e3, "g/cm3": 1e3},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    # one-sided spectral densities, internal convention: per (rad/s)
    "psd_fractional": {"/(rad/s)": 1.0, "1/(rad/s)": 1.0, "s/rad": 1.0,
                       "/hz": 1.0 / TWO_PI, "1/hz": 1.0 / TWO_PI},
    "psd_position": {"m^2/(rad/s)": 1.0, "m2/(rad/s)": 1.0,
                     "m^2/hz": 1.0 / TWO_PI, "m2/hz": 1.0 / TWO_PI},
}


def parse_quantity(value, kind: str) -> float:
    """Parse a config value of the given physical kind into SI/angular units.

    Accepts a bare number (taken as already being in internal units) or a
    string "<number> <unit>".
    """
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"cannot parse {value!r} as a {kind}")
    parts = value.split()
    if len(parts) == 1:
        try:
            return float(parts[0])
        except ValueError as exc:
            raise ConfigError(f"cannot parse {value!r} as a {kind}") from exc
    if len(parts) != 2:
        raise ConfigError(f"cannot parse {value!r} as a {kind}")
    num, unit = parts
    table = _UNIT_TABLES.get(kind)
    if table is None:
        raise ConfigError(f"unknown quantity kind {kind!r}")
    factor = table.get(unit.lower())
    if factor is None:
        raise ConfigError(f"unknown {kind} unit {unit!r} in {value!r}")
    try:
        return float(num) * factor
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r} as a {kind}") from exc


# ---------------------------------------------------------------------------
# parameter containers

AXIS_NAMES = ("z", "x", "y")  # axis order used throughout: (z, x, y)


@dataclass
class SphereProperties:
    radius: float                    # m
    density: float                   # kg/m^3
    permittivity: float              # relative, dimensionless
    surface_temperature: float = 300.0  # K

    def __post_init__(self):
        if self.radius <= 0 or self.density <= 0:
            raise ConfigError("sphere radius and density must be positive")
        if self.permittivity <= 1.0:
            raise ConfigError("relative permittivity must exceed 1")


@dataclass
class TrapConfig:
    """Trap frequencies, equilibrium position and standing-wave phases.

    ``frequencies`` are angular (rad/s) for the axes (z, x, y); ``position``
    is the trap centre (x0, y0, z0) in metres; ``phases`` are the
    standing-wave offsets of the three cavity fields.
    """
    frequencies: tuple[float, float, float]
    position: tuple[float, float, float]
    phases: tuple[float, float, float]

    def __post_init__(self):
        if len(self.frequencies) != 3 or any(f <= 0 for f in self.frequencies):
            raise ConfigError("need three positive trap frequencies (z, x, y)")


def canonical_trap(frequencies, waist: float) -> TrapConfig:
    """Validated default geometry: z0 = 0, x0 = y0 = waist/4, phases (pi/4, 0, 0)."""
    return TrapConfig(
        frequencies=tuple(frequencies),
        position=(0.25 * waist, 0.25 * waist, 0.0),
        phases=(math.pi / 4.0, 0.0, 0.0),
    )


@dataclass
class CavityGeometry:
    length: float                    # m
    waist: float                     # m
    wavelength: float                # m
    finesse: float | None = None
    kappa: float | None = None       # angular FWHM linewidth, rad/s

    def __post_init__(self):
        if self.finesse is None and self.kappa is None:
            raise ConfigError("cavity needs a finesse or an explicit linewidth")
        for name in ("length", "waist", "wavelength"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"cavity {name} must be positive")

    @property
    def mode_frequency(self) -> float:
        """Resonance frequency 2*pi*c/lambda (rad/s)."""
        return TWO_PI * C_LIGHT / self.wavelength

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength


@dataclass
class GasSpecies:
    mass: float       # kg
    fraction: float   # number fraction


@dataclass
class GasEnvironment:
    pressure: float               # Pa
    temperature: float            # K
    species: list[GasSpecies]

    def __post_init__(self):
        if self.pressure < 0 or self.temperature < 0:
            raise ConfigError("gas pressure and temperature must be non-negative")
        if not self.species:
            raise ConfigError("gas needs at least one species")
        total = sum(s.fraction for s in self.species)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"species fractions sum to {total!r}, expected 1")


@dataclass
class SpectralDensity:
    """One-sided PSD in angular frequency: flat value or log-log table."""
    kind: str                       # "flat" | "table"
    value: float | None = None      # flat level
    omega: list[float] | None = None
    levels: list[float] | None = None

    def __post_init__(self):
        if self.kind == "flat":
            if self.value is None or self.value < 0:
                raise ConfigError("flat PSD needs a non-negative value")
        elif self.kind == "table":
            if not self.omega or not self.levels or len(self.omega) != len(self.levels):
                raise ConfigError("PSD table needs matching omega/levels arrays")
            if any(w <= 0 for w in self.omega) or any(v <= 0 for v in self.levels):
                raise ConfigError("PSD table entries must be positive")
            if list(self.omega) != sorted(self.omega):
                raise ConfigError("PSD table frequencies must be ascending")
        else:
            raise ConfigError(f"unknown PSD kind {self.kind!r}")

    def at(self, omega: float) -> float:
        """Evaluate the PSD; tables interpolate log-log and clamp (with warning)."""
        if self.kind == "flat":
            return float(self.value)
        lo, hi = self.omega[0], self.omega[-1]
        if omega < lo or omega > hi:
            warnings.warn(
                f"PSD queried at {omega:.6g} rad/s outside table range "
                f"[{lo:.6g}, {hi:.6g}]; clamping to nearest entry",
                ValidationWarning, stacklevel=2)
            omega = min(max(omega, lo), hi)
        import numpy as np
        lw = np.log(self.omega)
        lv = np.log(self.levels)
        return float(math.exp(np.interp(math.log(omega), lw, lv)))


@dataclass
class NoiseSpectra:
    intensity_psd: SpectralDensity | None = None     # fractional, per (rad/s)
    pointing_psd: SpectralDensity | None = None      # m^2 per (rad/s)
    laser_linewidth: float | None = None             # rad/s
    phase_correlation_rate: float | None = None      # rad/s
    mean_cavity_photons: float | None = None
    reference_frequency: float | None = None         # rad/s, for report line


VALID_MODES = ("TEM00", "TEM01", "TEM10")
MODE_AXIS = {"TEM00": 0, "TEM01": 1, "TEM10": 2}   # axis index into (z, x, y)


@dataclass
class ModeDrive:
    """One driven cavity mode: which transverse mode, its detuning and drive.

    ``detuning`` is omega_cavity - omega_laser (rad/s): positive on the
    cooling (red-detuned) side.  The string "optimal" requests the effective
    detuning be placed at the mechanical frequency of the cooled axis.
    Exactly one of ``drive_strength`` (rad/s) or ``target_photons`` must be
    given; the latter is converted by the steady-state inverse solve.
    """
    mode: str
    polarization: str
    detuning: float | str = "optimal"
    drive_strength: float | None = None
    target_photons: float | None = None
    laser_frequency: float | None = None   # rad/s, optional explicit value

    def __post_init__(self):
        if self.mode not in VALID_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {VALID_MODES}")
        if (self.drive_strength is None) == (self.target_photons is None):
            raise ConfigError(
                f"drive for {self.mode}: give exactly one of drive_strength/target_photons")
        if isinstance(self.detuning, str) and self.detuning != "optimal":
            raise ConfigError(f"detuning must be a number or 'optimal', got {self.detuning!r}")

    @property
    def axis(self) -> int:
        return MODE_AXIS[self.mode]


@dataclass
class ExperimentSection:
    """Knobs for synthetic runs that are not part of the physical system."""
    inelastic_fraction: float = 0.0
    detector_efficiency: float = 1.0
    initial_phonons: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.inelastic_fraction <= 1.0:
            raise ConfigError("inelastic_fraction must lie in [0, 1]")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ConfigError("detector_efficiency must lie in (0, 1]")


@dataclass
class SystemConfig:
    sphere: SphereProperties
    trap: TrapConfig
    cavity: CavityGeometry
    drives: list[ModeDrive]
    gas: GasEnvironment
    noise: NoiseSpectra | None = None
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    reference_values: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.sphere.radius >= self.cavity.wavelength / 10.0:
            raise ConfigError(
                f"sphere radius {self.sphere.radius:.3g} m breaks the point-dipole "
                f"requirement radius < wavelength/10 = {self.cavity.wavelength / 10:.3g} m")
        seen = set()
        for d in self.drives:
            if d.mode in seen:
                raise ConfigError(f"duplicate drive for mode {d.mode}")
            seen.add(d.mode)
        by_mode = {d.mode: d for d in self.drives}
        d01, d10 = by_mode.get("TEM01"), by_mode.get("TEM10")
        if d01 and d10 and d01.polarization == d10.polarization:
            raise ConfigError(
                "TEM01 and TEM10 drives must carry orthogonal polarizations")
        d00 = by_mode.get("TEM00")
        if d00 and d01 and d00.polarization == d01.polarization:
            if (d00.laser_frequency is not None and d01.laser_frequency is not None
                    and d00.laser_frequency == d01.laser_frequency):
                warnings.warn(
                    "TEM00 and TEM01 drives share polarization and laser frequency; "
                    "they must be spectrally distinct to avoid interference",
                    ValidationWarning, stacklevel=2)
        # transverse trap centre must stay within the mode envelope validity
        x0, y0, _ = self.trap.position
        if math.hypot(x0, y0) > self.cavity.waist:
            raise ConfigError("trap centre lies more than one waist off the cavity axis")


# ---------------------------------------------------------------------------
# derived scalar properties

def sphere_mass(sphere: SphereProperties) -> float:
    """Mass of the homogeneous sphere, (4/3) pi r^3 rho."""
    return 4.0 / 3.0 * math.pi * sphere.radius ** 3 * sphere.density


def polarizability(sphere: SphereProperties) -> float:
    """Point-dipole polarizability 3 eps0 V (eps-1)/(eps+2) [SI, C m^2/V]."""
    volume = 4.0 / 3.0 * math.pi * sphere.radius ** 3
    eps = sphere.permittivity
    return 3.0 * EPSILON_0 * volume * (eps - 1.0) / (eps + 2.0)


def zero_point_fluctuation(mass: float, omega: float) -> float:
    """Ground-state position spread sqrt(hbar / (2 m omega))."""
    if mass <= 0 or omega <= 0:
        raise ValueError("mass and omega must be positive")
    return math.sqrt(HBAR / (2.0 * mass * omega))


def mode_volumes(cav: CavityGeometry) -> tuple[float, float, float]:
    """Effective mode volumes of (TEM00, TEM01, TEM10):
    (pi/4) L w^2 for the fundamental and (pi/16) L w^2 for the first-order modes.
    """
    v00 = math.pi / 4.0 * cav.length * cav.waist ** 2
    v01 = math.pi / 16.0 * cav.length * cav.waist ** 2
    return (v00, v01, v01)


def linewidth_from_finesse(cav: CavityGeometry) -> float:
    """Angular FWHM linewidth pi c / (L F)."""
    if cav.finesse is None:
        raise ValueError("geometry carries no finesse")
    return math.pi * C_LIGHT / (cav.length * cav.finesse)


def resolve_linewidth(cav: CavityGeometry) -> tuple[float, str, float | None]:
    """Return (kappa, source, discrepancy_factor).

    An explicit linewidth wins when both are configured; the discrepancy
    factor kappa_explicit / kappa_from_finesse is then reported.
    """
    if cav.kappa is not None:
        if cav.finesse is not None:
            derived = linewidth_from_finesse(cav)
            ratio = cav.kappa / derived
            if abs(math.log(ratio)) > math.log(1.05):
                warnings.warn(
                    f"explicit linewidth {cav.kappa:.4g} rad/s and finesse-derived "
                    f"{derived:.4g} rad/s disagree by x{ratio:.3g}; using the explicit value",
                    ValidationWarning, stacklevel=2)
            return cav.kappa, "explicit", ratio
        return cav.kappa, "explicit", None
    return linewidth_from_finesse(cav), "finesse", None


def rms_amplitude(mass: float, omega: float, temperature: float,
                  cav: CavityGeometry | None = None,
                  envelope_fraction: float = 0.05) -> tuple[float, bool]:
    """Thermal rms displacement sqrt(kB T / (m omega^2)) and a linearization flag.

    The flag is True when the excursion is small against the optical field
    scales: k * x_rms <= envelope_fraction and x_rms <= envelope_fraction * w.
    A False flag signals that precooling is required before the linearized
    treatment applies.
    """
    x = math.sqrt(K_BOLTZMANN * temperature / (mass * omega ** 2))
    ok = True
    if cav is not None:
        ok = (x * cav.wavenumber <= envelope_fraction
              and x <= envelope_fraction * cav.waist)
    return x, ok


# ---------------------------------------------------------------------------
# file ingestion

def _parse_triplet(values, kind):
    if not isinstance(values, (list, tuple)) or len(values) != 3:
        raise ConfigError(f"expected three {kind} values, got {values!r}")
    return tuple(parse_quantity(v, kind) for v in values)


def config_from_dict(raw: dict) -> SystemConfig:
    section = "config"
    try:
        section = "sphere"
        s = raw["sphere"]
        sphere = SphereProperties(
            radius=parse_quantity(s["radius"], "length"),
            density=parse_quantity(s["density"], "density"),
            permittivity=float(s["permittivity"]),
            surface_temperature=parse_quantity(s.get("surface_temperature", 300.0),
                                               "temperature"),
        )
        section = "cavity"
        c = raw["cavity"]
        cavity = CavityGeometry(
            length=parse_quantity(c["length"], "length"),
            waist=parse_quantity(c["waist"], "length"),
            wavelength=parse_quantity(c["wavelength"], "length"),
            finesse=float(c["finesse"]) if "finesse" in c else None,
            kappa=parse_quantity(c["kappa"], "frequency") if "kappa" in c else None,
        )
        section = "trap"
        t = raw["trap"]
        freqs = _parse_triplet(t["frequencies"], "frequency")
        if t.get("position", "canonical") == "canonical" or t.get("phases", "canonical") == "canonical":
            trap = canonical_trap(freqs, cavity.waist)
            if t.get("position", "canonical") != "canonical":
                trap.position = _parse_triplet(t["position"], "length")
            if t.get("phases", "canonical") != "canonical":
                trap.phases = _parse_triplet(t["phases"], "angle")
        else:
            trap = TrapConfig(freqs, _parse_triplet(t["position"], "length"),
                              _parse_triplet(t["phases"], "angle"))
        section = "drives"
        drives = []
        for d in raw.get("drives", []):
            det = d.get("detuning", "optimal")
            drives.append(ModeDrive(
                mode=d["mode"],
                polarization=d["polarization"],
                detuning=det if det == "optimal" else parse_quantity(det, "frequency"),
                drive_strength=(parse_quantity(d["drive_strength"], "frequency")
                                if "drive_strength" in d else None),
                target_photons=(float(d["target_photons"])
                                if "target_photons" in d else None),
                laser_frequency=(parse_quantity(d["laser_frequency"], "frequency")
                                 if "laser_frequency" in d else None),
            ))
        section = "gas"
        g = raw["gas"]
        gas = GasEnvironment(
            pressure=parse_quantity(g["pressure"], "pressure"),
            temperature=parse_quantity(g["temperature"], "temperature"),
            species=[GasSpecies(mass=parse_quantity(sp["mass"], "mass"),
                                fraction=float(sp["fraction"]))
                     for sp in g["species"]],
        )
        section = "noise"
        n = raw.get("noise") or {}

        def _psd(entry, kind):
            if entry is None:
                return None
            if isinstance(entry, (str, int, float)):   # bare value == flat
                return SpectralDensity(kind="flat",
                                       value=parse_quantity(entry, kind))
            if entry.get("kind", "flat") == "flat":
                return SpectralDensity(kind="flat",
                                       value=parse_quantity(entry["value"], kind))
            return SpectralDensity(
                kind="table",
                omega=[parse_quantity(w, "frequency") for w in entry["omega"]],
                levels=[parse_quantity(v, kind) for v in entry["levels"]],
            )

        noise = NoiseSpectra(
            intensity_psd=_psd(n.get("intensity_psd"), "psd_fractional"),
            pointing_psd=_psd(n.get("pointing_psd"), "psd_position"),
            laser_linewidth=(parse_quantity(n["laser_linewidth"], "frequency")
                             if "laser_linewidth" in n else None),
            phase_correlation_rate=(parse_quantity(n["phase_correlation_rate"], "frequency")
                                    if "phase_correlation_rate" in n else None),
            mean_cavity_photons=(float(n["mean_cavity_photons"])
                                 if "mean_cavity_photons" in n else None),
            reference_frequency=(parse_quantity(n["reference_frequency"], "frequency")
                                 if "reference_frequency" in n else None),
        ) if n else None
        section = "experiment"
        e = raw.get("experiment", {})
        experiment = ExperimentSection(
            inelastic_fraction=float(e.get("inelastic_fraction", 0.0)),
            detector_efficiency=float(e.get("detector_efficiency", 1.0)),
            initial_phonons=float(e.get("initial_phonons", 10.0)),
        )
    except KeyError as exc:
        key = exc.args[0]
        name = key if key == section else f"{section}.{key}"
        raise ConfigError(f"missing config field: {name}") from exc
    return SystemConfig(sphere=sphere, trap=trap, cavity=cavity, drives=drives,
                        gas=gas, noise=noise, experiment=experiment,
                        reference_values=dict(raw.get("reference_values", {})))


def load_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(raw)


def config_sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
