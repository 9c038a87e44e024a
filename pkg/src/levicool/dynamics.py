"""Linearized dynamics of one driven cavity mode coupled to one mechanical axis.

The mode pair evolves under a linear Langevin system for the quadratures
(X_c, P_c, X_m, P_m); Gaussian statistics are therefore closed, and the
package propagates first and second moments exactly rather than sampling.
A stochastic path sampler exists only to synthesize detector-like records.

Sign convention: ``effective_detuning`` > 0 is the cooling (red-detuned)
side; the steady phonon number for a cooling drive is
[(omega - d_eff)^2 + (kappa/2)^2] / (4 omega d_eff), which reduces to
(kappa / 4 omega)^2 at the optimum d_eff = omega.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from . import _kernels
from .config import ValidationWarning
from .coupling import CoupledModePair, RegimeError

VACUUM_VARIANCE = 0.5
PHYSICALITY_TOL = 1e-9
STEP_FRACTION = 0.05          # dt bound: this fraction of the fastest scale
RWA_RATIO_BOUND = 0.2

# symplectic form for two modes in (X_c, P_c, X_m, P_m) order
_OMEGA_SYMPL = np.array([[0.0, 1.0, 0.0, 0.0],
                         [-1.0, 0.0, 0.0, 0.0],
                         [0.0, 0.0, 0.0, 1.0],
                         [0.0, 0.0, -1.0, 0.0]])


class UnstableSystemError(RuntimeError):
    """Steady state requested for a dynamically unstable configuration."""


class PhysicalityError(RuntimeError):
    """A propagated covariance stopped being a valid quantum state."""


class StepSizeError(ValueError):
    """Requested integration step does not resolve the fastest timescale."""


@dataclass
class DriftDiffusion:
    """Drift matrix A and diffusion matrix D of the quadrature Langevin system."""
    drift: np.ndarray
    diffusion: np.ndarray


@dataclass
class CovarianceState:
    """Gaussian state snapshot: second moments plus quadrature means."""
    time: float
    cov: np.ndarray
    means: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @property
    def phonon_number(self) -> float:
        c = self.cov
        m = self.means
        return 0.5 * (c[2, 2] + c[3, 3] + m[2] ** 2 + m[3] ** 2 - 1.0)

    @property
    def cavity_number(self) -> float:
        c = self.cov
        m = self.means
        return 0.5 * (c[0, 0] + c[1, 1] + m[0] ** 2 + m[1] ** 2 - 1.0)


@dataclass
class StabilityVerdict:
    s1: float
    s2: float
    stable: bool
    critical_amplitude: float  # |alpha| where the second criterion crosses zero


def initial_state(n_phonons: float = 0.0, n_cavity: float = 0.0,
                  time: float = 0.0) -> CovarianceState:
    """Thermal-occupation product state (vacuum by default)."""
    v = np.diag([VACUUM_VARIANCE + n_cavity, VACUUM_VARIANCE + n_cavity,
                 VACUUM_VARIANCE + n_phonons, VACUUM_VARIANCE + n_phonons])
    return CovarianceState(time=time, cov=v)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Both symplectic eigenvalues of a two-mode covariance (>= 1/2 if physical)."""
    ev = np.linalg.eigvals(1j * _OMEGA_SYMPL @ cov)
    return np.sort(np.abs(ev))[::2]


def is_physical(cov: np.ndarray, tol: float = PHYSICALITY_TOL) -> bool:
    return bool(symplectic_eigenvalues(cov).min() >= VACUUM_VARIANCE - tol)


# ---------------------------------------------------------------------------
# model construction

def build_drift_diffusion(pair: CoupledModePair) -> DriftDiffusion:
    """Quadrature drift/diffusion of one coupled pair with vacuum input.

    The drive phase is absorbed into the cavity quadrature frame, so only
    G = |g alpha| enters; the diffusion is vacuum input noise on the cavity
    quadratures only (the mechanical mode has no intrinsic bath here —
    collision kicks are applied as instantaneous state jumps elsewhere).
    """
    d_eff = pair.effective_detuning
    kappa = pair.kappa
    omega = pair.omega_m
    g2 = 2.0 * pair.light_enhanced_coupling
    a = np.array([[-kappa / 2.0, d_eff, 0.0, 0.0],
                  [-d_eff, -kappa / 2.0, -g2, 0.0],
                  [0.0, 0.0, 0.0, omega],
                  [-g2, 0.0, -omega, 0.0]])
    d = np.diag([kappa / 2.0, kappa / 2.0, 0.0, 0.0])
    return DriftDiffusion(drift=a, diffusion=d)


def stability_check(pair: CoupledModePair) -> StabilityVerdict:
    """Routh-Hurwitz-style criteria for the linearized pair.

    s1 = 4 d_eff omega g^2 |alpha|^2 kappa^2 and
    s2 = omega d_eff^2 - g^2 |alpha|^2 d_eff must both be positive; the
    second changes sign at the critical amplitude sqrt(omega d_eff)/|g|.
    """
    d_eff = pair.effective_detuning
    omega = pair.omega_m
    ga2 = pair.light_enhanced_coupling ** 2
    s1 = 4.0 * d_eff * omega * ga2 * pair.kappa ** 2
    s2 = omega * d_eff ** 2 - ga2 * d_eff
    if d_eff > 0.0 and pair.g != 0.0:
        crit = math.sqrt(omega * d_eff) / abs(pair.g)
    else:
        crit = math.nan
    return StabilityVerdict(s1=s1, s2=s2, stable=bool(s1 > 0.0 and s2 > 0.0),
                            critical_amplitude=crit)


# ---------------------------------------------------------------------------
# steady state and propagation

def steady_state_covariance(dd: DriftDiffusion,
                            verdict: StabilityVerdict | None = None) -> CovarianceState:
    """Solve A V + V A^T + D = 0 for the stationary Gaussian state.

    The decoupled case (no optomechanical cross terms) is returned
    analytically as vacuum, since the undamped mechanical block makes the
    algebraic solve singular there.
    """
    a = dd.drift
    d = dd.diffusion
    if a[1, 2] == 0.0 and a[3, 0] == 0.0:
        return CovarianceState(time=math.inf,
                               cov=VACUUM_VARIANCE * np.eye(len(a)))
    rates = np.linalg.eigvals(a).real
    if rates.max() >= 0.0:
        detail = f" (stability criteria s1={verdict.s1:.6g}, s2={verdict.s2:.6g})" \
            if verdict is not None else ""
        raise UnstableSystemError(
            "no steady state: drift matrix has a non-decaying eigenvalue "
            f"(max Re = {rates.max():.6g} 1/s){detail}")
    v = scipy.linalg.solve_continuous_lyapunov(a, -d)
    v = 0.5 * (v + v.T)
    residual = np.linalg.norm(a @ v + v @ a.T + d) / np.linalg.norm(d)
    if residual > 1e-10:
        raise RuntimeError(f"Lyapunov solve residual {residual:.3g} exceeds 1e-10")
    return CovarianceState(time=math.inf, cov=v)


def max_step(dd: DriftDiffusion) -> float:
    """Largest allowed integration step for this system."""
    a = dd.drift
    omega = abs(a[2, 3])
    kappa = -2.0 * a[0, 0]
    fastest = min(2.0 * math.pi / omega if omega > 0.0 else math.inf,
                  1.0 / kappa if kappa > 0.0 else math.inf,
                  2.0 * math.pi / abs(a[0, 1]) if a[0, 1] != 0.0 else math.inf)
    if not math.isfinite(fastest):
        raise ValueError("system has no finite timescale to resolve")
    return STEP_FRACTION * fastest


def propagate_covariance(dd: DriftDiffusion, state: CovarianceState,
                         t_end: float, dt: float | None = None,
                         max_records: int = 2001) -> list[CovarianceState]:
    """Integrate dV/dt = A V + V A^T + D and dm/dt = A m with fixed-step RK4.

    Returns strided snapshots from ``state.time`` to ``t_end`` (the final
    snapshot is always included).  Each recorded covariance must pass the
    symplectic physicality test or the run aborts.
    """
    bound = max_step(dd)
    if dt is None:
        # default well below the bound: fourth-order error must keep the
        # symplectic eigenvalues inside the 1e-9 physicality margin even
        # for states starting exactly on the vacuum boundary
        dt = bound / 4.0
    elif dt > bound * (1.0 + 1e-12):
        raise StepSizeError(f"dt={dt:.3g} s exceeds the resolution bound "
                            f"{bound:.3g} s for this system")
    span = t_end - state.time
    if span <= 0.0:
        raise ValueError("t_end must lie after the state's time")
    n_steps = max(1, math.ceil(span / dt))
    dt = span / n_steps
    stride = max(1, math.ceil(n_steps / (max_records - 1)))
    # pad so the recording stride divides the step count exactly
    n_steps = stride * math.ceil(n_steps / stride)
    dt = span / n_steps
    times, v_rec, m_rec = _kernels.rk4_lyapunov(
        dd.drift, dd.diffusion, state.cov, state.means, dt, n_steps, stride)
    out = []
    for t, v, m in zip(times, v_rec, m_rec):
        v = 0.5 * (v + v.T)
        nu_min = symplectic_eigenvalues(v).min()
        if nu_min < VACUUM_VARIANCE - PHYSICALITY_TOL:
            raise PhysicalityError(
                f"covariance lost physicality at t={state.time + t:.6g} s "
                f"(min symplectic eigenvalue {nu_min:.12g} < 1/2); "
                "reduce dt or check the model inputs")
        out.append(CovarianceState(time=state.time + t, cov=v, means=m.copy()))
    return out


def one_step_discretisation(dd: DriftDiffusion, dt: float):
    """Exact one-step propagator M = exp(A dt) and a square root L of the
    integrated one-step noise covariance int_0^dt exp(As) D exp(A^T s) ds."""
    a = dd.drift
    d = dd.diffusion
    n = len(a)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -a
    block[:n, n:] = d
    block[n:, n:] = a.T
    f = scipy.linalg.expm(block * dt)
    m = f[n:, n:].T
    q = m @ f[:n, n:]
    q = 0.5 * (q + q.T)
    evals, evecs = np.linalg.eigh(q)
    sqrt_l = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return m, sqrt_l


def sample_trajectories(dd: DriftDiffusion, state: CovarianceState,
                        t_end: float, rng: np.random.Generator,
                        n_runs: int = 1, dt: float | None = None,
                        max_records: int = 2001):
    """Sample paths of the quadrature vector (for synthetic detector records).

    Uses the exactly discretised transition (exponential propagator plus
    integrated process noise), so recorded snapshots have the correct
    distribution at any step size that resolves the recording grid.
    Returns (times, paths) with paths of shape (n_records, n_runs, 4).
    """
    bound = max_step(dd)
    if dt is None:
        dt = bound
    span = t_end - state.time
    if span <= 0.0:
        raise ValueError("t_end must lie after the state's time")
    n_steps = max(1, math.ceil(span / dt))
    dt = span / n_steps
    stride = max(1, math.ceil(n_steps / (max_records - 1)))
    n_steps = stride * math.ceil(n_steps / stride)
    dt = span / n_steps
    m, sqrt_l = one_step_discretisation(dd, dt)
    x0 = rng.multivariate_normal(state.means, state.cov, size=n_runs,
                                 method="eigh")
    xi = rng.standard_normal((n_runs, n_steps, len(m)))
    times, paths = _kernels.linear_sde_trajectories(m, sqrt_l, x0, xi, dt, stride)
    return state.time + times, paths


# ---------------------------------------------------------------------------
# closed-form sideband-cooling observables

def final_phonon_number(omega: float, effective_detuning: float,
                        kappa: float) -> float:
    """Steady phonon occupation of an ideally cooled axis.

    [(omega - d_eff)^2 + (kappa/2)^2] / (4 omega d_eff); equals
    (kappa/4 omega)^2 at d_eff = omega.  Only the cooling side
    (d_eff > 0 in this package's convention) is meaningful.
    """
    if effective_detuning <= 0.0:
        raise RegimeError("effective detuning is on the heating side; "
                          "no cooling steady state exists")
    if kappa / omega > 0.5:
        warnings.warn(f"kappa/omega = {kappa / omega:.3g} is outside the "
                      "resolved-sideband regime; the closed form degrades",
                      ValidationWarning, stacklevel=2)
    return ((omega - effective_detuning) ** 2 + (kappa / 2.0) ** 2) / \
        (4.0 * omega * effective_detuning)


def cooling_rate(g: float, alpha: complex, kappa: float, omega: float) -> float:
    """Sideband cooling rate g^2 |alpha|^2 / [kappa (1 + kappa^2/(16 omega^2))]."""
    ga = abs(g) * abs(alpha)
    if ga > 0.1 * kappa:
        warnings.warn(f"|g alpha| = {ga:.3g} is not small against kappa = "
                      f"{kappa:.3g}; the perturbative rate is unreliable",
                      ValidationWarning, stacklevel=2)
    return ga ** 2 / (kappa * (1.0 + kappa ** 2 / (16.0 * omega ** 2)))


def phonon_decay_time(g: float, alpha: complex, kappa: float) -> float:
    """Energy 1/e time kappa / (4 g^2 |alpha|^2); also the output pulse duration."""
    ga2 = (abs(g) * abs(alpha)) ** 2
    return kappa / (4.0 * ga2)


@dataclass
class RWAReduced:
    """Beam-splitter model of a pair at d_eff = omega, after dropping the
    counter-rotating terms; and its adiabatic single-mode reduction."""
    drift: np.ndarray           # complex 2x2 over (a_c, a)
    amplitude_decay_rate: float  # 2 g^2 |alpha|^2 / kappa
    input_coefficient: complex   # prefactor of the input field after mode reduction

    @property
    def energy_decay_rate(self) -> float:
        return 2.0 * self.amplitude_decay_rate


def rwa_reduced_step(pair: CoupledModePair) -> RWAReduced:
    """Reduced two-mode generator, valid deep in the resolved sideband regime.

    Refuses when kappa/omega, G/omega, or the relative detuning mismatch
    exceed ``RWA_RATIO_BOUND``.
    """
    omega = pair.omega_m
    kappa = pair.kappa
    big_g = pair.light_enhanced_coupling
    ratios = {"kappa/omega": kappa / omega,
              "G/omega": big_g / omega,
              "|d_eff - omega|/omega": abs(pair.effective_detuning - omega) / omega}
    bad = {k: v for k, v in ratios.items() if v > RWA_RATIO_BOUND}
    if bad:
        raise RegimeError("rotating-wave reduction outside its regime: " +
                          ", ".join(f"{k} = {v:.3g}" for k, v in bad.items()))
    drift = np.array([[-kappa / 2.0, -1j * big_g],
                      [-1j * big_g, 0.0]], dtype=complex)
    return RWAReduced(drift=drift,
                      amplitude_decay_rate=2.0 * big_g ** 2 / kappa,
                      input_coefficient=-2j * big_g / math.sqrt(kappa))


@dataclass
class PulseProfile:
    times: np.ndarray
    flux: np.ndarray            # output photons per second
    duration: float             # 1/e time of the pulse
    integrated_count: float

    @property
    def peak_flux(self) -> float:
        return float(self.flux[0]) if len(self.flux) else 0.0


def output_pulse(pair: CoupledModePair, n_initial: float,
                 t_end: float | None = None, dt: float | None = None,
                 t_start: float = 0.0) -> PulseProfile:
    """Expected photon flux leaking out after a phonon jump of ``n_initial``.

    flux(t) = (4 G^2 / kappa) n_initial exp(-(t - t_start)/tau) with
    tau = kappa / (4 G^2); the numerically integrated count (with the
    analytic tail beyond the grid) reproduces ``n_initial``.
    """
    if n_initial < 0.0:
        raise ValueError("initial phonon excess must be >= 0")
    tau = phonon_decay_time(pair.g, pair.alpha, pair.kappa)
    if t_end is None:
        t_end = 16.0 * tau
    if dt is None:
        dt = tau / 1000.0
    n = max(2, math.ceil(t_end / dt)) + 1
    times = t_start + np.linspace(0.0, t_end, n)
    rate = 1.0 / tau
    flux = rate * n_initial * np.exp(-(times - t_start) * rate)
    integral = scipy.integrate.simpson(flux, x=times) + flux[-1] * tau
    return PulseProfile(times=times, flux=flux, duration=tau,
                        integrated_count=float(integral))
