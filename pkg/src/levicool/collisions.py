"""Gas-molecule collisions with the sphere and their optical signatures.

Each collision deposits a per-axis phonon kick; the cooled cavity modes
convert a kick into an exponentially decaying photon pulse whose integrated
count is geometric ("thermal") with the kick as its mean.  This module
generates synthetic experiments (times, kicks, integer counts), evaluates
the analytic laws they must follow, and runs the inverse inferences:
species discrimination from count records and surface-temperature
estimation from the inelastic channel.

Conventions: axis order is (z, x, y); per-axis molecular velocity
components are independent normals (impact-point geometry over the sphere
surface is deliberately not resolved); inelastic collisions resample the
outgoing momentum from the surface temperature with flux-weighted second
moments, which reduces exactly to the elastic law when the two
temperatures coincide.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.special

from .config import GasEnvironment, SphereProperties, SystemConfig, ValidationWarning
from .constants import HBAR, K_BOLTZMANN

MASS_RATIO_BOUND = 1e-3      # molecule/sphere mass ratio where the kick model degrades
RESOLVABLE_FRACTION = 0.1    # pulses resolvable when tau < this fraction of 1/N
MIN_FIT_EVENTS = 500
COLLAPSE_REL_TOL = 0.05      # two fitted species closer than this => degenerate


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# ---------------------------------------------------------------------------
# event generation

@dataclass
class CollisionRates:
    total: float                 # events per second
    per_species: np.ndarray      # same, split by gas species

    def __float__(self) -> float:
        return self.total


@dataclass
class CollisionEvent:
    time: float
    species: int
    kind: str                    # "elastic" | "inelastic"
    kicks: np.ndarray            # phonon increase per axis (z, x, y)


@dataclass
class DetectionRecord:
    axis: int
    pulse_start: float
    duration: float
    count: int
    merged: bool = False         # True when unresolved pulses were combined


def collision_rate(gas: GasEnvironment, sphere: SphereProperties) -> CollisionRates:
    """Kinetic impingement rate 2 pi r^2 P / sqrt(pi m_m k_B T / 2), per species.

    Species contribute through their partial pressures; the total is the sum.
    """
    rates = np.array([
        2.0 * math.pi * sphere.radius ** 2 * (gas.pressure * s.fraction)
        / math.sqrt(math.pi * s.mass * K_BOLTZMANN * gas.temperature / 2.0)
        for s in gas.species])
    return CollisionRates(total=float(rates.sum()), per_species=rates)


def sample_collision_times(rate: float, t_end: float, seed) -> np.ndarray:
    """Ordered arrival times of a homogeneous Poisson process on [0, t_end)."""
    if rate < 0.0:
        raise ValueError("rate must be >= 0")
    if rate == 0.0 or t_end <= 0.0:
        return np.empty(0)
    rng = _as_rng(seed)
    # draw in blocks until past t_end; keeps the stream deterministic
    expected = rate * t_end
    times = []
    t = 0.0
    block = max(16, int(expected + 6.0 * math.sqrt(expected + 1.0)))
    while True:
        gaps = rng.exponential(1.0 / rate, size=block)
        t_acc = t + np.cumsum(gaps)
        inside = t_acc[t_acc < t_end]
        times.append(inside)
        if len(inside) < block:
            break
        t = t_acc[-1]
    return np.concatenate(times)


def _mass_ratio_guard(m_mol: float, m_sphere: float):
    if m_mol / m_sphere > MASS_RATIO_BOUND:
        warnings.warn(
            f"molecule/sphere mass ratio {m_mol / m_sphere:.2g} is not small; "
            "the perturbative kick model loses accuracy", ValidationWarning,
            stacklevel=3)


def mean_elastic_kick(m_mol: float, t_env: float, m_sphere: float,
                      omega) -> np.ndarray:
    """Ensemble-average elastic kick 2 k_B T m_m / (hbar omega_j m), per axis."""
    omega = np.asarray(omega, dtype=float)
    return 2.0 * K_BOLTZMANN * t_env * m_mol / (HBAR * omega * m_sphere)


def mean_inelastic_kick(m_mol: float, t_env: float, t_sur: float,
                        m_sphere: float, omega) -> np.ndarray:
    """Ensemble-average inelastic kick k_B (T_env + T_sur) m_m / (hbar omega_j m)."""
    omega = np.asarray(omega, dtype=float)
    return K_BOLTZMANN * (t_env + t_sur) * m_mol / (HBAR * omega * m_sphere)


def elastic_kick(m_mol: float, t_env: float, m_sphere: float, omega,
                 seed, size: int | None = None) -> np.ndarray:
    """Per-axis phonon kicks 2 m_m^2 v_j^2 / (hbar omega_j m) from one or more
    elastic collisions, with v_j drawn Maxwell-Boltzmann at ``t_env``.

    Returns shape (3,) for ``size=None``, else (size, 3).
    """
    _mass_ratio_guard(m_mol, m_sphere)
    rng = _as_rng(seed)
    omega = np.asarray(omega, dtype=float)
    n = 1 if size is None else size
    v = rng.normal(0.0, math.sqrt(K_BOLTZMANN * t_env / m_mol) if t_env > 0.0
                   else 0.0, size=(n, omega.size))
    kicks = 2.0 * m_mol ** 2 * v ** 2 / (HBAR * omega * m_sphere)
    return kicks[0] if size is None else kicks


def inelastic_kick(m_mol: float, t_env: float, t_sur: float, m_sphere: float,
                   omega, seed, size: int | None = None) -> np.ndarray:
    """Per-axis kicks when the molecule sticks and re-departs at ``t_sur``.

    The momentum transfer per axis is m_m (v_in + v_out) with the incoming
    and outgoing components drawn at the gas and surface temperatures
    respectively, using flux-weighted second moments (2 k_B T / m_m per
    component): with ``t_sur == t_env`` the kick distribution is then
    identical to the elastic one, and the mean interpolates linearly in
    the two temperatures.
    """
    _mass_ratio_guard(m_mol, m_sphere)
    rng = _as_rng(seed)
    omega = np.asarray(omega, dtype=float)
    n = 1 if size is None else size
    sig_in = math.sqrt(2.0 * K_BOLTZMANN * t_env / m_mol) if t_env > 0.0 else 0.0
    sig_out = math.sqrt(2.0 * K_BOLTZMANN * t_sur / m_mol) if t_sur > 0.0 else 0.0
    dv = rng.normal(0.0, sig_in, size=(n, omega.size)) + \
        rng.normal(0.0, sig_out, size=(n, omega.size))
    kicks = m_mol ** 2 * dv ** 2 / (2.0 * HBAR * omega * m_sphere)
    return kicks[0] if size is None else kicks


# ---------------------------------------------------------------------------
# detectability

@dataclass
class AxisDetectability:
    axis: int
    resolvable: bool             # tau_j < RESOLVABLE_FRACTION / N
    resolvability_margin: float  # (1/N) / tau_j
    elastic_detectable: np.ndarray    # per species: 2 k_B T_env > hbar w m/m_m
    elastic_margin: np.ndarray
    inelastic_detectable: np.ndarray  # per species: k_B T_sur > 2 hbar w m/m_m
    inelastic_margin: np.ndarray


def detectability_report(gas: GasEnvironment, sphere: SphereProperties,
                         omega, tau, rate: float,
                         sphere_mass_kg: float) -> list[AxisDetectability]:
    """Per-axis detectability of single collisions.

    Temporal criterion: the pulse must be much shorter than the mean gap
    between events.  Magnitude criteria, per species and channel, exactly
    as the single-kick thresholds: elastic 2 k_B T_env > hbar omega_j
    (m/m_m), inelastic k_B T_sur > 2 hbar omega_j (m/m_m).
    """
    omega = np.asarray(omega, dtype=float)
    tau = np.asarray(tau, dtype=float)
    masses = np.array([s.mass for s in gas.species])
    out = []
    for j in range(omega.size):
        need = HBAR * omega[j] * sphere_mass_kg / masses
        el = 2.0 * K_BOLTZMANN * gas.temperature / need
        inel = K_BOLTZMANN * sphere.surface_temperature / (2.0 * need)
        gap = 1.0 / rate if rate > 0.0 else math.inf
        out.append(AxisDetectability(
            axis=j,
            resolvable=bool(tau[j] < RESOLVABLE_FRACTION * gap),
            resolvability_margin=float(gap / tau[j]),
            elastic_detectable=el > 1.0,
            elastic_margin=el,
            inelastic_detectable=inel > 1.0,
            inelastic_margin=inel))
    return out


# ---------------------------------------------------------------------------
# analytic kick and count laws

def kick_pdf(n, mean_kick: float) -> np.ndarray:
    """Normalized Maxwell-Boltzmann energy density of a full-collision kick.

    f(n) = (2/sqrt(pi)) a^(3/2) sqrt(n) exp(-a n) with a = 3/(2 mean_kick);
    this is the chi-squared(3)-type law of the molecule's total kinetic
    energy in phonon units (mean 3/(2a), mode 1/(2a)).  Note the sqrt(n)
    factor: without it the density would not integrate to one.  The
    per-axis sampled kick follows the one-component law
    ``kick_component_pdf`` instead; both are exported as histogram overlays.
    """
    n = np.asarray(n, dtype=float)
    a = 1.5 / mean_kick
    out = np.zeros_like(n)
    pos = n > 0.0
    out[pos] = (2.0 / math.sqrt(math.pi)) * a ** 1.5 * np.sqrt(n[pos]) \
        * np.exp(-a * n[pos])
    return out


def kick_component_pdf(n, mean_kick: float) -> np.ndarray:
    """Density of a single-axis kick, n = mean * Z^2 with Z standard normal."""
    n = np.asarray(n, dtype=float)
    out = np.full_like(n, np.inf)
    pos = n > 0.0
    x = n[pos] / mean_kick
    out[pos] = np.exp(-x / 2.0) / (mean_kick * np.sqrt(2.0 * math.pi * x))
    out[n < 0.0] = 0.0
    return out


def kick_component_cdf(n, mean_kick: float) -> np.ndarray:
    """CDF of the single-axis kick law: erf(sqrt(n / (2 mean)))."""
    n = np.asarray(n, dtype=float)
    return scipy.special.erf(np.sqrt(np.clip(n, 0.0, None) / (2.0 * mean_kick)))


def measured_count_pmf(k, mean_count: float) -> np.ndarray:
    """Geometric (thermal photon) law p(k) = mean^k / (1+mean)^(k+1), k = 0, 1, ...

    This is the photon-count distribution of one pulse whose expected count
    is ``mean_count``; its mean is exactly ``mean_count``.
    """
    k = np.asarray(k)
    if np.any(k < 0) or not np.issubdtype(k.dtype, np.integer):
        raise ValueError("counts must be non-negative integers")
    if mean_count < 0.0:
        raise ValueError("mean_count must be >= 0")
    if mean_count == 0.0:
        return np.where(k == 0, 1.0, 0.0)
    kk = k.astype(float)
    return np.exp(kk * math.log(mean_count) - (kk + 1.0) * math.log1p(mean_count))


def sample_counts(mean_counts, seed) -> np.ndarray:
    """Integer detector counts, geometric about each entry of ``mean_counts``."""
    rng = _as_rng(seed)
    mean_counts = np.asarray(mean_counts, dtype=float)
    p = 1.0 / (1.0 + mean_counts)
    return rng.geometric(p) - 1


# marginal count law once the per-event kick is integrated out --------------
#
# A count record is geometric *conditioned on its event's kick*; across
# events the kick itself is mean * Z^2.  The observable per-axis count law
# is therefore E_Z[ geom(k; mean Z^2) ], evaluated with generalized
# Gauss-Laguerre quadrature (alpha = -1/2) in log space for stability at
# large counts.

_GL_NODES, _GL_WEIGHTS = scipy.special.roots_genlaguerre(128, -0.5)
_GL_LOGW = np.log(_GL_WEIGHTS) - 0.5 * math.log(math.pi)


def count_marginal_logpmf(k, mean_kick: float) -> np.ndarray:
    """log P(count = k) for one axis, kick randomness integrated out."""
    k = np.asarray(k, dtype=float)
    if mean_kick < 0.0:
        raise ValueError("mean_kick must be >= 0")
    if mean_kick == 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    n = 2.0 * mean_kick * _GL_NODES                       # kick at each node
    logn = np.log(n)
    lg = k[..., None] * logn - (k[..., None] + 1.0) * np.log1p(n)
    return scipy.special.logsumexp(lg + _GL_LOGW, axis=-1)


def count_marginal_pmf(k, mean_kick: float) -> np.ndarray:
    return np.exp(count_marginal_logpmf(k, mean_kick))


# ---------------------------------------------------------------------------
# end-to-end synthetic experiment

@dataclass
class ExperimentResult:
    duration: float
    rates: CollisionRates
    events: list
    records: list
    counts: np.ndarray           # raw (n_events, 3) integer counts
    histograms: dict
    detectability: list
    taus: np.ndarray
    mean_kicks: np.ndarray       # (n_species, 3), per-event elastic means
    efficiency: float

    def count_matrix(self, resolved_only: bool = True) -> np.ndarray:
        """(n_events, 3) integer counts, one row per collision event.

        With ``resolved_only`` (the default, and what the fit consumes),
        rows touched by any merged record are dropped — a real detector
        cannot split an unresolved pulse back into its events.
        """
        if not resolved_only:
            return self.counts
        merged_rows = np.zeros(len(self.events), dtype=bool)
        for rec in self.records:
            if rec.merged:
                merged_rows[list(rec.event_indices)] = True
        return self.counts[~merged_rows]


@dataclass
class _Record(DetectionRecord):
    event_indices: tuple = field(default_factory=tuple)


def _merge_pulses(times: np.ndarray, counts: np.ndarray, axis: int,
                  tau: float) -> list:
    """Group pulses closer than tau into single flagged records."""
    records = []
    i = 0
    n = len(times)
    while i < n:
        j = i
        while j + 1 < n and times[j + 1] - times[j] < tau:
            j += 1
        records.append(_Record(
            axis=axis, pulse_start=float(times[i]),
            duration=float(times[j] - times[i] + tau),
            count=int(counts[i:j + 1].sum()), merged=bool(j > i),
            event_indices=tuple(range(i, j + 1))))
        i = j + 1
    return records


def run_experiment(system: SystemConfig, duration: float, seed,
                   taus=None) -> ExperimentResult:
    """Simulate collisions against a cooled sphere and the detected counts.

    Pipeline: Poisson event times at the total collision rate; species by
    partial-pressure weights; elastic/inelastic by the configured fraction;
    per-axis kicks; per-axis geometric counts (detector efficiency applied
    as loss, which keeps the law geometric); per-axis pulse records with
    unresolvable neighbours (gap < tau_j) merged and flagged.

    ``taus`` (per-axis pulse durations) may be passed precomputed;
    otherwise they are derived from the configured drives.

    Histograms for the kick and count marginals are included, each with two
    analytic overlays: the exact per-axis law the sampler follows and the
    full-collision energy density (``kick_pdf``).
    """
    ss = np.random.SeedSequence(seed if not isinstance(seed, np.random.SeedSequence)
                                else seed.entropy)
    s_times, s_species, s_kind, s_kick, s_count = [
        np.random.Generator(np.random.Philox(child)) for child in ss.spawn(5)]

    gas = system.gas
    sphere = system.sphere
    omega = np.asarray(system.trap.frequencies)
    from .config import sphere_mass
    m_sphere = sphere_mass(sphere)
    if taus is None:
        from .coupling import build_pairs
        from .dynamics import phonon_decay_time
        taus = np.full(3, np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ValidationWarning)
            for pair in build_pairs(system):
                taus[pair.axis] = phonon_decay_time(pair.g, pair.alpha, pair.kappa)
    taus = np.asarray(taus, dtype=float)

    rates = collision_rate(gas, sphere)
    times = sample_collision_times(rates.total, duration, s_times)
    n_events = len(times)
    frac = system.experiment.inelastic_fraction
    eff = system.experiment.detector_efficiency
    masses = np.array([s.mass for s in gas.species])

    species = s_species.choice(len(masses), size=n_events,
                               p=rates.per_species / rates.total) \
        if n_events else np.empty(0, dtype=int)
    inelastic = s_kind.random(n_events) < frac if n_events else np.empty(0, bool)

    kicks = np.zeros((n_events, 3))
    for si, m_mol in enumerate(masses):
        sel = (species == si) & ~inelastic
        if sel.any():
            kicks[sel] = elastic_kick(m_mol, gas.temperature, m_sphere, omega,
                                      s_kick, size=int(sel.sum()))
        sel = (species == si) & inelastic
        if sel.any():
            kicks[sel] = inelastic_kick(m_mol, gas.temperature,
                                        sphere.surface_temperature, m_sphere,
                                        omega, s_kick, size=int(sel.sum()))
    counts = sample_counts(eff * kicks, s_count) if n_events else \
        np.zeros((0, 3), dtype=np.int64)

    events = [CollisionEvent(time=float(t), species=int(s),
                             kind="inelastic" if i else "elastic",
                             kicks=k)
              for t, s, i, k in zip(times, species, inelastic, kicks)]
    records = []
    for axis in range(3):
        records.extend(_merge_pulses(times, counts[:, axis], axis, taus[axis]))

    mean_kicks = np.array([mean_elastic_kick(m, gas.temperature, m_sphere, omega)
                           for m in masses])
    weights = rates.per_species / rates.total if rates.total > 0.0 \
        else np.full(len(masses), 1.0 / len(masses))
    histograms = _experiment_histograms(kicks, counts, species, inelastic,
                                        mean_kicks, weights, eff, frac,
                                        gas, sphere, m_sphere, omega)
    report = detectability_report(gas, sphere, omega, taus, rates.total, m_sphere)
    return ExperimentResult(duration=duration, rates=rates, events=events,
                            records=records, counts=counts,
                            histograms=histograms, detectability=report,
                            taus=taus, mean_kicks=mean_kicks, efficiency=eff)


def _experiment_histograms(kicks, counts, species, inelastic, mean_kicks,
                           weights, eff, frac, gas, sphere, m_sphere, omega):
    """Per-axis kick and count histograms plus analytic overlay curves."""
    out = {"axes": ["z", "x", "y"], "kick": [], "count": []}
    inel_means = np.array([
        mean_inelastic_kick(s.mass, gas.temperature, sphere.surface_temperature,
                            m_sphere, omega) for s in gas.species])
    for axis in range(3):
        k_ax = kicks[:, axis]
        if len(k_ax):
            edges = np.histogram_bin_edges(k_ax, bins=60)
            hist, _ = np.histogram(k_ax, bins=edges, density=True)
        else:
            edges = np.linspace(0.0, 1.0, 61)
            hist = np.zeros(60)
        grid = 0.5 * (edges[:-1] + edges[1:])
        comp = np.zeros_like(grid)
        energy = np.zeros_like(grid)
        for w, mk, ik in zip(weights, mean_kicks[:, axis], inel_means[:, axis]):
            comp += w * ((1.0 - frac) * kick_component_pdf(grid, mk)
                         + frac * kick_component_pdf(grid, ik))
            energy += w * ((1.0 - frac) * kick_pdf(grid, mk)
                           + frac * kick_pdf(grid, ik))
        out["kick"].append({
            "bin_edges": edges.tolist(), "density": hist.tolist(),
            "overlay_component_law": comp.tolist(),
            "overlay_energy_law": energy.tolist()})
        c_ax = counts[:, axis] if len(counts) else np.empty(0, dtype=int)
        kmax = int(c_ax.max()) + 1 if len(c_ax) else 1
        kk = np.arange(kmax + 1)
        pmf = np.zeros(kmax + 1)
        for w, mk, ik in zip(weights, mean_kicks[:, axis], inel_means[:, axis]):
            pmf += w * ((1.0 - frac) * count_marginal_pmf(kk, eff * mk)
                        + frac * count_marginal_pmf(kk, eff * ik))
        obs = np.bincount(c_ax, minlength=kmax + 1) if len(c_ax) else \
            np.zeros(kmax + 1, dtype=int)
        out["count"].append({
            "k": kk.tolist(), "observed": obs.tolist(),
            "expected_pmf": pmf.tolist()})
    return out


# ---------------------------------------------------------------------------
# inference: species discrimination

@dataclass
class SpeciesFit:
    masses: np.ndarray           # estimated molecule masses [kg], ascending
    weights: np.ndarray          # mixture weights, same order
    mean_kicks: np.ndarray       # implied per-axis kick means, (K, 3)
    log_likelihood: float
    mass_intervals: np.ndarray   # (K, 2) ~95% intervals
    converged: bool
    n_events: int


def _axis_coefficients(t_env: float, m_sphere: float, omega) -> np.ndarray:
    """Per-axis kick mean per unit molecule mass: 2 k_B T / (hbar omega_j m)."""
    return 2.0 * K_BOLTZMANN * t_env / (HBAR * np.asarray(omega) * m_sphere)


class _CountTable:
    """Unique counts per axis with inverse maps, so the marginal law is
    evaluated once per unique value."""

    def __init__(self, counts: np.ndarray):
        self.n, self.n_axes = counts.shape
        self.uniq = []
        self.inv = []
        for j in range(self.n_axes):
            u, inv = np.unique(counts[:, j], return_inverse=True)
            self.uniq.append(u.astype(float))
            self.inv.append(inv)

    def loglik_rows(self, mean_kicks_axis: np.ndarray) -> np.ndarray:
        """Row log-likelihoods for one component with per-axis kick means."""
        total = np.zeros(self.n)
        for j in range(self.n_axes):
            total += count_marginal_logpmf(self.uniq[j],
                                           mean_kicks_axis[j])[self.inv[j]]
        return total


def _em_fit(table: _CountTable, coeff: np.ndarray, masses0: np.ndarray,
            max_iter: int, xatol: float):
    """EM over component masses and weights; returns (masses, weights, ll)."""
    k = len(masses0)
    masses = masses0.copy()
    weights = np.full(k, 1.0 / k)
    ll_old = -np.inf
    for _ in range(max_iter):
        comp = np.stack([table.loglik_rows(coeff * m) for m in masses], axis=1)
        comp = comp + np.log(weights)
        norm = scipy.special.logsumexp(comp, axis=1)
        ll = float(norm.sum())
        resp = np.exp(comp - norm[:, None])
        weights = resp.mean(axis=0)
        weights = np.clip(weights, 1e-12, None)
        weights /= weights.sum()
        for s in range(k):
            r = resp[:, s]

            def nll(logm, r=r):
                return -float(r @ table.loglik_rows(coeff * math.exp(logm)))

            res = scipy.optimize.minimize_scalar(
                nll, bounds=(math.log(masses[s]) - 2.0,
                             math.log(masses[s]) + 2.0),
                method="bounded", options={"xatol": xatol})
            masses[s] = math.exp(res.x)
        if abs(ll - ll_old) < 1e-9 * max(1.0, abs(ll)):
            ll_old = ll
            break
        ll_old = ll
    order = np.argsort(masses)
    return masses[order], weights[order], ll_old


_RESTART_FACTORS = [(a, b) for a in (0.5, 0.75, 1.0, 1.5, 2.0)
                    for b in (0.5, 0.75, 1.0, 1.5, 2.0)][:20]


def fit_species(data, n_species: int, t_env: float, m_sphere: float,
                omega) -> SpeciesFit:
    """Maximum-likelihood species mixture from per-event count records.

    ``data`` is an (n_events, 3) integer count matrix or an
    ``ExperimentResult`` (its resolved single-event rows are used).  Each
    component's per-axis count law is the kick-integrated geometric
    marginal with mean 2 k_B T_env m_hat / (hbar omega_j m); fitting is EM
    with a deterministic quantile-split initialization plus a fixed restart
    grid, so results are reproducible without any RNG.  Ties in likelihood
    resolve to the smaller mass ordering; components closer than
    ``COLLAPSE_REL_TOL`` in mass trigger a degeneracy warning.
    """
    if isinstance(data, ExperimentResult):
        counts = data.count_matrix()
    else:
        counts = np.asarray(data)
    if counts.ndim != 2 or counts.shape[1] != 3:
        raise ValueError("expected an (n_events, 3) count matrix")
    if len(counts) < MIN_FIT_EVENTS:
        raise ValueError(f"need at least {MIN_FIT_EVENTS} events to fit "
                         f"(got {len(counts)})")
    if n_species not in (1, 2, 3):
        raise ValueError("n_species must be 1, 2, or 3")
    counts = counts.astype(np.int64)
    table = _CountTable(counts)
    coeff = _axis_coefficients(t_env, m_sphere, omega)

    # method-of-moments seed: per-event mass proxy, split by quantiles
    proxy = counts.sum(axis=1) / coeff.sum()
    qs = np.quantile(proxy, (np.arange(n_species) + 0.5) / n_species)
    seed_masses = np.clip(qs, np.quantile(proxy[proxy > 0], 0.05)
                          if (proxy > 0).any() else 1e-27, None)

    best = None
    for fa, fb in (_RESTART_FACTORS if n_species > 1 else [(1.0, 1.0)]):
        factors = np.ones(n_species)
        factors[0] = fa
        if n_species > 1:
            factors[-1] = fb
        m0 = np.sort(seed_masses * factors)
        masses, weights, ll = _em_fit(table, coeff, m0, max_iter=25, xatol=0.02)
        if best is None or ll > best[2] + 1e-9 or \
                (abs(ll - best[2]) <= 1e-9 and masses[0] < best[0][0]):
            best = (masses, weights, ll)
    masses, weights, ll = _em_fit(table, coeff, best[0], max_iter=300,
                                  xatol=1e-6)

    if n_species > 1:
        rel = np.diff(masses) / masses[:-1]
        if np.any(rel < COLLAPSE_REL_TOL):
            warnings.warn(
                "species fit degenerate: two components within "
                f"{COLLAPSE_REL_TOL:.0%} in mass — the data may contain "
                "fewer distinguishable species", ValidationWarning,
                stacklevel=2)

    intervals = np.empty((n_species, 2))
    for s in range(n_species):
        intervals[s] = _profile_interval_mass(table, coeff, masses, weights, s)
    return SpeciesFit(masses=masses, weights=weights,
                      mean_kicks=np.outer(masses, coeff),
                      log_likelihood=ll, mass_intervals=intervals,
                      converged=True, n_events=len(counts))


def _mixture_ll(table, coeff, masses, weights) -> float:
    comp = np.stack([table.loglik_rows(coeff * m) for m in masses], axis=1)
    return float(scipy.special.logsumexp(comp + np.log(weights), axis=1).sum())


def _profile_interval_mass(table, coeff, masses, weights, s,
                           drop: float = 1.92) -> tuple:
    """~95% interval from the per-component log-likelihood profile."""
    ll0 = _mixture_ll(table, coeff, masses, weights)

    def deficit(logf):
        m = masses.copy()
        m[s] = masses[s] * math.exp(logf)
        return _mixture_ll(table, coeff, m, weights) - ll0 + drop

    lo, hi = masses[s], masses[s]
    try:
        step = 0.5
        while deficit(-step) > 0.0 and step < 4.0:
            step += 0.5
        lo = masses[s] * math.exp(scipy.optimize.brentq(deficit, -step, 0.0,
                                                        xtol=1e-4))
    except ValueError:
        lo = 0.0
    try:
        step = 0.5
        while deficit(step) > 0.0 and step < 4.0:
            step += 0.5
        hi = masses[s] * math.exp(scipy.optimize.brentq(deficit, 1e-12, step,
                                                        xtol=1e-4))
    except ValueError:
        hi = math.inf
    return lo, hi


# ---------------------------------------------------------------------------
# inference: surface temperature

@dataclass
class SurfaceTemperatureEstimate:
    t_sur: float
    interval: tuple              # ~95% confidence range
    log_likelihood: float
    bound_only: bool             # True when only an upper limit is constrained


def surface_temperature_estimate(counts, m_mol: float, t_env: float,
                                 m_sphere: float, omega,
                                 t_max: float = 5000.0) -> SurfaceTemperatureEstimate:
    """Maximum-likelihood surface temperature from inelastic count records.

    Valid for the frozen-elastic protocol (gas so cold that elastic kicks
    produce no counts, k_B T_env << hbar omega_j m / m_m): every recorded
    count then follows the inelastic marginal with per-axis mean
    k_B (T_env + T_sur) m_m / (hbar omega_j m).  All-zero records pin the
    estimate to the T_sur = 0 boundary and only the upper end of the
    interval is informative.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[1] != 3:
        raise ValueError("expected an (n_events, 3) count matrix")
    table = _CountTable(counts)
    base = K_BOLTZMANN * m_mol / (HBAR * np.asarray(omega) * m_sphere)

    def ll(t_sur: float) -> float:
        return float(table.loglik_rows(base * (t_env + t_sur)).sum())

    if not counts.any():
        ll0 = ll(0.0)
        hi = scipy.optimize.brentq(lambda t: ll(t) - ll0 + 1.92, 1e-6, t_max) \
            if ll(t_max) - ll0 + 1.92 < 0.0 else t_max
        return SurfaceTemperatureEstimate(t_sur=0.0, interval=(0.0, hi),
                                          log_likelihood=ll0, bound_only=True)

    res = scipy.optimize.minimize_scalar(lambda t: -ll(t), bounds=(0.0, t_max),
                                         method="bounded",
                                         options={"xatol": 1e-3})
    t_hat = float(res.x)
    ll_hat = -float(res.fun)

    def deficit(t):
        return ll(t) - ll_hat + 1.92

    lo = 0.0 if deficit(0.0) > 0.0 else scipy.optimize.brentq(
        deficit, 0.0, t_hat, xtol=1e-3)
    hi = t_max if deficit(t_max) > 0.0 else scipy.optimize.brentq(
        deficit, t_hat, t_max, xtol=1e-3)
    return SurfaceTemperatureEstimate(t_sur=t_hat, interval=(float(lo), float(hi)),
                                      log_likelihood=ll_hat,
                                      bound_only=bool(t_hat <= 1e-9))
