import math

import numpy as np
import pytest
import scipy.linalg

from levicool import dynamics as D
from levicool.config import ValidationWarning
from levicool.coupling import RegimeError

from conftest import synthetic_pair


# ---------------------------------------------------------------------------
# model construction

def test_drift_diffusion_structure(mkpair):
    p = mkpair()
    dd = D.build_drift_diffusion(p)
    k2 = p.kappa / 2.0
    d_eff = p.effective_detuning
    g2 = 2.0 * p.light_enhanced_coupling
    om = p.omega_m
    expected = np.array([[-k2, d_eff, 0.0, 0.0],
                         [-d_eff, -k2, -g2, 0.0],
                         [0.0, 0.0, 0.0, om],
                         [-g2, 0.0, -om, 0.0]])
    assert np.array_equal(dd.drift, expected)
    assert np.array_equal(dd.diffusion, np.diag([k2, k2, 0.0, 0.0]))
    # trace is carried entirely by the cavity damping
    assert np.trace(dd.drift) == pytest.approx(-p.kappa, rel=1e-15)


def test_initial_state_occupations():
    st = D.initial_state(n_phonons=2.0, n_cavity=1.0)
    assert st.phonon_number == pytest.approx(2.0, abs=1e-15)
    assert st.cavity_number == pytest.approx(1.0, abs=1e-15)
    nus = D.symplectic_eigenvalues(st.cov)
    assert nus == pytest.approx([1.5, 2.5])
    assert D.is_physical(st.cov)
    assert not D.is_physical(0.4 * np.eye(4))


def test_stability_criteria(mkpair, baseline_pairs):
    for pair in baseline_pairs:
        v = D.stability_check(pair)
        assert v.stable and v.s1 > 0.0 and v.s2 > 0.0

    p = mkpair()
    v = D.stability_check(p)
    # with g = 1 and d_eff = omega the critical amplitude is omega itself
    assert v.critical_amplitude == pytest.approx(p.omega_m, rel=1e-12)

    hot = mkpair(big_g=7.0e5)          # |alpha| above the critical value
    bad = D.stability_check(hot)
    assert not bad.stable and bad.s2 < 0.0
    dd = D.build_drift_diffusion(hot)
    assert np.linalg.eigvals(dd.drift).real.max() >= 0.0
    with pytest.raises(D.UnstableSystemError):
        D.steady_state_covariance(dd, verdict=bad)


# ---------------------------------------------------------------------------
# steady state

def test_uncoupled_steady_state_is_vacuum(mkpair):
    dd = D.build_drift_diffusion(mkpair(big_g=0.0))
    v = D.steady_state_covariance(dd)
    assert np.array_equal(v.cov, 0.5 * np.eye(4))
    assert v.phonon_number == 0.0


def test_sideband_floor_closed_form():
    om, kappa = 2.0 * math.pi * 1e5, 5e4
    assert D.final_phonon_number(om, om, kappa) == \
        pytest.approx((kappa / (4.0 * om)) ** 2, rel=1e-15)
    # generic detuning
    d = 0.7 * om
    assert D.final_phonon_number(om, d, kappa) == \
        pytest.approx(((om - d) ** 2 + (kappa / 2) ** 2) / (4 * om * d),
                      rel=1e-15)
    with pytest.raises(RegimeError):
        D.final_phonon_number(om, -om, kappa)
    with pytest.warns(ValidationWarning):
        # unresolved sideband: matched linewidth gives exactly 1/16
        assert D.final_phonon_number(1e5, 1e5, 1e5) == pytest.approx(1.0 / 16)


def test_lyapunov_floor_and_coupling_correction(mkpair):
    p = mkpair()
    dd = D.build_drift_diffusion(p)
    n_ss = D.steady_state_covariance(dd).phonon_number
    floor = D.final_phonon_number(p.omega_m, p.effective_detuning, p.kappa)
    ratio = p.light_enhanced_coupling / p.kappa
    # the exact steady state sits above the weak-coupling floor by the
    # leading back-action correction 8 (G/kappa)^2
    assert n_ss == pytest.approx(floor * (1.0 + 8.0 * ratio ** 2), rel=1e-3)
    assert n_ss > floor * 1.05


def test_drift_eigenvalue_rates(mkpair):
    p = mkpair()
    ev = np.linalg.eigvals(D.build_drift_diffusion(p).drift)
    res = np.sort(np.unique(np.round(ev.real, 6)))
    # slow pair: mechanical mode decays at twice the cooling rate
    rate = D.cooling_rate(p.g, p.alpha, p.kappa, p.omega_m)
    assert res[1] == pytest.approx(-2.0 * rate, rel=0.05)
    # fast pair: cavity-like, slightly offset from -kappa/2 by hybridization
    assert res[0] == pytest.approx(-p.kappa / 2.0, rel=0.05)


def test_cooling_rate_and_decay_time(mkpair):
    p = mkpair()
    big_g = p.light_enhanced_coupling
    expected = big_g ** 2 / (p.kappa * (1.0 + p.kappa ** 2 /
                                        (16.0 * p.omega_m ** 2)))
    assert D.cooling_rate(p.g, p.alpha, p.kappa, p.omega_m) == \
        pytest.approx(expected, rel=1e-15)
    assert D.phonon_decay_time(p.g, p.alpha, p.kappa) == \
        pytest.approx(p.kappa / (4.0 * big_g ** 2), rel=1e-15)
    with pytest.warns(ValidationWarning):
        D.cooling_rate(1.0, 6e3 + 0j, 5e4, 2.0 * math.pi * 1e5)


# ---------------------------------------------------------------------------
# propagation

def test_propagation_converges_to_steady_state(mkpair):
    p = mkpair()
    dd = D.build_drift_diffusion(p)
    rate = D.cooling_rate(p.g, p.alpha, p.kappa, p.omega_m)
    out = D.propagate_covariance(dd, D.initial_state(n_phonons=5.0),
                                 20.0 / (4.0 * rate), dt=D.max_step(dd))
    n_ss = D.steady_state_covariance(dd).phonon_number
    assert out[-1].phonon_number == pytest.approx(n_ss, rel=1e-4)
    assert len(out) <= 2001
    assert all(D.is_physical(s.cov) for s in out[:: len(out) // 16])


def test_propagation_energy_decay_matches_rwa_rate(mkpair):
    p = mkpair()
    dd = D.build_drift_diffusion(p)
    reduced = D.rwa_reduced_step(p)
    t_end = 2.0 / reduced.energy_decay_rate
    out = D.propagate_covariance(dd, D.initial_state(n_phonons=5.0), t_end,
                                 dt=D.max_step(dd))
    floor = D.steady_state_covariance(dd).phonon_number
    ts = np.array([s.time for s in out])
    ns = np.array([s.phonon_number for s in out])
    slope = np.polyfit(ts, np.log(ns - floor), 1)[0]
    assert -slope == pytest.approx(reduced.energy_decay_rate, rel=0.10)


def test_propagation_preserves_fixed_point(mkpair):
    dd = D.build_drift_diffusion(mkpair())
    v = D.steady_state_covariance(dd)
    start = D.CovarianceState(time=0.0, cov=v.cov)
    out = D.propagate_covariance(dd, start, 2e-4)
    assert out[-1].phonon_number == pytest.approx(v.phonon_number, rel=1e-6)
    assert np.allclose(out[-1].cov, v.cov, rtol=0.0,
                       atol=1e-8 * np.abs(v.cov).max())


def test_closed_system_conserves_occupation(mkpair):
    p = mkpair(kappa=0.0, big_g=0.0)
    dd = D.build_drift_diffusion(p)
    out = D.propagate_covariance(dd, D.initial_state(n_phonons=3.0), 5e-5)
    for s in out[::200]:
        assert s.phonon_number == pytest.approx(3.0, abs=1e-9)
        assert s.cavity_number == pytest.approx(0.0, abs=1e-9)


def test_means_follow_drift(mkpair):
    dd = D.build_drift_diffusion(mkpair())
    st = D.initial_state(n_phonons=2.0)
    st.means = np.array([1.0, 0.0, 2.0, 0.0])
    t_end = 1e-3
    out = D.propagate_covariance(dd, st, t_end, dt=D.max_step(dd) / 16.0)
    exact = scipy.linalg.expm(dd.drift * t_end) @ st.means
    assert out[-1].means == pytest.approx(exact, rel=1e-4, abs=1e-5)


def test_step_size_guard(mkpair):
    dd = D.build_drift_diffusion(mkpair())
    bound = D.max_step(dd)
    st = D.initial_state()
    with pytest.raises(D.StepSizeError):
        D.propagate_covariance(dd, st, 1e-4, dt=1.01 * bound)
    D.propagate_covariance(dd, st, 1e-4, dt=bound)  # at the bound: fine
    with pytest.raises(ValueError):
        D.propagate_covariance(dd, st, -1.0)


def test_one_step_discretisation_consistency(mkpair):
    dd = D.build_drift_diffusion(mkpair())
    dt = 1e-6
    m, sqrt_l = D.one_step_discretisation(dd, dt)
    assert np.allclose(m, scipy.linalg.expm(dd.drift * dt), atol=1e-12)
    q = sqrt_l @ sqrt_l.T
    v = D.steady_state_covariance(dd).cov
    # the stationary covariance is a fixed point of the exact update
    assert np.allclose(v, m @ v @ m.T + q, atol=1e-12 * np.abs(v).max())


def test_sampled_trajectories_match_moments(mkpair):
    dd = D.build_drift_diffusion(mkpair())
    v = D.steady_state_covariance(dd)
    start = D.CovarianceState(time=0.0, cov=v.cov)
    rng = np.random.default_rng(42)
    times, paths = D.sample_trajectories(dd, start, 3e-5, rng, n_runs=3000)
    assert paths.shape[1:] == (3000, 4)
    assert times[-1] == pytest.approx(3e-5, rel=1e-12)
    last = paths[-1]
    sample_cov = np.cov(last.T)
    assert np.diag(sample_cov) == pytest.approx(np.diag(v.cov), rel=0.08)
    assert np.abs(last.mean(axis=0)).max() < 5.0 * math.sqrt(
        np.diag(v.cov).max() / 3000)


# ---------------------------------------------------------------------------
# rotating-wave reduction and output pulse

def test_rwa_reduction_rates(mkpair):
    p = mkpair()
    red = D.rwa_reduced_step(p)
    big_g = p.light_enhanced_coupling
    assert red.amplitude_decay_rate == pytest.approx(2.0 * big_g ** 2 /
                                                     p.kappa, rel=1e-15)
    assert red.energy_decay_rate == pytest.approx(4.0 * big_g ** 2 / p.kappa,
                                                  rel=1e-15)
    assert red.input_coefficient == pytest.approx(
        -2j * big_g / math.sqrt(p.kappa), rel=1e-15)
    expected = np.array([[-p.kappa / 2.0, -1j * big_g],
                         [-1j * big_g, 0.0]])
    assert np.allclose(red.drift, expected)


def test_rwa_refuses_outside_regime(mkpair):
    om = 2.0 * math.pi * 1e5
    with pytest.raises(RegimeError, match="kappa/omega"):
        D.rwa_reduced_step(mkpair(kappa=0.25 * om))
    with pytest.raises(RegimeError, match="G/omega"):
        D.rwa_reduced_step(mkpair(big_g=0.25 * om))
    with pytest.raises(RegimeError, match="d_eff"):
        D.rwa_reduced_step(mkpair(detuning_offset=0.25 * om))


def test_output_pulse_profile(mkpair):
    p = mkpair()
    n0 = 7.0
    pulse = D.output_pulse(p, n0)
    tau = p.kappa / (4.0 * p.light_enhanced_coupling ** 2)
    assert pulse.duration == pytest.approx(tau, rel=1e-15)
    assert pulse.peak_flux == pytest.approx(n0 / tau, rel=1e-12)
    # all the stored energy leaves through the cavity port
    assert pulse.integrated_count == pytest.approx(n0, rel=1e-6)
    with pytest.raises(ValueError):
        D.output_pulse(p, -1.0)


def test_output_pulse_offset_start(mkpair):
    pulse = D.output_pulse(mkpair(), 1.0, t_start=2.5)
    assert pulse.times[0] == pytest.approx(2.5)
    assert pulse.flux[0] == pulse.peak_flux
