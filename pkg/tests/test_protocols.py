import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqmsim import protocols as P
from aqmsim.atomic import LinewidthParams
from aqmsim.crosstalk import aqm_rate, detection_probe, reset_probe
from aqmsim.lindblad import ProbeBeam, projector

GAMMA = LinewidthParams().gamma
US = 1e-6


def test_wait_grid_rule():
    g = P.sample_wait_grid(1e-3)
    assert g.size == 105
    assert g[0] == pytest.approx(10 * US)
    assert g[-1] <= 2e-3 + 1e-15
    assert np.all(np.diff(g) > 0)
    # five intervals of 21 points, each spanning 200 us
    for k in range(5):
        block = g[21 * k:21 * (k + 1)]
        assert block[-1] - block[0] == pytest.approx(200 * US)


@given(st.floats(20 * US, 1.0))
def test_wait_grid_properties(t2):
    g = P.sample_wait_grid(t2)
    assert g.size == 105 and np.all(np.diff(g) > 0)
    assert g[0] == pytest.approx(10 * US) and g[-1] <= max(2 * t2, g[0]) * (1 + 1e-12) + 1e-15


def test_ramsey_config_validation():
    with pytest.raises(ValueError):
        P.RamseyConfig(waits=[2e-5, 1e-5])
    with pytest.raises(ValueError):
        P.RamseyConfig(repetitions=0)
    with pytest.raises(ValueError):
        P.RamseyConfig(model="exact")


def test_weak_ramsey_T2_is_two_over_gamma():
    probe = detection_probe(6e-5)
    r = P.simulate_ramsey(P.RamseyConfig(probe=probe))
    assert r.T2 == pytest.approx(2 / aqm_rate(probe), rel=1e-6)
    assert r.contrast[0] <= 1 and np.all(np.diff(r.contrast) <= 1e-12)


@pytest.mark.slow
def test_full_ramsey_agrees_with_weak_map():
    probe = detection_probe(6e-5)
    r = P.simulate_ramsey(P.RamseyConfig(probe=probe, model="full"))
    assert r.T2 == pytest.approx(2 / aqm_rate(probe), rel=1e-3)


def test_fringe_frequency_is_microwave_detuning():
    from aqmsim.analysis import _periodogram_omega
    waits = np.linspace(10 * US, 510 * US, 301)
    r = P.simulate_ramsey(P.RamseyConfig(probe=detection_probe(1e-5), waits=waits))
    w = _periodogram_omega(waits, r.p_up)
    assert w / (2 * math.pi) == pytest.approx(10e3, rel=1e-2)


def test_ramsey_shot_noise_reproducible():
    cfg = P.RamseyConfig(probe=detection_probe(6e-5), shot_noise=True, seed=11)
    a, b = P.simulate_ramsey(cfg), P.simulate_ramsey(cfg)
    assert np.array_equal(a.counts, b.counts) and a.T2 == b.T2
    assert a.T2 == pytest.approx(2 / aqm_rate(detection_probe(6e-5)), rel=0.2)


@given(st.floats(1e-6, 1e-4), st.floats(1.5, 4.0))
@settings(max_examples=10)
def test_contrast_non_increasing_in_intensity(i, factor):
    T = 300 * US
    lo = P.ramsey_contrast(P.RamseyConfig(probe=detection_probe(i)), [T])[0]
    hi = P.ramsey_contrast(P.RamseyConfig(probe=detection_probe(i * factor)), [T])[0]
    assert hi <= lo + 1e-12


def test_ideal_pulse_without_probe_returns_full_contrast():
    c = P.ramsey_contrast(P.RamseyConfig(probe=None), [50 * US, 400 * US])
    assert np.allclose(c, 1.0, atol=1e-10)


def test_finite_pulses_close_to_ideal():
    waits = [40 * US]
    ideal = P.ramsey_contrast(P.RamseyConfig(probe=detection_probe(1e-5)), waits)[0]
    real = P.ramsey_contrast(P.RamseyConfig(probe=detection_probe(1e-5), ideal_pulses=False),
                             waits)[0]
    assert real == pytest.approx(ideal, abs=2e-2)


# -- reset ---------------------------------------------------------------------------


def test_reset_duration_zero_is_identity():
    rho0 = projector(8, 2)
    rho, (t, fl) = P.simulate_reset(rho0, reset_probe(), 0.0)
    assert np.array_equal(rho, rho0) and t.size == 1


def test_pure_pi_d1_11_does_not_reset_up_state():
    rho0 = projector(8, 2)
    rho, _ = P.simulate_reset(rho0, ProbeBeam(1.0, 1.0, d1_11_fraction=1.0), 20 * US,
                              cross_couplings=False)
    assert np.allclose(rho, rho0, atol=1e-10)
    with pytest.raises(P.NoResetError):
        P.reset_time(ProbeBeam(1.0, 1.0, d1_11_fraction=1.0), cross_couplings=False)


def test_long_mixed_drive_pumps_to_down():
    rho0 = np.eye(8, dtype=complex) * 0
    rho0[1:4, 1:4] = np.eye(3) / 3
    rho, _ = P.simulate_reset(rho0, reset_probe(1.0, 1 / 3), 100 * US)
    assert rho[0, 0].real >= 0.999


def test_reset_time_scales_inversely_with_weak_intensity():
    # rate-equation regime: pumping rate proportional to intensity
    t1 = P.reset_time(reset_probe(0.02))[0]
    t2 = P.reset_time(reset_probe(0.04))[0]
    assert t1 / t2 == pytest.approx(2.0, rel=0.02)


def test_reset_time_increases_with_pi_fraction():
    taus = [P.reset_time(reset_probe(1.25, f))[1] for f in (0.0, 0.3, 0.6, 0.86, 0.9)]
    assert np.all(np.diff(taus) > 0)


@pytest.mark.parametrize("intensity", [0.3, 1.25])
@pytest.mark.parametrize("pi_fraction", [0.0, 0.1, 0.2, 1 / 3, 0.5, 0.7, 0.86, 0.9])
def test_reset_fidelity_after_seven_T1(pi_fraction, intensity):
    # balanced sigma+/sigma- make up the rest of the light
    probe = reset_probe(intensity, pi_fraction)
    _, tau_op = P.reset_time(probe)
    rho, _ = P.simulate_reset(projector(8, 2), probe, tau_op, n_samples=51)
    assert rho[0, 0].real >= 0.999


# -- detection illumination ----------------------------------------------------------


def test_dark_ion_does_not_scatter_without_cross_couplings():
    _, (t, fl) = P.simulate_detection_illumination(projector(8, 0), detection_probe(1.0), 5 * US,
                                                   cross_couplings=False)
    assert np.max(np.abs(fl)) < 1e-12 * GAMMA


def test_bright_scattering_between_zero_and_half_gamma():
    r = P.bright_scattering_rate(detection_probe(1.0))
    assert 0 < r < GAMMA / 2


def test_sigma_only_detection_light_causes_no_aqm():
    from aqmsim.crosstalk import gamma_from_intensity
    probe = ProbeBeam(1e-4, pi_fraction=0.0)
    assert gamma_from_intensity(probe, cross_couplings=False).gamma == 0.0
    # only the 2.1 GHz detuned F'=1 lines remain with cross couplings on
    assert 0 < aqm_rate(probe) < 1e-4 * aqm_rate(ProbeBeam(1e-4, pi_fraction=1.0))
    rho, _ = P.simulate_detection_illumination(projector(8, 2), ProbeBeam(1.0, 0.0), 20 * US,
                                               cross_couplings=False)
    assert rho[2, 2].real == pytest.approx(1.0, abs=1e-12)


def test_pumping_rates_positive_and_consistent():
    R_o, R_b, R_d = P.detection_rates()
    assert R_o > 0 and R_b > 0 and R_d > 0
    assert R_b < R_d < 1e-3 * R_o
