import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqmsim import holography as H

W = 1.5e-6


@pytest.fixture(scope="module")
def pupil():
    return H.PupilField.gaussian(256)


@pytest.fixture(scope="module")
def ifta(pupil):
    target = H.TargetField.gaussian(pupil, W)
    return H.ifta_generate(target, pupil, 50, return_details=True)


# -- transforms --------------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10)
def test_parseval(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(64, 48)) + 1j * rng.normal(size=(64, 48))
    img = H.propagate(f)
    assert np.sum(np.abs(img) ** 2) == pytest.approx(np.sum(np.abs(f) ** 2), rel=1e-10)
    assert np.allclose(H.back_propagate(img), f, atol=1e-12)


def test_shift_theorem():
    n = 64
    rng = np.random.default_rng(0)
    f = rng.normal(size=(n, n)) + 0j
    jj, ii = np.meshgrid(np.arange(n), np.arange(n))
    tilted = f * np.exp(2j * math.pi * (5 * jj + 3 * ii) / n)
    assert np.allclose(H.propagate(tilted), np.roll(H.propagate(f), (3, 5), axis=(0, 1)), atol=1e-10)


def test_gaussian_pair():
    # a sampled Gaussian transforms to a Gaussian of reciprocal width
    n = 128
    x = np.arange(n) - n // 2
    s = 6.0
    g = np.exp(-(x[None, :] ** 2 + x[:, None] ** 2) / (2 * s**2))
    img = np.abs(H.propagate(g))
    sk = n / (2 * math.pi * s)
    want = np.exp(-(x[None, :] ** 2 + x[:, None] ** 2) / (2 * sk**2))
    assert np.allclose(img / img.max(), want, atol=1e-9)


def test_square_wave_coefficients():
    assert H.square_wave_fundamental(1) == pytest.approx(4 / math.pi)
    assert H.square_wave_fundamental(2) == 0.0
    assert H.square_wave_fundamental(3) == pytest.approx(4 / (3 * math.pi))
    with pytest.raises(ValueError):
        H.square_wave_fundamental(0)


# -- binarization and IFTA ----------------------------------------------------------


def test_flat_modulation_gives_regular_grating():
    D = np.ones((64, 64))
    holo = H.binarize(D, (0.25, 0.0), 1.0)
    rows = holo.mirrors
    assert np.all(rows == rows[0])
    assert np.array_equal(np.roll(rows[0], 4), rows[0])
    assert holo.period == pytest.approx(4.0)


def test_zero_modulation_switches_everything_off():
    holo = H.binarize(np.zeros((32, 32)), (0.25, 0.0))
    assert not holo.mirrors.any()


def test_window_error_never_increases(ifta):
    e = ifta.errors
    assert all(b <= a * (1 + 1e-12) for a, b in zip(e, e[1:]))
    assert np.abs(ifta.modulation).max() == pytest.approx(1.0)


def test_gain_of_four_over_pi_scaling(pupil, ifta):
    plain = H.first_order_power(H.binarize(ifta.modulation, ifta.hologram.carrier, 1.0), pupil)
    boosted = H.first_order_power(ifta.hologram, pupil)
    assert boosted / plain == pytest.approx((4 / math.pi) ** 2, abs=0.05)


def test_crosstalk_at_four_waists_clean_pupil(pupil, ifta):
    img = H.first_order(ifta.hologram, pupil)
    for a in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        assert H.crosstalk_at(img, pupil, (0, 0), (4 * W * math.cos(a), 4 * W * math.sin(a))) < 1e-4


def test_more_iterations_do_not_hurt_continuous_error(pupil):
    target = H.TargetField.gaussian(pupil, W)
    few = H.ifta_generate(target, pupil, 5, return_details=True)
    many = H.ifta_generate(target, pupil, 40, return_details=True)
    assert many.errors[-1] <= few.errors[-1]


def test_aberration_is_corrected_in_first_order():
    aberr = H.PupilField.gaussian(256, phase=lambda u, v: 6.0 * (u**3 - 0.5 * v**2))
    target = H.TargetField.gaussian(aberr, W)
    holo = H.ifta_generate(target, aberr, 50)
    img = H.first_order(holo, aberr)
    naive = H.first_order(H.ifta_generate(target, H.PupilField.gaussian(256), 50), aberr)

    def overlap(e):
        t = target.field[target.window]
        e = e[target.window]
        return abs(np.vdot(t, e)) ** 2 / (np.vdot(t, t).real * np.vdot(e, e).real)

    assert overlap(img) > 0.99
    assert overlap(img) > overlap(naive) + 0.05


def test_band_limit_rejected(pupil):
    tiny = H.TargetField.gaussian(pupil, 0.3e-6)
    with pytest.raises(H.BandLimitError):
        H.ifta_generate(tiny, pupil, 2)


def test_ifta_validation(pupil):
    t = H.TargetField.gaussian(pupil, W)
    with pytest.raises(ValueError):
        H.ifta_generate(t, pupil, 0)
    with pytest.raises(ValueError):
        H.ifta_generate(H.TargetField(np.ones((8, 8))), pupil, 1)
    with pytest.raises(ValueError):
        H.PupilField(np.ones((4, 4)), np.zeros((4, 5)))


# -- phase sensing -------------------------------------------------------------------


@given(st.floats(-math.pi, math.pi, exclude_max=True))
@settings(max_examples=8)
def test_phase_sensing_recovers_injected_difference(dphi):
    base = H.PupilField.gaussian(128)
    a = H.patch_mask(base, (-0.05, 0.0), 0.01)
    b = H.patch_mask(base, (0.05, 0.02), 0.01)
    phase = np.where(b, dphi, 0.0)
    got = H.simulate_phase_sensing(base.with_phase(phase), a, b)
    err = (got - dphi + math.pi) % (2 * math.pi) - math.pi
    assert abs(err) < 0.05


def test_phase_sensing_requires_light_in_both_patches():
    base = H.PupilField.gaussian(64)
    a = H.patch_mask(base, (0.0, 0.0), 0.01)
    empty = np.zeros_like(a)
    with pytest.raises(H.NoFringeError):
        H.simulate_phase_sensing(base, a, empty)
    with pytest.raises(ValueError):
        H.simulate_phase_sensing(base, a, a)


# -- amplitude fit ---------------------------------------------------------------------


def test_fit_pupil_amplitude_recovers_gaussian():
    rng = np.random.default_rng(1)
    u, v = rng.uniform(-0.15, 0.15, (2, 80))
    truth = dict(A=2.0, u0=0.01, v0=-0.02, wu=0.2, wv=0.15, C=0.1)
    y = H.gaussian2d((u, v), **truth)
    fit = H.fit_pupil_amplitude(u, v, y)
    for k, val in truth.items():
        assert fit.params[k] == pytest.approx(val, rel=1e-6, abs=1e-9)
    assert not fit.degenerate
    assert fit.amplitude(0.01, -0.02) == pytest.approx(math.sqrt(2.1))


def test_flat_pupil_profile_is_degenerate():
    u, v = np.meshgrid(np.linspace(-1, 1, 4), np.linspace(-1, 1, 4))
    fit = H.fit_pupil_amplitude(u, v, np.full(u.shape, 3.0))
    assert fit.degenerate
    with pytest.raises(ValueError):
        H.fit_pupil_amplitude([0, 1], [0, 1], [1, 2])


def test_remove_piston_tilt():
    y, x = np.mgrid[:16, :16]
    plane = 0.3 + 0.02 * x - 0.05 * y
    bump = np.exp(-((x - 8) ** 2 + (y - 8) ** 2) / 8.0)
    out = H.remove_piston_tilt(plane + bump)
    assert np.allclose(out, H.remove_piston_tilt(bump), atol=1e-12)


# -- file formats ------------------------------------------------------------------------


def test_float_grid_round_trip(tmp_path):
    g = np.random.default_rng(0).normal(size=(7, 5))
    path = tmp_path / "phase.bin"
    H.write_float_grid(path, g, 13.68e-6, 369.5e-9, units="rad")
    back, pitch, wl = H.read_float_grid(path)
    assert np.array_equal(back, g)
    assert (pitch, wl) == (13.68e-6, 369.5e-9)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        H.read_float_grid(path)


def test_pbm_round_trip(tmp_path):
    m = np.random.default_rng(0).random((9, 13)) > 0.5
    path = tmp_path / "holo.pbm"
    H.write_pbm(path, H.BinaryHologram(m, (0.25, 0.0)))
    assert np.array_equal(H.read_pbm(path), m)
