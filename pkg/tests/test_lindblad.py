import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aqmsim import lindblad as L
from aqmsim.atomic import LevelScheme, LinewidthParams

GAMMA = LinewidthParams().gamma
D_UW = 2 * math.pi * 10e3


def random_rho(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_instance(seed, dim=3):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (h + h.conj().T)
    ops = [np.sqrt(rng.uniform(0.1, 1.0)) * (rng.normal(size=(dim, dim))
                                               + 1j * rng.normal(size=(dim, dim))) / dim
           for _ in range(2)]
    return random_rho(rng, dim), h, ops


# -- probe and operators ---------------------------------------------------------


def test_probe_fractions_validated():
    p = L.ProbeBeam(1.0, pi_fraction=0.2)
    assert p.sigma_plus_fraction == pytest.approx(0.4)
    with pytest.raises(ValueError, match="sum"):
        L.ProbeBeam(1.0, pi_fraction=0.5, sigma_plus_fraction=0.5, sigma_minus_fraction=0.2)
    with pytest.raises(ValueError):
        L.ProbeBeam(-1.0)
    assert L.ProbeBeam(2.0, 0.3, d1_11_fraction=0.25).scaled(0.5).intensity_sat == 1.0


def test_spontaneous_ops():
    ops = L.spontaneous_collapse_ops()
    assert len(ops) == 12  # 16 S-P pairs minus F=0->F'=0 and three |dm|=2 / forbidden lines
    assert all(op.rate >= 0 for op in ops)
    for p in LevelScheme().p_levels:
        assert sum(op.rate for op in ops if op.from_level == p) == pytest.approx(GAMMA)


def test_weak_probe_table():
    g = 123.0
    pi = L.weak_probe_collapse_ops("D1(10)-pi", g)
    assert sorted(op.to_level for op in pi) == [1, 2, 3]
    assert all(op.from_level == 2 and op.rate == pytest.approx(g / 3) for op in pi)
    assert sorted(op.to_level for op in L.weak_probe_collapse_ops("D1(11)-sigma+", g)) == [0, 2, 3]
    assert sorted(op.to_level for op in L.weak_probe_collapse_ops("D1(11)-sigma-", g)) == [0, 1, 2]
    assert all(op.rate == 0 for op in L.weak_probe_collapse_ops("D1(10)-pi", 0.0))
    with pytest.raises(ValueError):
        L.weak_probe_collapse_ops("D2-pi", g)


# -- rotating frame ----------------------------------------------------------------


def test_microwave_only_frame_matches_atom_hamiltonian():
    s = LevelScheme()
    H = L.build_hamiltonian(s, None, L.MicrowaveDrive(0.0, D_UW))
    want = L.atom_hamiltonian(D_UW, s.zeeman_splitting)
    assert np.allclose(np.diag(H.matrix)[:4], np.diag(want), atol=1e-6)


def test_no_drive_gives_zero_hamiltonian():
    H = L.build_hamiltonian(LevelScheme(), None, None)
    assert np.allclose(H.matrix, 0)


def test_frame_makes_every_kept_coupling_static():
    s = LevelScheme()
    for probe in (L.ProbeBeam(1.0, 1 / 3), L.ProbeBeam(1.0, 0.86, d1_11_fraction=1.0),
                  L.ProbeBeam(1.0, 0.5, d1_11_fraction=0.5)):
        couplings = L.probe_couplings(s, probe, LinewidthParams())
        H = L.build_hamiltonian(s, probe, L.MicrowaveDrive(0.0))
        dropped = {(c.lower, c.upper, c.label) for c in H.dropped}
        for c in couplings:
            if (c.lower, c.upper, c.label) in dropped:
                assert abs(c.detuning) > 50 * GAMMA
                continue
            assert H.frame[c.upper] - H.frame[c.lower] == pytest.approx(c.frequency[1], rel=1e-12)
        assert np.allclose(H.matrix, H.matrix.conj().T)


def test_conflicting_near_resonant_drives_rejected():
    a = L.Coupling(0, 1, 1.0, (0, 1.0), 0.0, "a")
    b = L.Coupling(1, 2, 1.0, (0, 1.0), 0.0, "b")
    c = L.Coupling(0, 2, 1.0, (0, 5.0), 0.5, "c")
    with pytest.raises(L.NoRotatingFrameError, match="no rotating frame"):
        L.solve_frame(3, [a, b, c], np.zeros(3), conflict_tolerance=1.0)
    theta, kept, dropped = L.solve_frame(3, [a, b, c], np.zeros(3), conflict_tolerance=0.1)
    assert dropped == [c] and theta[2] - theta[0] == pytest.approx(2.0)


def test_pure_pi_d1_11_does_not_touch_up_state():
    s = LevelScheme()
    probe = L.ProbeBeam(1.0, 1.0, d1_11_fraction=1.0)
    H = L.build_hamiltonian(s, probe, L.MicrowaveDrive(0.0), cross_couplings=False)
    rho0 = L.projector(8, 2)
    rho = L.evolve(rho0, H, L.spontaneous_collapse_ops(), 5e-6, method="expm")
    assert np.allclose(rho, rho0, atol=1e-12)


# -- evolution -------------------------------------------------------------------------


def test_identity_evolution():
    rho0 = random_rho(np.random.default_rng(0), 4)
    assert np.allclose(L.evolve(rho0, np.zeros((4, 4)), [], 1e-3), rho0, atol=1e-14)
    assert np.allclose(L.evolve(rho0, np.zeros((4, 4)), [], 0.0), rho0)


def test_rabi_oscillation():
    omega = 2 * math.pi * 1e6
    h = np.array([[0, omega / 2], [omega / 2, 0]], dtype=complex)
    for t in np.linspace(0, 2e-6, 9):
        rho = L.evolve(L.projector(2, 0), h, [], t)
        assert rho[1, 1].real == pytest.approx(math.sin(omega * t / 2) ** 2, abs=1e-9)


@given(st.floats(0.0, 3.0))
def test_up_state_decay_under_weak_pi(gt):
    g = 2 * math.pi * 50.0
    rho = L.evolve(L.projector(4, 2), np.zeros((4, 4)), L.weak_probe_collapse_ops("D1(10)-pi", g),
                   gt / g)
    want = math.exp(-2 * gt / 3)
    assert abs(rho[2, 2].real - want) <= 1e-6 * want
    assert math.sqrt(rho[2, 2].real) == pytest.approx(math.exp(-gt / 3), rel=1e-6)


def test_analytic_ramsey_limits():
    assert L.analytic_ramsey_rho22(0.0, D_UW, 2 * math.pi * 3 / D_UW) == pytest.approx(1.0)
    assert L.analytic_ramsey_rho22(0.0, D_UW, math.pi * 5 / D_UW) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        L.analytic_ramsey_rho22(-1.0, D_UW, 0.0)


@given(st.floats(0.05, 3.0), st.floats(1e-4, 1e-2))
def test_numeric_ramsey_matches_analytic(gt, ratio):
    from aqmsim.protocols import pi2_unitary
    g = ratio * D_UW
    t = gt / g
    u = pi2_unitary(4)
    h = np.diag([0, 0, -D_UW, 0]).astype(complex)
    rho = L.evolve(u @ L.projector(4, 0) @ u.conj().T, h,
                   L.weak_probe_collapse_ops("D1(10)-pi", g), t)
    p = (u @ rho @ u.conj().T)[2, 2].real
    want = L.analytic_ramsey_rho22(g, D_UW, t)
    assert abs(p - want) <= 1e-6 * want


@pytest.mark.parametrize("seed", range(4))
def test_semigroup(seed):
    rho0, h, ops = random_instance(seed)
    a = L.evolve(rho0, h, ops, 1.3)
    b = L.evolve(L.evolve(rho0, h, ops, 0.6), h, ops, 0.7)
    assert np.allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_fixed_step_oracle_agrees(seed):
    # time in units of 1/Gamma with Gamma = 1; step 1e-4
    rho0, h, ops = random_instance(100 + seed)
    a = L.evolve(rho0, h, ops, 1.0)
    b = L.evolve_fixed_step(rho0, h, ops, 1.0, 1e-4)
    assert np.max(np.abs(a - b)) < 1e-5


def test_rk45_and_expm_agree():
    rho0, h, ops = random_instance(7, dim=4)
    a = L.evolve(rho0, h, ops, 2.0, method="rk45")
    b = L.evolve(rho0, h, ops, 2.0, method="expm")
    assert np.allclose(a, b, atol=1e-9)


def test_two_level_steady_state_oracle():
    omega, delta = 0.7, 0.3
    h = np.array([[0, omega / 2], [omega / 2, -delta]], dtype=complex)
    c = np.array([[0, 1.0], [0, 0]], dtype=complex)
    rho = L.steady_state(h, [c])
    want = (omega**2 / 4) / (delta**2 + omega**2 / 2 + 1 / 4)
    assert rho[1, 1].real == pytest.approx(want, rel=1e-10)


def test_integrator_failure_reports_achieved_tolerance():
    rho0, h, ops = random_instance(3)
    with pytest.raises(L.IntegratorError) as e:
        L.evolve(rho0, h, ops, 10.0, max_steps=3)
    assert e.value.achieved is not None


def test_hygiene_rejects_unphysical_states():
    bad = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(L.IntegratorError, match="unphysical"):
        L.check_density_matrix(bad)
    with pytest.raises(L.IntegratorError):
        L.check_density_matrix(np.array([[0.5, 0.3], [0.1, 0.5]], dtype=complex))
    with pytest.raises(ValueError):
        L.evolve(L.projector(2, 0), np.zeros((2, 2)), [], -1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 5.0))
def test_evolution_stays_physical(seed, t):
    rho0, h, ops = random_instance(seed)
    rho = L.evolve(rho0, h, ops, t)  # raises on any hygiene violation
    assert abs(np.trace(rho) - 1) < 1e-9
