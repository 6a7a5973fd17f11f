import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import constants
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan as sym_cg, wigner_6j as sym_6j

from aqmsim.atomic import (LevelScheme, LinewidthParams, branching_matrix, clebsch_gordan,
                           decay_branching, rabi_frequency, saturation_intensity, wigner6j)

HALF = Fraction(1, 2)
half_ints = st.integers(0, 8).map(lambda n: Fraction(n, 2))


def _r(x):
    return Rational(x.numerator, x.denominator) if isinstance(x, Fraction) else Rational(x)


def test_6j_values_used_by_the_scheme():
    # {1/2 1/2 1; F' F 1/2} entering every S1/2 <-> P1/2 hyperfine line
    for F, Fp in [(0, 1), (1, 0), (1, 1)]:
        assert wigner6j(HALF, HALF, 1, Fp, F, HALF) == pytest.approx(
            float(sym_6j(_r(HALF), _r(HALF), 1, Fp, F, _r(HALF))), abs=1e-14)
    assert abs(wigner6j(HALF, HALF, 1, 1, 1, HALF)) == pytest.approx(1 / 3)
    assert wigner6j(HALF, HALF, 1, 0, 0, HALF) == 0.0  # F=0 -> F'=0 forbidden


@given(half_ints, half_ints, half_ints, half_ints, half_ints, half_ints)
def test_6j_matches_sympy(a, b, c, d, e, f):
    try:
        want = float(sym_6j(_r(a), _r(b), _r(c), _r(d), _r(e), _r(f)))
    except ValueError:  # sympy refuses non-triangular sets; the symbol is zero there
        want = 0.0
    assert wigner6j(a, b, c, d, e, f) == pytest.approx(want, abs=1e-12)


@given(st.integers(0, 3), st.integers(0, 3), st.integers(-3, 3), st.integers(-1, 1))
def test_clebsch_gordan_matches_sympy(F, Fp, mFp, q):
    # <F mF | F' mF'; 1 q> with mF = mF' + q
    if abs(mFp) > Fp:
        mFp = 0
    mF = mFp + q
    want = float(sym_cg(Fp, 1, F, mFp, q, mF)) if abs(mF) <= F else 0.0
    assert clebsch_gordan(F, mF, Fp, mFp, 1, q) == pytest.approx(want, abs=1e-12)


def test_6j_rejects_negative():
    with pytest.raises(ValueError):
        wigner6j(-1, 1, 1, 1, 1, 1)


def test_scheme_layout():
    s = LevelScheme()
    assert s.dim == 8
    assert s.find("S", 1, 0) == 2
    assert s.find("P", 0, 0) == 4
    assert s.s_levels == [0, 1, 2, 3] and s.p_levels == [4, 5, 6, 7]
    with pytest.raises(KeyError):
        s.find("P", 2, 0)


def test_all_allowed_transitions_have_structural_factor_one_third():
    s = LevelScheme()
    allowed = [t for t in s.transitions() if t.allowed]
    assert len(allowed) == 12
    for t in allowed:
        assert t.strength**2 == pytest.approx(1 / 3, abs=1e-14)


def test_forbidden_lines():
    s = LevelScheme()
    assert not s.transition(0, 4).allowed  # F=0 -> F'=0
    assert not s.transition(2, 6).allowed  # m=0 -> m'=0 with F=F'=1
    assert not s.transition(1, 7).allowed  # |dm| = 2


def test_decay_out_of_each_p_level_sums_to_gamma():
    p = LinewidthParams()
    for up in LevelScheme().p_levels:
        rates = decay_branching(up)
        assert sum(r for _, r in rates) == pytest.approx(p.gamma, rel=1e-12)
        assert all(r >= 0 for _, r in rates)
    B = branching_matrix()
    assert np.allclose(B[4:, :].sum(axis=1), 1.0)


def test_saturation_intensity_oracle():
    p = LinewidthParams()
    # I_sat = hbar omega^3 Gamma / (12 pi c^2) for a two-level atom
    omega = 2 * math.pi * constants.c / p.wavelength
    oracle = constants.hbar * omega**3 * p.gamma / (12 * math.pi * constants.c**2)
    assert p.i_sat == pytest.approx(oracle, rel=1e-12)
    assert p.i_sat == pytest.approx(507.8, rel=2e-3)
    with pytest.raises(ValueError):
        saturation_intensity(-1.0, 369.5e-9)


def test_rabi_frequency():
    s, p = LevelScheme(), LinewidthParams()
    t = s.transition(2, 4)  # D1(10) pi
    assert rabi_frequency(1.0, t) ** 2 == pytest.approx(p.gamma**2 / 2 / 3, rel=1e-12)
    assert rabi_frequency(2.0, t) / rabi_frequency(0.5, t) == pytest.approx(2.0)
    assert rabi_frequency(1.0, s.transition(0, 4)) == 0.0
    with pytest.raises(ValueError):
        rabi_frequency(-1.0, t)
