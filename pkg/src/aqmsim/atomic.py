"""Angular-momentum algebra and the 171Yb+ S1/2 / P1/2 level model.

Half-integer angular momenta are handled internally as doubled integers so
that triangle and parity checks are exact.  All couplings and decay
branchings used elsewhere in the package are derived from here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import constants

PI_POL, SIGMA_PLUS, SIGMA_MINUS = "pi", "sigma+", "sigma-"
POLARIZATIONS = {0: PI_POL, 1: SIGMA_PLUS, -1: SIGMA_MINUS}

D1_11 = "D1(11)"  # S F=1 -> P F'=1, optical pumping
D1_10 = "D1(10)"  # S F=1 -> P F'=0, cycling / detection
D1_01 = "D1(01)"  # S F=0 -> P F'=1

# electronic and nuclear angular momentum of the S1/2 and P1/2 manifolds
J_GROUND = Fraction(1, 2)
J_EXCITED = Fraction(1, 2)
NUCLEAR_SPIN = Fraction(1, 2)


def _doubled(j) -> int:
    """Return 2*j as an int, rejecting anything that is not a half-integer."""
    two_j = 2 * Fraction(j).limit_denominator(1000)
    if two_j.denominator != 1 or abs(float(two_j) - 2 * float(j)) > 1e-12:
        raise ValueError(f"{j!r} is not a half-integer")
    return int(two_j)


def _log_fact(n2: int) -> float:
    """log((n2/2)!) for an even doubled argument."""
    return math.lgamma(n2 // 2 + 1)


def _triangle_ok(a: int, b: int, c: int) -> bool:
    """Triangle rule on doubled momenta, including integer-perimeter parity."""
    return (a + b + c) % 2 == 0 and abs(a - b) <= c <= a + b


def _log_delta(a: int, b: int, c: int) -> float:
    return 0.5 * (
        _log_fact(a + b - c)
        + _log_fact(a - b + c)
        + _log_fact(-a + b + c)
        - _log_fact(a + b + c + 2)
    )


@lru_cache(maxsize=4096)
def _wigner6j_doubled(a: int, b: int, c: int, d: int, e: int, f: int) -> float:
    triads = ((a, b, c), (a, e, f), (d, b, f), (d, e, c))
    if not all(_triangle_ok(*t) for t in triads):
        return 0.0
    log_pref = sum(_log_delta(*t) for t in triads)
    sums = [sum(t) for t in triads]  # doubled perimeters
    quads = (a + b + d + e, a + c + d + f, b + c + e + f)
    t_lo = max(sums) // 2
    t_hi = min(quads) // 2
    total = 0.0
    for t in range(t_lo, t_hi + 1):
        t2 = 2 * t
        log_term = _log_fact(t2 + 2) - _log_fact(t2 - sums[0])
        log_term -= _log_fact(t2 - sums[1]) + _log_fact(t2 - sums[2])
        log_term -= _log_fact(t2 - sums[3])
        log_term -= sum(_log_fact(q - t2) for q in quads)
        total += (-1) ** t * math.exp(log_term + log_pref)
    return total


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6} by the Racah single-sum formula.

    Arguments may be ints, floats or Fractions but must be non-negative
    half-integers.  Returns 0 when any triangle condition fails.
    """
    doubled = [_doubled(j) for j in (j1, j2, j3, j4, j5, j6)]
    if any(x < 0 for x in doubled):
        raise ValueError("6j arguments must be non-negative")
    return _wigner6j_doubled(*doubled)


@lru_cache(maxsize=4096)
def _cg_doubled(j1: int, m1: int, j2: int, m2: int, j: int, m: int) -> float:
    if m1 + m2 != m:
        return 0.0
    if not _triangle_ok(j1, j2, j):
        return 0.0
    for jj, mm in ((j1, m1), (j2, m2), (j, m)):
        if abs(mm) > jj or (jj + mm) % 2:
            return 0.0
    log_pref = 0.5 * (
        math.log(j + 1)
        + _log_fact(j1 + j2 - j)
        + _log_fact(j1 - j2 + j)
        + _log_fact(-j1 + j2 + j)
        - _log_fact(j1 + j2 + j + 2)
        + _log_fact(j1 + m1)
        + _log_fact(j1 - m1)
        + _log_fact(j2 + m2)
        + _log_fact(j2 - m2)
        + _log_fact(j + m)
        + _log_fact(j - m)
    )
    k_lo = max(0, (j2 - j - m1) // 2, (j1 - j + m2) // 2)
    k_hi = min((j1 + j2 - j) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    total = 0.0
    for k in range(k_lo, k_hi + 1):
        k2 = 2 * k
        log_den = (
            _log_fact(k2)
            + _log_fact(j1 + j2 - j - k2)
            + _log_fact(j1 - m1 - k2)
            + _log_fact(j2 + m2 - k2)
            + _log_fact(j - j2 + m1 + k2)
            + _log_fact(j - j1 - m2 + k2)
        )
        total += (-1) ** k * math.exp(log_pref - log_den)
    return total


def clebsch_gordan(F, mF, Fp, mFp, k=1, q=0) -> float:
    """Condon-Shortley coefficient <F, mF | F', mF'; k, q>.

    The upper-level angular momentum F' is coupled with the photon (k, q) to
    the lower level F; the coefficient vanishes unless mF == mF' + q.
    """
    if k != 1 or q not in (-1, 0, 1):
        raise ValueError("only dipole couplings (k=1, q in {-1,0,1}) are supported")
    d = [_doubled(x) for x in (Fp, mFp, k, q, F, mF)]
    if d[0] < 0 or d[4] < 0:
        raise ValueError("angular momenta must be non-negative")
    return _cg_doubled(*d)


@dataclass(frozen=True)
class Level:
    index: int
    manifold: str  # "S" or "P"
    F: int
    mF: int

    @property
    def label(self) -> str:
        return f"{self.manifold}|F={self.F},m={self.mF:+d}>"


@dataclass(frozen=True)
class LinewidthParams:
    """Natural linewidth, wavelength and the matching saturation intensity."""

    gamma: float = 2 * math.pi * 19.6e6
    wavelength: float = 369.5e-9

    def __post_init__(self):
        if self.gamma <= 0 or self.wavelength <= 0:
            raise ValueError("gamma and wavelength must be positive")

    @property
    def i_sat(self) -> float:
        return saturation_intensity(self.gamma, self.wavelength)

    @property
    def photon_energy(self) -> float:
        return constants.h * constants.c / self.wavelength


def saturation_intensity(gamma: float, wavelength: float) -> float:
    """pi * Gamma * h * c / (3 lambda^3) in W/m^2."""
    if gamma <= 0 or wavelength <= 0:
        raise ValueError("gamma and wavelength must be positive")
    return math.pi * gamma * constants.h * constants.c / (3 * wavelength**3)


@dataclass(frozen=True)
class Transition:
    lower: int
    upper: int
    polarization: str
    branch: str
    allowed: bool
    strength: float  # signed dipole factor; its square is the structural factor

    @property
    def q(self) -> int:
        return {v: k for k, v in POLARIZATIONS.items()}[self.polarization]


@dataclass(frozen=True)
class LevelScheme:
    """Eight-level encoding of one ion.

    |0> = S|F=0,0> (down), |1>,|2>,|3> = S|F=1,m=-1,0,+1> (|2> is up),
    |4> = P|F'=0,0>, |5>,|6>,|7> = P|F'=1,m=-1,0,+1>.
    """

    zeeman_splitting: float = 2 * math.pi * 3.25e6
    hyperfine_splitting: float = 12.642813e9
    p_hyperfine_splitting: float = 2.105e9
    p_zeeman_ratio: float = 1.0 / 3.0  # g_F(P1/2, F'=1) / g_F(S1/2, F=1)
    levels: tuple = field(default_factory=lambda: tuple(
        Level(i, man, F, m)
        for i, (man, F, m) in enumerate([
            ("S", 0, 0), ("S", 1, -1), ("S", 1, 0), ("S", 1, 1),
            ("P", 0, 0), ("P", 1, -1), ("P", 1, 0), ("P", 1, 1),
        ])
    ))

    def __post_init__(self):
        s = [lv for lv in self.levels if lv.manifold == "S"]
        p = [lv for lv in self.levels if lv.manifold == "P"]
        if len(s) != 4 or len(p) != 4:
            raise ValueError("scheme needs exactly 4 S and 4 P levels")
        for lv in self.levels:
            if abs(lv.mF) > lv.F:
                raise ValueError(f"invalid m_F in {lv.label}")

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def s_levels(self) -> list[int]:
        return [lv.index for lv in self.levels if lv.manifold == "S"]

    @property
    def p_levels(self) -> list[int]:
        return [lv.index for lv in self.levels if lv.manifold == "P"]

    def find(self, manifold: str, F: int, mF: int) -> int:
        for lv in self.levels:
            if (lv.manifold, lv.F, lv.mF) == (manifold, F, mF):
                return lv.index
        raise KeyError((manifold, F, mF))

    def energy(self, index: int) -> tuple[int, float]:
        """Bare energy as (optical multiplier, angular frequency offset).

        P levels carry one unit of the (never numerically needed) D1(10)
        optical frequency; the offset is measured from S|F=0>.
        """
        lv = self.levels[index]
        hf = 2 * math.pi * self.hyperfine_splitting
        if lv.manifold == "S":
            return 0, (hf + lv.mF * self.zeeman_splitting) if lv.F == 1 else 0.0
        # P|F'=0> sits one D1(10) photon above S|F=1,m=0>
        base = hf
        if lv.F == 1:
            base += 2 * math.pi * self.p_hyperfine_splitting
            base += lv.mF * self.zeeman_splitting * self.p_zeeman_ratio
        return 1, base

    def branch(self, lower: int, upper: int) -> str:
        lo, up = self.levels[lower], self.levels[upper]
        if lo.F == 1 and up.F == 1:
            return D1_11
        if lo.F == 1 and up.F == 0:
            return D1_10
        if lo.F == 0 and up.F == 1:
            return D1_01
        return "F=0->F'=0"

    def transition(self, lower: int, upper: int) -> Transition:
        lo, up = self.levels[lower], self.levels[upper]
        if lo.manifold != "S" or up.manifold != "P":
            raise ValueError("transitions run from an S level to a P level")
        q_abs = up.mF - lo.mF
        if abs(q_abs) > 1:
            return Transition(lower, upper, "none", self.branch(lower, upper), False, 0.0)
        strength = dipole_factor(lo.F, lo.mF, up.F, up.mF)
        return Transition(
            lower, upper, POLARIZATIONS[q_abs], self.branch(lower, upper),
            abs(strength) > 1e-12, strength,
        )

    def transitions(self) -> list[Transition]:
        return [self.transition(s, p) for s in self.s_levels for p in self.p_levels]


def dipole_factor(F: int, mF: int, Fp: int, mFp: int) -> float:
    """Signed square root of the structural factor for S|F,mF> <-> P|F',mF'>.

    Combines the Clebsch-Gordan coefficient, the 6j recoupling and the
    J-level degeneracy ratio; its square equals 1/3 for every allowed
    S1/2 <-> P1/2 transition of 171Yb+.
    """
    q = mF - mFp
    if abs(q) > 1:
        return 0.0
    J, Jp, I = J_GROUND, J_EXCITED, NUCLEAR_SPIN
    sixj = wigner6j(J, Jp, 1, Fp, F, I)
    cg = clebsch_gordan(F, mF, Fp, mFp, 1, q)
    phase = (-1) ** int(Fp + J + 1 + I)
    degeneracy = (2 * Fp + 1) * (2 * J + 1) * (2 * J_EXCITED + 1) / (2 * J_GROUND + 1)
    return float(phase * cg * sixj * math.sqrt(degeneracy))


def structural_factor(F: int, mF: int, Fp: int, mFp: int) -> float:
    return dipole_factor(F, mF, Fp, mFp) ** 2


def rabi_frequency(intensity_sat: float, transition: Transition,
                   params: LinewidthParams | None = None) -> float:
    """Rabi frequency Omega with Omega^2 = (I/I_sat) Gamma^2/2 * structural factor.

    Forbidden transitions return 0.  The sign of the dipole factor is kept so
    that interfering paths add correctly.
    """
    if intensity_sat < 0:
        raise ValueError("intensity must be non-negative")
    params = params or LinewidthParams()
    if not transition.allowed:
        return 0.0
    return params.gamma * math.sqrt(intensity_sat / 2.0) * transition.strength


def decay_branching(upper: int, scheme: LevelScheme | None = None,
                    params: LinewidthParams | None = None) -> list[tuple[int, float]]:
    """Partial spontaneous-emission rates out of a P level, summing to Gamma."""
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    if scheme.levels[upper].manifold != "P":
        raise ValueError("decay branching is only defined for P levels")
    out = []
    for s in scheme.s_levels:
        tr = scheme.transition(s, upper)
        if tr.allowed:
            out.append((s, params.gamma * tr.strength**2))
    return out


def branching_matrix(scheme: LevelScheme | None = None) -> np.ndarray:
    """Fractions B[p, s] of decays from P level p into S level s."""
    scheme = scheme or LevelScheme()
    b = np.zeros((scheme.dim, scheme.dim))
    unit = LinewidthParams(gamma=1.0)
    for p in scheme.p_levels:
        for s, rate in decay_branching(p, scheme, unit):
            b[p, s] = rate
    return b
