"""Photon-counting statistics of state detection on the process ion.

A qubit is called bright if at least one photon is registered in the
detection window.  Closed forms assume at most one pumping event per
window; ``monte_carlo_no_photon`` simulates the full bright/dark telegraph
process for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .crosstalk import aqm_rate, detection_probe, fidelity_from_T2


@dataclass(frozen=True)
class DetectionModel:
    """Rates in 1/s.  R_o: bright scattering, R_b: dark->bright pumping,
    R_d: bright->dark pumping, R_bg: background counts."""

    R_o: float
    R_b: float = 0.0
    R_d: float = 0.0
    R_bg: float = 0.0
    efficiency: float = 0.04
    tau_d: float = 11e-6

    def __post_init__(self):
        if min(self.R_o, self.R_b, self.R_d, self.R_bg) < 0:
            raise ValueError("rates must be non-negative")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.tau_d < 0:
            raise ValueError("tau_d must be non-negative")

    @classmethod
    def from_simulation(cls, intensity_sat: float = 1.0, pi_fraction: float = 1.0 / 3.0,
                        **kw) -> "DetectionModel":
        """Rates from the eight-level model under detection light."""
        from .protocols import detection_rates
        R_o, R_b, R_d = detection_rates(intensity_sat, pi_fraction)
        return cls(R_o=R_o, R_b=R_b, R_d=R_d, **kw)

    def with_efficiency(self, eps: float) -> "DetectionModel":
        return replace(self, efficiency=eps)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def p_no_photon_bright(m: DetectionModel, t, corrected: bool = True):
    """P(n=0 | up) over a window t.

    corrected=False reproduces the published variant that lacks the
    efficiency factor in the second exponent (kept for comparison only).
    """
    t = _check_t(t)
    er = m.efficiency * m.R_o
    k = er + m.R_d
    bg = np.exp(-m.R_bg * t)
    coef = m.R_d / k if k > 0 else 0.0
    first = coef * bg * -np.expm1(-k * t)
    rate2 = er if corrected else m.R_o
    second = np.exp(-m.R_d * t) * np.exp(-(rate2 + m.R_bg) * t)
    return _out(first + second)


def p_no_photon_dark(m: DetectionModel, t):
    """P(n=0 | down) over a window t; the eps*R_o == R_b point is taken as a limit."""
    t = _check_t(t)
    er = m.efficiency * m.R_o
    rb = m.R_b
    bg = np.exp(-m.R_bg * t)
    diff = er - rb
    if abs(diff) <= 1e-9 * max(er, rb, 1e-300):
        # R_b/(a-b) (e^-bt - e^-at) -> R_b t e^-bt
        first = rb * t * np.exp(-rb * t)
    else:
        # (e^-rb t - e^-er t)/(er - rb) written stably
        first = rb * np.exp(-min(rb, er) * t) * -np.expm1(-abs(diff) * t) / abs(diff)
    return _out(first * bg + np.exp(-rb * t) * bg)


def avg_detection_fidelity(m: DetectionModel, t, corrected: bool = True):
    return _out(0.5 * ((1 - np.asarray(p_no_photon_bright(m, t, corrected)))
                       + np.asarray(p_no_photon_dark(m, t))))


def first_photon_halving(tau_raw, enabled: bool = True):
    """Asset exposure when detection stops at the first photon."""
    tau_raw = _check_t(tau_raw)
    return _out(tau_raw / 2 if enabled else tau_raw)


@dataclass
class OptimalTime:
    tau: float
    value: float
    unimodal: bool
    detection_fidelity: float
    asset_fidelity: float


def _golden(f, a, b, tol):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_detection_time(m: DetectionModel, i_x: float, asset_probe=None, i2: float = 1.0,
                           halving: bool = True, t_max: float = 200e-6, n_grid: int = 801,
                           tol: float = 1e-10) -> OptimalTime:
    """Maximize F_det(t) * F_asset(t) over the detection window t.

    The asset fidelity is 2/3 exp(-tau/T2) + 1/3 with T2 = 2/gamma, gamma
    being the AQM rate of detection light leaked with crosstalk i_x, and tau
    the asset exposure, halved when the first-photon stop is enabled.
    """
    probe = asset_probe or detection_probe(i2)
    gamma = aqm_rate(probe.scaled(i_x * i2 / probe.intensity_sat)) if i_x > 0 else 0.0

    def asset(t):
        if gamma == 0:
            return 1.0
        return fidelity_from_T2(first_photon_halving(t, halving), 2.0 / gamma)

    def objective(t):
        return avg_detection_fidelity(m, t) * asset(t)

    grid = np.linspace(0.0, t_max, n_grid)
    vals = np.array([objective(t) for t in grid])
    k = int(np.argmax(vals))
    # local maxima on the grid (ignoring flat plateaus at numerical precision)
    d = np.diff(vals)
    sig = np.sign(np.where(np.abs(d) < 1e-15, 0.0, d))
    sig = sig[sig != 0]
    n_peaks = int(np.sum((sig[:-1] > 0) & (sig[1:] < 0))) + int(sig.size and sig[-1] > 0)
    unimodal = n_peaks <= 1
    if unimodal and 0 < k < n_grid - 1:
        tau = _golden(objective, grid[k - 1], grid[k + 1], tol)
    else:
        tau = grid[k]
    return OptimalTime(tau, objective(tau), unimodal, avg_detection_fidelity(m, tau), asset(tau))


def monte_carlo_no_photon(m: DetectionModel, t: float, start_bright: bool,
                          n_trials: int = 1_000_000, seed: int = 0, backend=None):
    """Fraction of telegraph-process trials with no detected photon, and its 1-sigma."""
    k = kernels if backend is None else kernels.get_backend(backend)
    n0 = k.telegraph_no_photon(int(n_trials), m.efficiency * m.R_o, m.R_bg, m.R_d, m.R_b,
                               float(t), bool(start_bright), int(seed))
    p = n0 / n_trials
    return p, math.sqrt(max(p * (1 - p), 1.0 / n_trials) / n_trials)
