"""Pulse-sequence simulators built on the Lindblad engine.

Ramsey interferometry with the probe on during the wait, optical-pumping
reset and detection illumination.  Microwave pi/2 pulses are ideal
unitaries applied in the microwave (reference) frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .atomic import LevelScheme, LinewidthParams
from .lindblad import (
    IntegratorError,
    MicrowaveDrive,
    ProbeBeam,
    atom_hamiltonian,
    build_hamiltonian,
    check_density_matrix,
    evolve,
    liouvillian,
    projector,
    propagate,
    propagator,
    spontaneous_collapse_ops,
    weak_probe_collapse_ops,
)

US = 1e-6


class NoResetError(ValueError):
    """The probe does not pump the ion out of the bright manifold."""


def sample_wait_grid(T2_coarse: float, n_intervals: int = 5, points: int = 21,
                     start: float = 10 * US, span: float = 200 * US) -> np.ndarray:
    """Wait times for a Ramsey scan: 5 blocks of 21 points from 10 us to 2*T2.

    Blocks are spread evenly over [start, 2*T2_coarse].  When the range is
    too short for non-overlapping 200 us blocks the block span shrinks so
    that the grid stays strictly increasing.
    """
    if T2_coarse <= 0:
        raise ValueError("T2_coarse must be positive")
    total = 2 * T2_coarse - start
    if total <= 0:
        raise ValueError("2*T2_coarse must exceed the first wait time")
    span = min(span, total / n_intervals * (points - 1) / points)
    starts = start + np.linspace(0.0, total - span, n_intervals)
    grid = np.concatenate([s + np.linspace(0.0, span, points) for s in starts])
    return grid


def pi2_unitary(dim: int, phase: float = 0.0, lower: int = 0, upper: int = 2) -> np.ndarray:
    """Ideal microwave pi/2 rotation about cos(phase) X + sin(phase) Y."""
    u = np.eye(dim, dtype=complex)
    c = math.cos(math.pi / 4)
    u[lower, lower] = u[upper, upper] = c
    u[upper, lower] = -1j * c * np.exp(1j * phase)
    u[lower, upper] = -1j * c * np.exp(-1j * phase)
    return u


def _rotate(rho, u):
    return u @ rho @ u.conj().T


@dataclass
class RamseyConfig:
    probe: ProbeBeam | None = None
    mw_detuning: float = 2 * math.pi * 10e3
    waits: np.ndarray | None = None
    pulse_duration: float = 6 * US
    ideal_pulses: bool = True
    model: str = "weak"  # "weak" (4-level collapse table) or "full" (8-level)
    repetitions: int = 200
    shot_noise: bool = False
    seed: int | None = None
    method: str = "expm"
    scheme: LevelScheme = field(default_factory=LevelScheme)
    params: LinewidthParams = field(default_factory=LinewidthParams)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.model not in ("weak", "full"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.waits is not None:
            w = np.asarray(self.waits, dtype=float)
            if w.ndim != 1 or w.size == 0 or np.any(np.diff(w) <= 0) or w[0] < 0:
                raise ValueError("wait grid must be non-negative and strictly increasing")
            self.waits = w


@dataclass
class RamseyResult:
    waits: np.ndarray
    p_up: np.ndarray
    contrast: np.ndarray
    T2: float
    T2_err: float
    fit: object = None
    counts: np.ndarray | None = None


class _RamseyEngine:
    """Caches the generator for one configuration and maps a wait to rho(T)."""

    def __init__(self, cfg: RamseyConfig):
        self.cfg = cfg
        if cfg.model == "weak":
            self.dim = 4
            h = atom_hamiltonian(cfg.mw_detuning, cfg.scheme.zeeman_splitting)
            ops = []
            if cfg.probe is not None:
                from .crosstalk import gamma_from_intensity
                rates = gamma_from_intensity(cfg.probe, cfg.scheme, cfg.params).components
                for cls, g in rates.items():
                    if g > 0:
                        ops += weak_probe_collapse_ops(cls, g)
            self.h = h
            self.ops = ops
            self.frame = None
        else:
            self.dim = cfg.scheme.dim
            self.frame = build_hamiltonian(cfg.scheme, cfg.probe,
                                           MicrowaveDrive(0.0, cfg.mw_detuning), cfg.params)
            self.h = self.frame.matrix
            self.ops = spontaneous_collapse_ops(cfg.scheme, cfg.params)
        self.L = liouvillian(self.h, self.ops, self.dim)
        # finite pulses: resonant microwave Rabi drive in the reference frame
        self.rabi = math.pi / 2 / cfg.pulse_duration

    def pulse(self, rho, phase):
        if self.cfg.ideal_pulses:
            return _rotate(rho, pi2_unitary(self.dim, phase))
        h = np.zeros((self.dim, self.dim), dtype=complex)
        h[2, 0] = self.rabi / 2 * np.exp(1j * phase)
        h[0, 2] = np.conj(h[2, 0])
        return evolve(rho, h, [], self.cfg.pulse_duration, method="expm")

    def wait(self, rho, T):
        out = evolve(rho, self.h, self.ops, T, method=self.cfg.method, L=self.L)
        if self.frame is not None:
            out = self.frame.to_reference(out, T)
        return out

    def run(self, T):
        rho = projector(self.dim, 0)
        rho = self.pulse(rho, 0.0)
        rho = self.wait(rho, T)
        p = [self.pulse(rho, ph)[2, 2].real for ph in (0.0, math.pi / 2, math.pi, 1.5 * math.pi)]
        contrast = math.hypot(p[0] - p[2], p[1] - p[3])
        return p[0], min(1.0, contrast)


def fringe_point(cfg: RamseyConfig, T: float) -> tuple[float, float]:
    """(P(up), phase-scanned fringe contrast) after a single wait T."""
    return _RamseyEngine(cfg).run(T)


def coarse_T2(engine: _RamseyEngine, t0: float = 10 * US, t_max: float = 10.0) -> float:
    """Three-point exponential estimate of the contrast decay time.

    Expands T by factors of 4 until the contrast drops below 1/e, then fits
    log contrast through the last three points.
    """
    T = t0
    pts = []
    while T < t_max:
        c = engine.run(T)[1]
        pts.append((T, max(c, 1e-300)))
        if c < math.exp(-1) and len(pts) >= 3:
            break
        T *= 4
    if len(pts) < 3:
        return math.inf
    t, c = np.array(pts[-3:]).T
    slope = np.polyfit(t, np.log(c), 1)[0]
    return math.inf if slope >= 0 else -1.0 / slope


def simulate_ramsey(cfg: RamseyConfig) -> RamseyResult:
    """Prepare |0>, pi/2, wait T with the probe on, pi/2, read rho_22.

    Noise-free by default: T2* comes from an exponential fit of the
    phase-scanned contrast.  With shot_noise the fringe is sampled
    binomially and fitted with the full Ramsey decay model instead.
    """
    from . import analysis

    engine = _RamseyEngine(cfg)
    waits = cfg.waits
    if waits is None:
        t2c = coarse_T2(engine)
        if not math.isfinite(t2c):
            waits = np.linspace(10 * US, 2e-3, 105)
        else:
            waits = sample_wait_grid(t2c)
    p_up = np.empty(waits.size)
    contrast = np.empty(waits.size)
    for i, T in enumerate(waits):
        p_up[i], contrast[i] = engine.run(T)
    p_up = np.clip(p_up, 0.0, 1.0)
    counts = None
    if cfg.shot_noise:
        rng = np.random.default_rng(cfg.seed)
        counts = rng.binomial(cfg.repetitions, p_up)
        fit = analysis.fit_ramsey_decay(waits, counts / cfg.repetitions,
                                        omega_guess=cfg.mw_detuning)
        T2, T2_err = fit.value("T2"), fit.error("T2")
    else:
        fit = analysis.fit_exponential_decay(waits, contrast)
        T2, T2_err = fit.value("tau"), fit.error("tau")
    return RamseyResult(waits, p_up, contrast, T2, T2_err, fit, counts)


def ramsey_contrast(cfg: RamseyConfig, waits) -> np.ndarray:
    engine = _RamseyEngine(cfg)
    return np.array([engine.run(T)[1] for T in np.atleast_1d(waits)])


# -- optical pumping and detection ------------------------------------------


def _trace(L, rho0, times, dim, check=True):
    """Density matrices on a uniform time grid by repeated exact propagation."""
    times = np.asarray(times, dtype=float)
    if times.size > 1:
        dt = np.diff(times)
        if np.ptp(dt) > 1e-9 * dt.max():
            raise ValueError("trace sampling requires a uniform time grid")
        U = propagator(L, dt[0])
    v = rho0.reshape(-1, order="F").astype(complex)
    if times[0] > 0:
        v = propagate(L, v, times[0])
    out = np.empty((times.size, dim, dim), dtype=complex)
    for i in range(times.size):
        out[i] = v.reshape((dim, dim), order="F")
        if i + 1 < times.size:
            v = U @ v
    if check:
        check_density_matrix(out[-1], "at the end of the trace")
    return out


def _p_population(rhos, scheme):
    p = scheme.p_levels
    return np.real(np.einsum("tii->t", rhos[:, p][:, :, p]))


def simulate_reset(rho0, probe: ProbeBeam, duration: float, n_samples: int = 401,
                   scheme: LevelScheme | None = None, params: LinewidthParams | None = None,
                   cross_couplings: bool = True):
    """Optical pumping of one ion; returns (rho(duration), (times, fluorescence)).

    Fluorescence is the scattering-rate proxy Gamma * P-manifold population.
    """
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    if duration < 0:
        raise ValueError("duration must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    check_density_matrix(rho0, "initial state")
    times = np.linspace(0.0, duration, n_samples)
    if duration == 0:
        return rho0.copy(), (times[:1], params.gamma * _p_population(rho0[None], scheme))
    H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0), params,
                          cross_couplings=cross_couplings)
    L = liouvillian(H.matrix, spontaneous_collapse_ops(scheme, params), scheme.dim)
    rhos = _trace(L, rho0, times, scheme.dim)
    fl = params.gamma * _p_population(rhos, scheme)
    return H.to_reference(rhos[-1], duration), (times, fl)


def reset_time(probe: ProbeBeam, rho0=None, scheme: LevelScheme | None = None,
               params: LinewidthParams | None = None, horizon: float = 4 * US,
               samples: int = 2000, max_horizon: float = 1e-3, cross_couplings: bool = True):
    """(T1, tau_op = 7*T1) from the 1/e point of the simulated fluorescence.

    The ion starts in |2> (up) unless rho0 is given; the fluorescence is
    normalized to its initial (peak) value, reached within a few 1/Gamma.
    """
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    if rho0 is None:
        rho0 = projector(scheme.dim, scheme.find("S", 1, 0))
    H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0), params,
                          cross_couplings=cross_couplings)
    L = liouvillian(H.matrix, spontaneous_collapse_ops(scheme, params), scheme.dim)
    while horizon <= max_horizon:
        times = np.linspace(0.0, horizon, samples + 1)
        fl = params.gamma * _p_population(_trace(L, rho0, times, scheme.dim), scheme)
        k_peak = int(np.argmax(fl))
        peak = fl[k_peak]
        if peak <= 1e-12 * params.gamma:
            raise NoResetError("no reset: the probe does not scatter from the initial state")
        below = np.flatnonzero(fl[k_peak:] < peak / math.e)
        if below.size:
            k = k_peak + below[0]
            # interpolate log-fluorescence between the bracketing samples
            y0, y1 = math.log(fl[k - 1]), math.log(max(fl[k], 1e-300))
            frac = (y0 - (math.log(peak) - 1.0)) / (y0 - y1)
            T1 = times[k - 1] + frac * (times[k] - times[k - 1])
            return T1, 7 * T1
        horizon *= 4
    raise NoResetError(f"no reset: fluorescence did not decay to 1/e within {max_horizon:g} s")


def simulate_detection_illumination(rho0, probe: ProbeBeam, tau_d: float,
                                    n_samples: int = 201, cross_couplings: bool = True,
                                    scheme: LevelScheme | None = None,
                                    params: LinewidthParams | None = None):
    """Evolve under detection light; returns (rho, (times, scattering rate))."""
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    if tau_d < 0:
        raise ValueError("tau_d must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    check_density_matrix(rho0, "initial state")
    if tau_d == 0:
        return rho0.copy(), (np.zeros(1), params.gamma * _p_population(rho0[None], scheme))
    times = np.linspace(0.0, tau_d, n_samples)
    H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0), params,
                          cross_couplings=cross_couplings)
    L = liouvillian(H.matrix, spontaneous_collapse_ops(scheme, params), scheme.dim)
    rhos = _trace(L, rho0, times, scheme.dim)
    return H.to_reference(rhos[-1], tau_d), (times, params.gamma * _p_population(rhos, scheme))


def bright_scattering_rate(probe: ProbeBeam, scheme: LevelScheme | None = None,
                           params: LinewidthParams | None = None, settle: float = 100 * US) -> float:
    """Quasi-steady scattering rate of the bright manifold (no off-resonant leak)."""
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0), params, cross_couplings=False)
    rho = evolve(projector(scheme.dim, scheme.find("S", 1, 0)), H,
                 spontaneous_collapse_ops(scheme, params), settle, method="expm")
    return params.gamma * float(_p_population(rho[None], scheme)[0])


def pumping_rates(probe: ProbeBeam, scheme: LevelScheme | None = None,
                  params: LinewidthParams | None = None) -> tuple[float, float]:
    """(R_d, R_b): bright->dark and dark->bright pumping by off-resonant light.

    The slowest relaxation rate of the Liouvillian is R_d + R_b and the
    steady-state dark population is R_d / (R_d + R_b).
    """
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0), params, cross_couplings=True)
    L = liouvillian(H.matrix, spontaneous_collapse_ops(scheme, params), scheme.dim)
    w, vr = np.linalg.eig(L)
    order = np.argsort(-w.real)
    lam = -w[order[1]].real
    ss = vr[:, order[0]].reshape((scheme.dim, scheme.dim), order="F")
    ss = ss / np.trace(ss)
    dark = float(ss[0, 0].real)
    if not (0.0 <= dark <= 1.0) or lam <= 0:
        raise IntegratorError("could not isolate the pumping eigenmode", achieved=lam)
    return lam * dark, lam * (1.0 - dark)


DETECTION_PI_FRACTION = 1.0 / 3.0


@lru_cache(maxsize=32)
def detection_rates(intensity_sat: float = 1.0, pi_fraction: float = DETECTION_PI_FRACTION,
                    zeeman_splitting: float = 2 * math.pi * 3.25e6):
    """(R_o, R_b, R_d) for D1(10) detection light on one ion."""
    scheme = LevelScheme(zeeman_splitting=zeeman_splitting)
    probe = ProbeBeam(intensity_sat, pi_fraction=pi_fraction)
    R_o = bright_scattering_rate(probe, scheme)
    R_d, R_b = pumping_rates(probe, scheme)
    return R_o, R_b, R_d
