"""Crosstalk and AQM bookkeeping.

Maps light at the asset ion to an effective AQM rate gamma, and gamma to
fidelity, for two leak channels: imperfect optical addressing (intensity
crosstalk I_X) and photons re-scattered by the process ion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .atomic import D1_10, D1_11, LevelScheme, LinewidthParams
from .lindblad import ProbeBeam

WEAK_LIMIT = 0.1  # I/I_sat above which the weak-probe map is flagged

# Scattering rates of the process ion, chosen as representative optimal
# rates at I2 = I_sat (detection) and during optical pumping (reset).
DEFAULT_GAMMA_SC = {"detection": 1.22e7, "reset": 1.67e6}
F_POL = {"detection": 1.0 / 3.0, "reset": 2.0 / 3.0}


@dataclass(frozen=True)
class ChainGeometry:
    """Two ions a distance ``spacing`` apart.

    b_field_angle is the angle between B (quantization axis) and the chain.
    """

    spacing: float = 6e-6
    b_field_angle: float = math.pi / 2

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")


@dataclass(frozen=True)
class BeamGeometry:
    waist: float = 1.50e-6
    offset: float = 6e-6
    na: float | None = 0.16
    fov_offset: float = 0.0
    wavelength: float = 369.5e-9
    aberration: object = None

    def __post_init__(self):
        if self.waist <= 0:
            raise ValueError("waist must be positive")
        if self.na is not None and not 0 < self.na < 1:
            raise ValueError("NA must lie in (0, 1)")


@dataclass
class AqmEstimate:
    p_aqm: float
    fidelity: float
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (-1e-15 <= self.p_aqm <= 1 + 1e-15):
            raise ValueError("P_AQM outside [0, 1]")


@dataclass
class GammaEstimate:
    gamma: float
    components: dict
    weak_regime: bool

    def __float__(self):
        return self.gamma


# -- fidelity chain -----------------------------------------------------------


def fidelity_from_T2(tau, T2):
    """F = 2/3 exp(-tau/T2) + 1/3."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    if T2 <= 0:
        raise ValueError("T2 must be positive")
    f = 2.0 / 3.0 * np.exp(-tau / T2) + 1.0 / 3.0
    return float(f) if f.ndim == 0 else f


def fidelity_from_contrast(contrast):
    c = np.asarray(contrast, dtype=float)
    if np.any(c < -1e-12) or np.any(c > 1 + 1e-12):
        raise ValueError("fringe contrast must lie in [0, 1]")
    f = 2.0 / 3.0 * np.clip(c, 0.0, 1.0) + 1.0 / 3.0
    return float(f) if f.ndim == 0 else f


def _psd_sqrt(rho, tol=1e-9):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min() < -tol:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.2e})")
    # eigenvalues below the roundoff floor are zero; their square roots
    # would otherwise inject ~sqrt(eps) noise
    w = np.where(w > 16 * np.finfo(float).eps * max(w.max(), 1.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity(rho_before, rho_after) -> float:
    """tr sqrt(sqrt(rho0) rho_t sqrt(rho0)) (root-fidelity convention)."""
    a = np.asarray(rho_before, dtype=complex)
    b = np.asarray(rho_after, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("density matrices must have equal dimension")
    # trace norm of sqrt(a) sqrt(b): singular values avoid the sqrt(eps)
    # noise that eigenvalues of sqrt(a) b sqrt(a) pick up near rank deficiency
    sv = np.linalg.svd(_psd_sqrt(a) @ _psd_sqrt(b), compute_uv=False)
    return float(min(1.0, np.sum(sv)))


# -- light at the asset ion ---------------------------------------------------


def gamma_from_intensity(probe: ProbeBeam, scheme: LevelScheme | None = None,
                         params: LinewidthParams | None = None,
                         cross_couplings: bool = True) -> GammaEstimate:
    """Effective AQM rate of weak light on the up state |2>.

    Each (spectral component, polarization) excites |2> at the weak-probe
    rate Gamma * s * c^2/2 * L(detuning) with c^2 the structural factor.
    Rates are grouped by the P level reached, which fixes the jump targets:
    P|F'=0> -> class D1(10)-pi, P|F'=1,+-1> -> class D1(11)-sigma+-.
    cross_couplings=False keeps only light resonant with the line it drives.
    """
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    comps = {"D1(10)-pi": 0.0, "D1(11)-sigma+": 0.0, "D1(11)-sigma-": 0.0}
    cls = {scheme.find("P", 0, 0): "D1(10)-pi", scheme.find("P", 1, 1): "D1(11)-sigma+",
           scheme.find("P", 1, -1): "D1(11)-sigma-"}
    up = scheme.find("S", 1, 0)
    e_up = scheme.energy(up)[1]
    # drive offsets of the two spectral components, referenced to S|F=1,m=0>
    drive = {D1_10: scheme.energy(scheme.find("P", 0, 0))[1] - e_up + probe.detuning,
             D1_11: scheme.energy(scheme.find("P", 1, 0))[1] - e_up + probe.detuning}
    G = params.gamma
    for p, name in cls.items():
        tr = scheme.transition(up, p)
        if not tr.allowed:
            continue
        for branch, frac in probe.spectrum.items():
            s = probe.component_intensity(branch, tr.polarization)
            if s <= 0 or (not cross_couplings and branch != tr.branch):
                continue
            delta = drive[branch] - (scheme.energy(p)[1] - e_up)
            comps[name] += G * s * tr.strength**2 / 2 / (1 + 4 * delta**2 / G**2)
    return GammaEstimate(sum(comps.values()), comps, probe.intensity_sat <= WEAK_LIMIT)


def aqm_rate(probe: ProbeBeam, scheme=None, params=None) -> float:
    return gamma_from_intensity(probe, scheme, params).gamma


def detection_probe(intensity_sat: float = 1.0, pi_fraction: float = 1.0 / 3.0) -> ProbeBeam:
    return ProbeBeam(intensity_sat, pi_fraction=pi_fraction, d1_11_fraction=0.0)


def reset_probe(intensity_sat: float = 1.25, pi_fraction: float = 0.86,
                d1_11_fraction: float = 1.0) -> ProbeBeam:
    return ProbeBeam(intensity_sat, pi_fraction=pi_fraction, d1_11_fraction=d1_11_fraction)


def p_aqm_from_gamma(gamma: float, tau: float) -> float:
    """1 - F with T2* = 2/gamma."""
    if gamma <= 0 or tau == 0:
        return 0.0
    return 1.0 - fidelity_from_T2(tau, 2.0 / gamma)


# -- optical crosstalk --------------------------------------------------------


def gaussian_crosstalk(d, w):
    if w <= 0:
        raise ValueError("waist must be positive")
    d = np.asarray(d, dtype=float)
    out = np.exp(-2 * d**2 / w**2)
    return float(out) if out.ndim == 0 else out


class ConvergenceError(RuntimeError):
    pass


def _hankel_field(r, waist, wavelength, f_max, n):
    # image field E(r) = 2 pi int_0^fmax A(f) J0(2 pi f r) f df with A the
    # angular spectrum of a Gaussian focus of the given waist
    x, wq = np.polynomial.legendre.leggauss(n)
    f = 0.5 * f_max * (x + 1)
    wq = 0.5 * f_max * wq
    amp = np.exp(-(math.pi * waist * f) ** 2)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return 2 * math.pi * (scipy.special.j0(2 * math.pi * np.outer(r, f)) * (amp * f * wq)).sum(1)


def _pupil_phase(aberration, u, v):
    if aberration is None:
        return np.zeros_like(u)
    if callable(aberration):
        return np.asarray(aberration(u, v), dtype=float)
    from scipy.interpolate import RegularGridInterpolator
    arr = np.asarray(aberration, dtype=float)
    ax0 = np.linspace(-1, 1, arr.shape[0])
    ax1 = np.linspace(-1, 1, arr.shape[1])
    interp = RegularGridInterpolator((ax0, ax1), arr, bounds_error=False, fill_value=0.0)
    return interp(np.stack([v, u], axis=-1))


def _dft_field(offsets, geometry, aberration, n):
    # direct 2-D quadrature over the NA disc; unit-disc pupil coordinates
    lam, w, na = geometry.wavelength, geometry.waist, geometry.na
    g = (np.arange(n) + 0.5) / n * 2 - 1
    u, v = np.meshgrid(g, g)
    inside = u**2 + v**2 <= 1
    f_max = na / lam
    fx, fy = u[inside] * f_max, v[inside] * f_max
    amp = np.exp(-(math.pi * w) ** 2 * (fx**2 + fy**2))
    field = amp * np.exp(1j * _pupil_phase(aberration, u[inside], v[inside]))
    out = []
    for d in np.atleast_1d(offsets):
        out.append(np.sum(field * np.exp(2j * math.pi * fx * d)))
    return np.array(out), np.sum(field)


def psf_crosstalk(geometry: BeamGeometry, aberration=None, offsets=None,
                  tol: float = 1e-7, n: int = 256):
    """Relative image-plane intensity I(d)/I(0) of a Gaussian focus through a pupil.

    The pupil holds the angular spectrum of a Gaussian focus of waist w, hard
    truncated at the NA (geometry.na=None disables truncation).  Without
    aberration a radial Hankel quadrature is used; with an aberration phase
    (callable of unit-disc pupil coordinates, or a square array sampled on
    [-1, 1]^2) the field is a direct 2-D sum.  Both routes double the
    sampling until successive results agree to tol (relative to the peak).
    """
    if aberration is None:
        aberration = geometry.aberration
    offsets = geometry.offset if offsets is None else offsets
    scalar = np.ndim(offsets) == 0
    d = np.atleast_1d(np.asarray(offsets, dtype=float))
    lam, w = geometry.wavelength, geometry.waist
    if aberration is None:
        f_max = geometry.na / lam if geometry.na is not None else 12 / (math.pi * w)
        m = 64
        prev = None
        while m <= 1 << 15:
            e = _hankel_field(np.concatenate([[0.0], d]), w, lam, f_max, m)
            rel = np.abs(e[1:]) ** 2 / abs(e[0]) ** 2
            if prev is not None and np.max(np.abs(rel - prev)) < tol:
                return float(rel[0]) if scalar else rel
            prev = rel
            m *= 2
        raise ConvergenceError("Hankel quadrature did not converge")
    if geometry.na is None:
        raise ValueError("an aberrated pupil needs a finite NA")
    m = n
    prev = None
    while m <= 2048:
        e, e0 = _dft_field(d, geometry, aberration, m)
        peak = _peak_intensity(geometry, aberration, m)
        rel = np.abs(e) ** 2 / peak
        if prev is not None and np.max(np.abs(rel - prev)) < max(tol, 1e-3 * np.max(rel)):
            return float(rel[0]) if scalar else rel
        prev = rel
        m *= 2
    raise ConvergenceError("pupil grid too coarse: crosstalk did not converge")


def _peak_intensity(geometry, aberration, n):
    # with aberrations the focus may move; take the maximum over a small scan
    xs = np.linspace(-2, 2, 41) * geometry.waist
    e, _ = _dft_field(xs, geometry, aberration, n)
    return float(np.max(np.abs(e) ** 2))


# -- inter-ion scattering -----------------------------------------------------


def f_angle(process: str, theta_b: float) -> float:
    """Dipole pattern factor toward the neighbour; theta_b is the B-chain angle.

    pi emission (detection) goes as sin^2(theta_b), sigma emission (reset) as
    (1 + cos^2(theta_b))/2: 1 and 1/2 for B perpendicular to the chain.
    """
    if process == "detection":
        return math.sin(theta_b) ** 2
    if process == "reset":
        return (1 + math.cos(theta_b) ** 2) / 2
    raise ValueError(f"unknown process {process!r}")


def interion_intensity(chain: ChainGeometry, process: str, gamma_sc: float | None = None,
                       params: LinewidthParams | None = None) -> float:
    """I_ab = f_pol f_angle h nu Gamma_sc / (4 pi a^2), in units of I_sat."""
    params = params or LinewidthParams()
    if process not in F_POL:
        raise ValueError(f"unknown process {process!r}")
    gamma_sc = DEFAULT_GAMMA_SC[process] if gamma_sc is None else gamma_sc
    if gamma_sc < 0:
        raise ValueError("scattering rate must be non-negative")
    I = (F_POL[process] * f_angle(process, chain.b_field_angle) * params.photon_energy
         * gamma_sc / (4 * math.pi * chain.spacing**2))
    return I / params.i_sat


def scattered_probe(intensity_sat: float, process: str) -> ProbeBeam:
    """Light from the process ion as seen by the asset ion.

    Detection: pi-polarized photons near the D1(10) line.  Reset: sigma
    photons near the D1(11) line, split equally between sigma+ and sigma-.
    """
    if process == "detection":
        return ProbeBeam(intensity_sat, pi_fraction=1.0, d1_11_fraction=0.0)
    if process == "reset":
        return ProbeBeam(intensity_sat, pi_fraction=0.0, d1_11_fraction=1.0)
    raise ValueError(f"unknown process {process!r}")


DETECTION_TIME = 11e-6


def default_process_time(process: str) -> float:
    if process == "detection":
        return DETECTION_TIME
    if process == "reset":
        return _reset_tau_op()
    raise ValueError(f"unknown process {process!r}")


_TAU_CACHE = {}


def _reset_tau_op(intensity_sat=1.25, pi_fraction=0.86, d1_11_fraction=1.0):
    key = (intensity_sat, pi_fraction, d1_11_fraction)
    if key not in _TAU_CACHE:
        from .protocols import reset_time
        _TAU_CACHE[key] = reset_time(reset_probe(*key))[1]
    return _TAU_CACHE[key]


def reset_asset_fidelity(pi_fraction: float, d1_11_fraction: float = 1.0, i2: float = 1.25,
                         i_x: float = 5e-5):
    """(F_1|2, tau_op) for the asset while the process ion is reset with this light."""
    tau = _reset_tau_op(i2, pi_fraction, d1_11_fraction)
    probe = reset_probe(i2, pi_fraction, d1_11_fraction)
    g = aqm_rate(probe.scaled(i_x))
    return 1.0 - p_aqm_from_gamma(g, tau), tau


def p_aqm_star(chain: ChainGeometry, process: str, tau: float | None = None,
               gamma_sc: float | None = None, params: LinewidthParams | None = None) -> float:
    """AQM floor from photons scattered by the process ion during tau."""
    tau = default_process_time(process) if tau is None else tau
    if tau < 0:
        raise ValueError("tau must be non-negative")
    I_ab = interion_intensity(chain, process, gamma_sc, params)
    return p_aqm_from_gamma(aqm_rate(scattered_probe(I_ab, process), params=params), tau)


def p_aqm_star_band(spacing: float, tau_detection: float | None = None,
                    tau_reset: float | None = None, n_angles: int = 31):
    """(min, max) of P*_AQM over theta_B in [0, pi/2] and both processes."""
    vals = []
    for th in np.linspace(0, math.pi / 2, n_angles):
        chain = ChainGeometry(spacing, th)
        vals.append(p_aqm_star(chain, "detection", tau_detection))
        vals.append(p_aqm_star(chain, "reset", tau_reset))
    return min(vals), max(vals)


def aqm_estimate(i_x: float, process: str, chain: ChainGeometry | None = None,
                 i2: float = 1.0, tau: float | None = None, probe: ProbeBeam | None = None,
                 include_scattering: bool = False) -> AqmEstimate:
    """P_AQM of the asset for crosstalk i_x of a process beam of intensity i2.

    probe is the process light at unit intensity (default: detection light
    with I_pi/I = 1/3, or the reset light of the pumping experiments).
    """
    chain = chain or ChainGeometry()
    if probe is None:
        probe = detection_probe(i2) if process == "detection" else reset_probe(i2)
    tau = (DETECTION_TIME if process == "detection" else _reset_tau_op(i2)) if tau is None else tau
    g_x = aqm_rate(probe.scaled(i_x * i2 / probe.intensity_sat))
    g_sc = 0.0
    if include_scattering:
        g_sc = aqm_rate(scattered_probe(interion_intensity(chain, process), process))
    p = p_aqm_from_gamma(g_x + g_sc, tau)
    return AqmEstimate(p, 1 - p, {"optical_crosstalk": p_aqm_from_gamma(g_x, tau),
                                  "interion_scattering": p_aqm_from_gamma(g_sc, tau)})


# -- direct simulation helpers ------------------------------------------------


def bloch_angle_scan(thetas, probe: ProbeBeam, tau: float, model: str = "full",
                     scheme: LevelScheme | None = None, params: LinewidthParams | None = None):
    """Uhlmann fidelity of cos(t/2)|2> + sin(t/2)|0> after tau under the probe.

    Evolution is in the frame co-rotating with the bare qubit (no Ramsey
    detuning), so only the light changes the state.
    """
    from .lindblad import (MicrowaveDrive, build_hamiltonian, evolve, liouvillian,
                           pure_state, spontaneous_collapse_ops, weak_probe_collapse_ops)
    scheme = scheme or LevelScheme()
    params = params or LinewidthParams()
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if model == "full":
        dim = scheme.dim
        H = build_hamiltonian(scheme, probe, MicrowaveDrive(0.0, 0.0), params)
        h, ops = H.matrix, spontaneous_collapse_ops(scheme, params)
        to_ref = H.to_reference
    elif model == "weak":
        dim = 4
        h = np.zeros((4, 4), dtype=complex)
        ops = []
        for cls, g in gamma_from_intensity(probe, scheme, params).components.items():
            if g > 0:
                ops += weak_probe_collapse_ops(cls, g)
        to_ref = lambda r, t: r  # noqa: E731
    else:
        raise ValueError(f"unknown model {model!r}")
    L = liouvillian(h, ops, dim)
    out = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        psi = np.zeros(dim, dtype=complex)
        psi[2], psi[0] = math.cos(th / 2), math.sin(th / 2)
        rho0 = pure_state(psi)
        rho = to_ref(evolve(rho0, h, ops, tau, method="expm", L=L), tau)
        out[i] = uhlmann_fidelity(rho0, rho)
    return out


def simulated_T2(probe: ProbeBeam, model: str = "weak", **kw) -> float:
    from .protocols import RamseyConfig, simulate_ramsey
    return simulate_ramsey(RamseyConfig(probe=probe, model=model, **kw)).T2


class ExtrapolationError(ValueError):
    pass


def estimate_IX_from_T2(T2_measured: float, template: ProbeBeam | None = None,
                        i2: float = 1.25, model: str = "weak", lo: float = 1e-8,
                        hi: float = 1e-2, rtol: float = 1e-4) -> float:
    """Invert the simulated T2*(I_X) map by bisection in log I_X.

    template is the process light at intensity i2; the asset sees it scaled
    by I_X.
    """
    if T2_measured <= 0:
        raise ValueError("T2 must be positive")
    template = template or detection_probe(i2)

    def t2(ix):
        return simulated_T2(template.scaled(ix * i2 / template.intensity_sat), model)

    t_lo, t_hi = t2(lo), t2(hi)
    if not t_hi <= T2_measured <= t_lo:
        raise ExtrapolationError(
            f"T2={T2_measured:g} s outside the simulated range [{t_hi:g}, {t_lo:g}] s")
    a, b = math.log(lo), math.log(hi)
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if t2(math.exp(mid)) > T2_measured:
            a = mid
        else:
            b = mid
    return math.exp(0.5 * (a + b))
