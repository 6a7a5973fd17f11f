"""Fourier-plane binary holograms for single-ion addressing.

The DMD sits in the Fourier (pupil) plane.  A binary grating with carrier
frequency k_c diffracts a first order whose complex amplitude follows the
local duty cycle and grating phase; propagating the pupil to the ion plane
is a unitary, centred 2-D FFT.  Pupil coordinates are in NA units
(sin theta); ``PupilField.na_pitch`` converts DMD pixels to them and the
ion-plane pixel is wavelength / (N * na_pitch).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

SCALE_4_PI = 4.0 / math.pi


@dataclass
class PupilField:
    amplitude: np.ndarray
    phase: np.ndarray
    pitch: float = 13.68e-6  # DMD pixel, m
    focal_length: float = 11.6e-3  # effective focal length DMD -> ion plane, m
    na: float = 0.16
    wavelength: float = 369.5e-9

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.amplitude.shape != self.phase.shape or self.amplitude.ndim != 2:
            raise ValueError("amplitude and phase maps must be 2-D with equal shape")
        if np.any(self.amplitude < 0):
            raise ValueError("amplitude must be non-negative")

    @property
    def shape(self):
        return self.amplitude.shape

    @property
    def na_pitch(self) -> float:
        return self.pitch / self.focal_length

    @property
    def image_pitch(self) -> float:
        return self.wavelength / (self.shape[1] * self.na_pitch)

    def coords(self):
        """Pupil coordinates (u, v) in NA units, origin at the array centre."""
        ny, nx = self.shape
        u = (np.arange(nx) - nx // 2) * self.na_pitch
        v = (np.arange(ny) - ny // 2) * self.na_pitch
        return np.meshgrid(u, v)

    def image_coords(self):
        ny, nx = self.shape
        dx = self.image_pitch
        x = (np.arange(nx) - nx // 2) * dx
        y = (np.arange(ny) - ny // 2) * self.wavelength / (ny * self.na_pitch)
        return np.meshgrid(x, y)

    @property
    def aperture(self) -> np.ndarray:
        u, v = self.coords()
        return (u**2 + v**2) <= self.na**2

    @property
    def field(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase) * self.aperture

    @classmethod
    def gaussian(cls, n: int = 1024, illumination_radius: float = 0.25, phase=None,
                 **kw) -> "PupilField":
        """Gaussian illumination with 1/e^2 intensity radius in NA units."""
        obj = cls(np.ones((n, n)), np.zeros((n, n)), **kw)
        u, v = obj.coords()
        obj.amplitude = np.exp(-(u**2 + v**2) / illumination_radius**2)
        if phase is not None:
            obj.phase = np.asarray(phase(u / obj.na, v / obj.na) if callable(phase) else phase,
                                   dtype=float)
        return obj

    def with_phase(self, phase) -> "PupilField":
        return PupilField(self.amplitude, phase, self.pitch, self.focal_length, self.na,
                          self.wavelength)


@dataclass
class BinaryHologram:
    mirrors: np.ndarray
    carrier: tuple  # cycles per pixel along (x, y)

    def __post_init__(self):
        self.mirrors = np.asarray(self.mirrors, dtype=bool)

    @property
    def period(self) -> float:
        return 1.0 / math.hypot(*self.carrier)

    def shift_pixels(self):
        ny, nx = self.mirrors.shape
        return int(round(self.carrier[0] * nx)), int(round(self.carrier[1] * ny))


@dataclass
class TargetField:
    field: np.ndarray
    scale: float = SCALE_4_PI
    window: np.ndarray | None = None

    def __post_init__(self):
        self.field = np.asarray(self.field, dtype=complex)
        if not np.isfinite(np.sum(np.abs(self.field) ** 2)):
            raise ValueError("target field must have finite energy")

    @classmethod
    def gaussian(cls, pupil: PupilField, waist: float, center=(0.0, 0.0),
                 window_radius: float | None = None, scale: float = SCALE_4_PI) -> "TargetField":
        """Gaussian spot in the ion plane with a disc signal window (default 6 w)."""
        x, y = pupil.image_coords()
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
        R = 6 * waist if window_radius is None else window_radius
        return cls(np.exp(-r2 / waist**2), scale, r2 <= R**2)


class BandLimitError(ValueError):
    pass


# -- propagation --------------------------------------------------------------


def propagate(obj, pupil: PupilField | None = None) -> np.ndarray:
    """Unitary far-field transform of a pupil field (or hologram on a pupil)."""
    if isinstance(obj, BinaryHologram):
        if pupil is None:
            raise ValueError("a hologram needs the illuminating pupil")
        field_ = pupil.field * obj.mirrors
    elif isinstance(obj, PupilField):
        field_ = obj.field
    else:
        field_ = np.asarray(obj, dtype=complex)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field_), norm="ortho"))


def back_propagate(image: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(image), norm="ortho"))


def first_order(hologram: BinaryHologram, pupil: PupilField) -> np.ndarray:
    """Ion-plane field re-centred on the +1 diffraction order."""
    sx, sy = hologram.shift_pixels()
    img = propagate(hologram, pupil)
    return np.roll(img, (-sy, -sx), axis=(0, 1))


def square_wave_fundamental(k: int) -> float:
    """Fourier sine coefficient of a unit square wave: 4/(pi k) for odd k."""
    if k < 1 or int(k) != k:
        raise ValueError("harmonic index must be a positive integer")
    return 0.0 if k % 2 == 0 else 4.0 / (math.pi * k)


# -- IFTA ---------------------------------------------------------------------


@dataclass
class IftaResult:
    hologram: BinaryHologram
    modulation: np.ndarray  # continuous first-order pupil modulation, |D| <= 1
    errors: list = field(default_factory=list)
    alpha: complex = 0.0


def _window_error(img, target, window):
    t = target[window]
    e = img[window]
    alpha = np.vdot(t, e) / np.vdot(t, t)
    return float(np.linalg.norm(e - alpha * t)), alpha


def ifta_generate(target: TargetField, pupil: PupilField, iterations: int = 50,
                  carrier=None, return_details: bool = False):
    """Binary hologram whose first order reproduces the target in its window.

    Continuous stage: alternating projections between pupil fields with
    |F| <= illumination inside the NA (aberration included) and ion-plane
    fields equal to alpha*target on the signal window (alpha by least
    squares, free amplitude elsewhere).  Both sets are convex, so the window
    error is non-increasing.  Binarization: duty q = arcsin(scale*pi|D|/4)/pi
    per pixel against a carrier of phase 2 pi k.r + arg D.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    ny, nx = pupil.shape
    if target.field.shape != pupil.shape:
        raise ValueError("target and pupil grids differ")
    window = target.window if target.window is not None else np.ones(pupil.shape, bool)
    # target bandwidth must fit inside the pupil aperture
    power = np.abs(back_propagate(target.field)) ** 2
    outside = power[~pupil.aperture].sum() / power.sum()
    if outside > 1e-3:
        raise BandLimitError(f"{outside:.1%} of the target spectrum lies outside the NA")
    illum = pupil.amplitude * pupil.aperture
    ab = np.exp(1j * pupil.phase)
    F = illum * ab  # start from the bare illumination
    errors = []
    alpha = 0.0
    for _ in range(iterations):
        img = propagate(F)
        err, alpha = _window_error(img, target.field, window)
        errors.append(err)
        img[window] = alpha * target.field[window]
        G = back_propagate(img)
        mag = np.abs(G)
        F = np.where(mag > illum, illum * G / np.where(mag > 0, mag, 1), G) * pupil.aperture
    errors.append(_window_error(propagate(F), target.field, window)[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        D = np.where(illum > 0, F / (illum * ab), 0.0)
    D = D * pupil.aperture
    peak = np.abs(D).max()
    if peak > 0:
        D = D / peak  # alpha is free, so use the full duty range
    if carrier is None:
        carrier = default_carrier(pupil.shape)
    holo = binarize(D, carrier, target.scale)
    if return_details:
        return IftaResult(holo, D, errors, alpha)
    return holo


def default_carrier(shape) -> tuple:
    """A carrier near 1/3.4 cycles/pixel, commensurate with the grid."""
    ny, nx = shape
    return (round(0.29 * nx) / nx, round(0.083 * ny) / ny)


def binarize(D: np.ndarray, carrier, scale: float = SCALE_4_PI) -> BinaryHologram:
    """Mirror pattern whose first order carries scale*D/4 (scale*D/pi at 4/pi)."""
    ny, nx = D.shape
    a = np.clip(scale * math.pi / 4 * np.abs(D), 0.0, 1.0)
    q = np.arcsin(a) / math.pi  # duty cycle in [0, 1/2]
    jj, ii = np.meshgrid(np.arange(nx), np.arange(ny))
    arg = 2 * math.pi * (carrier[0] * jj + carrier[1] * ii) + np.angle(D)
    mirrors = (np.cos(arg) > np.cos(math.pi * q)) & (q > 0)
    return BinaryHologram(mirrors, tuple(carrier))


def first_order_power(hologram: BinaryHologram, pupil: PupilField, radius_px: int = 40) -> float:
    """Power within radius_px pixels of the +1 order centre."""
    img = first_order(hologram, pupil)
    ny, nx = img.shape
    y, x = np.ogrid[:ny, :nx]
    m = (x - nx // 2) ** 2 + (y - ny // 2) ** 2 <= radius_px**2
    return float(np.sum(np.abs(img[m]) ** 2))


def crosstalk_at(image: np.ndarray, pupil: PupilField, center, offset) -> float:
    """|E(center + offset)|^2 / |E(center)|^2 with bilinear-free exact DFT sampling."""
    return _sample_intensity(image, pupil, (center[0] + offset[0], center[1] + offset[1])) / \
        _sample_intensity(image, pupil, center)


def _sample_intensity(image, pupil, pos):
    # evaluate the band-limited ion-plane field off-grid via its pupil spectrum
    F = back_propagate(image)
    u, v = pupil.coords()
    phase = np.exp(-2j * math.pi * (u * pos[0] + v * pos[1]) / pupil.wavelength)
    return float(abs(np.sum(F * phase)) ** 2) / F.size


# -- pupil-phase sensing with the ion ------------------------------------------


class NoFringeError(ValueError):
    pass


def _pumping_fluorescence(intensities, exposure, probe_template):
    """Photons scattered by an up-state ion during a fixed pumping exposure."""
    import scipy.linalg

    from .atomic import LevelScheme, LinewidthParams
    from .lindblad import MicrowaveDrive, build_hamiltonian, liouvillian, spontaneous_collapse_ops

    scheme, params = LevelScheme(), LinewidthParams()
    ops = spontaneous_collapse_ops(scheme, params)
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[2, 2] = 1
    v0 = rho0.reshape(-1, order="F")
    obs = np.zeros((8, 8))
    obs[scheme.p_levels, scheme.p_levels] = params.gamma
    out = []
    for s in intensities:
        if s <= 0:
            out.append(0.0)
            continue
        H = build_hamiltonian(scheme, probe_template.scaled(s / probe_template.intensity_sat),
                              MicrowaveDrive(0.0), params)
        L = liouvillian(H.matrix, ops, 8)
        # integral_0^T exp(L t) v0 dt via the augmented-matrix exponential
        n = L.shape[0]
        aug = np.zeros((n + 1, n + 1), dtype=complex)
        aug[:n, :n] = L
        aug[:n, n] = v0
        integ = scipy.linalg.expm(aug * exposure)[:n, n]
        out.append(float(np.real(np.sum(obs.reshape(-1, order="F") * integ))))
    return np.array(out)


def patch_mask(pupil: PupilField, center, radius: float) -> np.ndarray:
    """Disc of the given radius (NA units) around center (NA units)."""
    u, v = pupil.coords()
    return (u - center[0]) ** 2 + (v - center[1]) ** 2 <= radius**2


def simulate_phase_sensing(pupil: PupilField, patch_a: np.ndarray, patch_b: np.ndarray,
                           phases=None, ion_position=(0.0, 0.0), peak_intensity_sat: float = 0.05,
                           exposure: float = 1e-6, probe_template=None, return_trace: bool = False):
    """Relative pupil phase phi_b - phi_a read out by an ion.

    Only the two patches diffract.  Patch b gets an extra phase psi from the
    phase grid; the ion sees |E_a + E_b e^{i psi}|^2 and its fluorescence
    during a fixed pumping exposure is recorded.  The first harmonic of the
    fluorescence peaks where the two beams interfere constructively, at
    psi = -(phi_b - phi_a) (plus the geometric phase of an off-centre ion).
    """
    patch_a = np.asarray(patch_a, bool)
    patch_b = np.asarray(patch_b, bool)
    if np.any(patch_a & patch_b):
        raise ValueError("patches must be disjoint")
    from .crosstalk import reset_probe

    probe_template = probe_template or reset_probe(1.0)
    phases = np.linspace(-math.pi, math.pi, 24, endpoint=False) if phases is None else \
        np.asarray(phases, dtype=float)
    f = pupil.field
    u, v = pupil.coords()
    kern = np.exp(-2j * math.pi * (u * ion_position[0] + v * ion_position[1]) / pupil.wavelength)
    ea = np.sum(f[patch_a] * kern[patch_a])
    eb = np.sum(f[patch_b] * kern[patch_b])
    if abs(ea) < 1e-12 * max(abs(eb), 1e-300) or abs(eb) < 1e-12 * max(abs(ea), 1e-300) \
            or (abs(ea) == 0 and abs(eb) == 0):
        raise NoFringeError("a patch carries no light at the ion: no fringe")
    field_ = ea + eb * np.exp(1j * phases)
    inten = np.abs(field_) ** 2
    inten = peak_intensity_sat * inten / (abs(ea) + abs(eb)) ** 2
    fl = _pumping_fluorescence(inten, exposure, probe_template)
    A = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    c0, c1, s1 = np.linalg.lstsq(A, fl, rcond=None)[0]
    if math.hypot(c1, s1) <= 1e-9 * max(abs(c0), 1e-300):
        raise NoFringeError("fluorescence shows no fringe")
    psi_max = math.atan2(s1, c1)
    dphi = (-psi_max + math.pi) % (2 * math.pi) - math.pi
    if return_trace:
        return dphi, phases, fl
    return dphi


# -- amplitude profile ---------------------------------------------------------


@dataclass
class PupilAmplitudeFit:
    params: dict
    errors: dict
    residuals: np.ndarray
    degenerate: bool

    def amplitude(self, u, v):
        p = self.params
        inten = p["A"] * np.exp(-2 * ((u - p["u0"]) ** 2 / p["wu"] ** 2
                                      + (v - p["v0"]) ** 2 / p["wv"] ** 2)) + p["C"]
        return np.sqrt(np.clip(inten, 0, None))


def gaussian2d(uv, A, u0, v0, wu, wv, C):
    u, v = uv
    return A * np.exp(-2 * ((u - u0) ** 2 / wu**2 + (v - v0) ** 2 / wv**2)) + C


def _gaussian2d_jac(uv, A, u0, v0, wu, wv, C):
    u, v = uv
    g = np.exp(-2 * ((u - u0) ** 2 / wu**2 + (v - v0) ** 2 / wv**2))
    return np.column_stack([
        g,
        A * g * 4 * (u - u0) / wu**2,
        A * g * 4 * (v - v0) / wv**2,
        A * g * 4 * (u - u0) ** 2 / wu**3,
        A * g * 4 * (v - v0) ** 2 / wv**3,
        np.ones_like(u),
    ])


class RankDeficientFit(ValueError):
    pass


def fit_pupil_amplitude(u, v, intensity, sigma=None) -> PupilAmplitudeFit:
    """2-D Gaussian fit of per-patch intensities; amplitude = sqrt(intensity)."""
    import scipy.optimize

    u = np.asarray(u, float).ravel()
    v = np.asarray(v, float).ravel()
    y = np.asarray(intensity, float).ravel()
    if y.size < 6:
        raise ValueError("need at least 6 samples")
    extent = max(np.ptp(u), np.ptp(v), 1e-300)
    if np.ptp(y) <= 1e-12 * max(abs(y).max(), 1e-300):
        return PupilAmplitudeFit({"A": 0.0, "u0": float(u.mean()), "v0": float(v.mean()),
                                  "wu": math.inf, "wv": math.inf, "C": float(y.mean())},
                                 {}, np.zeros_like(y), True)
    k = int(np.argmax(y))
    C0 = float(y.min())
    A0 = float(y[k] - C0)
    wts = np.clip(y - C0, 0, None)
    wu0 = max(2 * math.sqrt(np.sum(wts * (u - u[k]) ** 2) / wts.sum()), 1e-3 * extent)
    wv0 = max(2 * math.sqrt(np.sum(wts * (v - v[k]) ** 2) / wts.sum()), 1e-3 * extent)
    p0 = np.array([A0, u[k], v[k], wu0, wv0, C0])
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, float).ravel()

    def res(p):
        return (gaussian2d((u, v), *p) - y) * w

    def jac(p):
        J = _gaussian2d_jac((u, v), *p)
        return J * (w if np.ndim(w) == 0 else w[:, None])

    sol = scipy.optimize.least_squares(res, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                                       gtol=1e-15, max_nfev=20000)
    J = sol.jac
    if np.linalg.matrix_rank(J) < J.shape[1]:
        raise RankDeficientFit("2-D Gaussian fit is rank deficient for these samples")
    dof = max(1, y.size - 6)
    s2 = float(sol.fun @ sol.fun) / dof if sigma is None else 1.0
    cov = np.linalg.pinv(J.T @ J) * s2
    names = ("A", "u0", "v0", "wu", "wv", "C")
    p = sol.x.copy()
    p[3:5] = np.abs(p[3:5])
    degenerate = bool(np.any(p[3:5] > 10 * extent))
    return PupilAmplitudeFit(dict(zip(names, map(float, p))),
                             dict(zip(names, map(float, np.sqrt(np.clip(np.diag(cov), 0, None))))),
                             sol.fun / (w if np.ndim(w) else 1.0), degenerate)


def remove_piston_tilt(phase: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Subtract the least-squares plane a + b x + c y over mask."""
    phase = np.asarray(phase, float)
    ny, nx = phase.shape
    y, x = np.mgrid[:ny, :nx]
    m = np.ones_like(phase, bool) if mask is None else np.asarray(mask, bool)
    A = np.column_stack([np.ones(m.sum()), x[m], y[m]])
    coef = np.linalg.lstsq(A, phase[m], rcond=None)[0]
    out = phase - (coef[0] + coef[1] * x + coef[2] * y)
    if mask is not None:
        out = np.where(m, out, 0.0)
    return out


# -- file formats ----------------------------------------------------------------

_MAGIC = b"AQMGRID1"
_HEADER = struct.Struct("<8sIIdd")


def write_float_grid(path, grid: np.ndarray, pitch: float, wavelength: float, **meta) -> None:
    """Row-major little-endian float64 grid with a header, plus a .json sidecar."""
    g = np.ascontiguousarray(grid, dtype="<f8")
    if g.ndim != 2:
        raise ValueError("grid must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, g.shape[0], g.shape[1], float(pitch), float(wavelength)))
        fh.write(g.tobytes(order="C"))
    side = {"rows": g.shape[0], "cols": g.shape[1], "pitch_m": pitch,
            "wavelength_m": wavelength, "dtype": "float64-le", "order": "row-major"}
    side.update(meta)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def read_float_grid(path):
    """Returns (grid, pitch, wavelength)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, ny, nx, pitch, wl = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a float grid file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != ny * nx:
        raise ValueError(f"{path}: truncated grid ({data.size} of {ny * nx} values)")
    return data.reshape(ny, nx).copy(), pitch, wl


def write_pbm(path, hologram: BinaryHologram) -> None:
    """Binary PBM (P4); a set bit is a mirror in the 'on' state."""
    m = np.asarray(hologram.mirrors, dtype=bool)
    ny, nx = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{nx} {ny}\n".encode("ascii"))
        fh.write(np.packbits(m, axis=1).tobytes())


def read_pbm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 2)
    if parts[0] != b"P4":
        raise ValueError("only binary PBM (P4) is supported")
    nx, ny = map(int, parts[1].split())
    bits = np.frombuffer(parts[2], dtype=np.uint8).reshape(ny, -1)
    return np.unpackbits(bits, axis=1)[:, :nx].astype(bool)
