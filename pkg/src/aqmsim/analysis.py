"""Curve fitting and resampling statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize


class FitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class FitResult:
    names: tuple
    params: np.ndarray
    errors: np.ndarray
    residual_norm: float
    converged: bool
    flags: dict = field(default_factory=dict)

    def value(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.errors[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.params))


def _lm(fun, jac, p0, names, x, y, sigma=None):
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def res(p):
        return (fun(x, *p) - y) * w

    def rjac(p):
        return jac(x, *p) * (w if np.ndim(w) == 0 else w[:, None])

    sol = scipy.optimize.least_squares(res, p0, jac=rjac if jac is not None else "2-point",
                                       method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                       max_nfev=20000)
    J = sol.jac
    dof = max(1, y.size - len(p0))
    s2 = float(sol.fun @ sol.fun) / dof if sigma is None else 1.0
    try:
        cov = np.linalg.inv(J.T @ J) * s2
        errors = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        errors = np.full(len(p0), np.inf)
    result = FitResult(tuple(names), sol.x, errors, float(np.linalg.norm(sol.fun)),
                       bool(sol.success))
    if not sol.success:
        raise FitError(f"fit did not converge: {sol.message}", best=result)
    return result


# -- Ramsey decay ------------------------------------------------------------


def ramsey_model(T, omega, phi, alpha, beta, C, T2):
    """sin^2(omega T + phi) alpha e^{-T/T2} + beta (1 - e^{-T/T2}) + C."""
    e = np.exp(-T / T2)
    return np.sin(omega * T + phi) ** 2 * alpha * e + beta * (1 - e) + C


def _ramsey_jac(T, omega, phi, alpha, beta, C, T2):
    e = np.exp(-T / T2)
    s = np.sin(omega * T + phi)
    c = np.cos(omega * T + phi)
    d_arg = 2 * s * c * alpha * e
    de_dT2 = e * T / T2**2
    return np.column_stack([
        d_arg * T,
        d_arg,
        s**2 * e,
        1 - e,
        np.ones_like(T),
        s**2 * alpha * de_dT2 - beta * de_dT2,
    ])


def _periodogram_omega(T, y, omega_guess=None):
    # least-squares periodogram on a frequency grid (samples may be non-uniform)
    yc = y - y.mean()
    span = T.max() - T.min()
    dt = np.min(np.diff(np.sort(T)))
    f_max = 0.5 / dt
    f_min = 0.5 / span
    freqs = np.linspace(f_min, f_max, 4000)
    if omega_guess:
        f0 = omega_guess / (2 * math.pi)
        freqs = np.concatenate([freqs, np.linspace(0.8 * f0, 1.2 * f0, 400)])
    ph = 2 * math.pi * np.outer(freqs, T)
    power = np.abs(np.exp(-1j * ph) @ yc) ** 2
    return 2 * math.pi * freqs[int(np.argmax(power))]


def fit_ramsey_decay(T, p, omega_guess=None, sigma=None) -> FitResult:
    """Fit the Ramsey decay model; returns omega, phi, alpha, beta, C, T2.

    Data should be normalized to the contrast at T ~ 0.  omega in the model
    is half the fringe angular frequency (sin^2 doubles it).  A T2 that runs
    past ten times the sampled span is reported as a lower bound with
    flags['T2_lower_bound'].
    """
    T = np.asarray(T, dtype=float)
    y = np.asarray(p, dtype=float)
    if T.size < 6:
        raise ValueError("need at least 6 samples")
    w_fringe = _periodogram_omega(T, y, omega_guess)
    if omega_guess is not None and abs(w_fringe - omega_guess) > 0.2 * omega_guess:
        w_fringe = omega_guess
    if (T.max() - T.min()) * w_fringe / (2 * math.pi) < 0.5:
        raise ValueError("samples span less than half a fringe")
    omega = w_fringe / 2
    # phase from a linear fit to cos/sin of the fringe
    A = np.column_stack([np.cos(w_fringe * T), np.sin(w_fringe * T), np.ones_like(T)])
    a, b, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    # sin^2(x) = (1 - cos 2x)/2 -> -cos(w T + 2 phi)/2
    phi = 0.5 * math.atan2(b, -a)
    # log-contrast slope from windowed fringe amplitudes
    T2 = _contrast_T2_guess(T, y, w_fringe)
    alpha = max(2 * math.hypot(a, b), 1e-3)
    C = max(0.0, float(np.min(y)))
    beta = float(np.mean(y[-max(3, T.size // 10):])) - C
    p0 = np.array([omega, phi, alpha, beta, C, T2])
    names = ("omega", "phi", "alpha", "beta", "C", "T2")
    fit = _lm(ramsey_model, _ramsey_jac, p0, names, T, y, sigma)
    # sin^2 has period pi in phi
    fit.params[1] = (fit.params[1] + math.pi / 2) % math.pi - math.pi / 2
    span = T.max() - T.min()
    fit.flags["T2_lower_bound"] = bool(fit.params[5] > 10 * span or fit.params[5] < 0)
    if fit.flags["T2_lower_bound"]:
        fit.params[5] = 10 * span
    return fit


def _contrast_T2_guess(T, y, w_fringe):
    period = 2 * math.pi / w_fringe
    edges = np.arange(T.min(), T.max() + period, period)
    pts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (T >= lo) & (T < hi)
        if sel.sum() >= 3:
            pts.append((T[sel].mean(), np.ptp(y[sel])))
    if len(pts) >= 2:
        t, c = np.array(pts).T
        c = np.clip(c, 1e-6, None)
        slope = np.polyfit(t, np.log(c), 1)[0]
        if slope < 0:
            return -1.0 / slope
    return T.max() - T.min()


def exp_model(T, A, tau):
    return A * np.exp(-T / tau)


def _exp_jac(T, A, tau):
    e = np.exp(-T / tau)
    return np.column_stack([e, A * e * T / tau**2])


def fit_exponential_decay(T, y) -> FitResult:
    """Fit y = A exp(-T/tau); a flat record returns tau=inf with a flag."""
    T = np.asarray(T, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = y > 0
    slope, icpt = np.polyfit(T[pos], np.log(y[pos]), 1)
    if slope >= -1e-300 or not np.isfinite(slope):
        return FitResult(("A", "tau"), np.array([y.mean(), math.inf]), np.array([0.0, math.inf]),
                         0.0, True, {"no_decay": True})
    p0 = np.array([math.exp(icpt), -1.0 / slope])
    if np.allclose(y, p0[0] * np.exp(-T / p0[1]), rtol=1e-13, atol=0):
        resid = y - exp_model(T, *p0)
        return FitResult(("A", "tau"), p0, np.zeros(2), float(np.linalg.norm(resid)), True)
    return _lm(exp_model, _exp_jac, p0, ("A", "tau"), T, y)


# -- beam position -----------------------------------------------------------


def beam_dip_model(x, x0, w, A, C):
    """Pumping-depletion response C - A exp(-2 (x - x0)^2 / w^2)."""
    return C - A * np.exp(-2 * (x - x0) ** 2 / w**2)


def _beam_jac(x, x0, w, A, C):
    g = np.exp(-2 * (x - x0) ** 2 / w**2)
    return np.column_stack([
        -A * g * 4 * (x - x0) / w**2,
        -A * g * 4 * (x - x0) ** 2 / w**3,
        -g,
        np.ones_like(x),
    ])


def fit_beam_position(x, signal, sigma=None) -> FitResult:
    """Beam center x0 and waist w from a scan of the ion response vs offset.

    The signal may be a dip (remaining bright population) or a peak
    (fluorescence); a peak is handled as a negative dip amplitude.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(signal, dtype=float)
    if x.size < 5:
        raise ValueError("need at least 5 offsets")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[order]
    edge = 0.5 * (y[0] + y[-1])
    k = int(np.argmax(np.abs(y - edge)))
    if k == 0 or k == x.size - 1:
        raise ValueError("scan does not bracket the beam center")
    A0 = edge - y[k]
    half = np.abs(y - edge) > 0.5 * abs(A0)
    width = max(np.ptp(x[half]) if half.sum() > 1 else np.min(np.diff(x)), np.min(np.diff(x)))
    p0 = np.array([x[k], width / math.sqrt(2 * math.log(2)), A0, edge])  # FWHM -> 1/e^2 radius
    fit = _lm(beam_dip_model, _beam_jac, p0, ("x0", "w", "A", "C"), x, y, sigma)
    fit.params[1] = abs(fit.params[1])
    return fit


# -- bootstrap -----------------------------------------------------------------


def bootstrap(data, statistic, n_resamples: int = 20, seed=None, max_retries: int = 100,
              axis: int = 0) -> float:
    """Standard deviation of statistic over resamples drawn with replacement.

    A resample on which statistic raises is redrawn, up to max_retries in
    total.  Deterministic for a fixed seed.
    """
    data = np.asarray(data)
    if data.shape[axis] == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    n = data.shape[axis]
    values = []
    retries = 0
    while len(values) < n_resamples:
        idx = rng.integers(0, n, n)
        try:
            values.append(float(statistic(np.take(data, idx, axis=axis))))
        except Exception:
            retries += 1
            if retries > max_retries:
                raise
    return float(np.std(values, ddof=1)) if n_resamples > 1 else 0.0


def combine_scans(scans):
    """Mean and standard error per point across repeated scans (rows)."""
    a = np.asarray(scans, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("scans must be a 2-D array with one scan per row")
    sem = a.std(axis=0, ddof=1) / math.sqrt(a.shape[0]) if a.shape[0] > 1 else np.zeros(a.shape[1])
    return a.mean(axis=0), sem


# -- CSV -------------------------------------------------------------------------


def format_float(x) -> str:
    """Shortest round-trip text for a number (radix point, no locale)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
            w.writerow([format_float(v) for v in vals])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        vals = []
        for r in body:
            try:
                vals.append(float(r[i]))
            except ValueError:
                vals.append(r[i])
        cols[name] = vals
    return cols
