"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` call for call and are used whenever the
compiled extension is unavailable (or ``AQMSIM_PURE_PYTHON=1``).
"""

import numpy as np

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri5(L, y0, t, rtol, atol, h0, max_steps):
    """Integrate dy/dt = L @ y from 0 to t with adaptive Dormand-Prince steps.

    Returns (y, n_accepted, n_rejected, last_error_norm).  n_accepted == -1
    signals that max_steps was exhausted before reaching t.
    """
    L = np.ascontiguousarray(L, dtype=np.complex128)
    y = np.array(y0, dtype=np.complex128)
    if t <= 0.0:
        return y, 0, 0, 0.0
    h = min(h0, t) if h0 > 0 else t
    time = 0.0
    k = np.empty((7, y.size), dtype=np.complex128)
    k[0] = L @ y
    accepted = rejected = 0
    err_norm = 0.0
    while time < t:
        if accepted + rejected >= max_steps:
            return y, -1, rejected, err_norm
        h = min(h, t - time)
        for s in range(1, 7):
            k[s] = L @ (y + h * (np.array(_A[s]) @ k[:s]))
        y_new = y + h * (_B5[:6] @ k[:6])
        err = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))
        if err_norm <= 1.0:
            time += h
            y = y_new
            k[0] = k[6]  # first-same-as-last
            accepted += 1
            factor = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
        else:
            rejected += 1
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        h *= factor
    return y, accepted, rejected, err_norm


def telegraph_no_photon(n_trials, detect_rate, bg_rate, r_dark, r_bright, t,
                        start_bright, seed):
    """Count trials of a bright/dark telegraph emitter with no detected photon.

    Bright state: detected photons at detect_rate, leaves to dark at r_dark.
    Dark state: returns to bright at r_bright.  Background counts at bg_rate
    in both states.
    """
    rng = np.random.default_rng(seed)
    n = int(n_trials)
    time = np.zeros(n)
    bright = np.full(n, bool(start_bright))
    active = np.ones(n, dtype=bool)
    dark_count = 0
    while active.any():
        idx = np.flatnonzero(active)
        b = bright[idx]
        emit = np.where(b, detect_rate, 0.0) + bg_rate
        switch = np.where(b, r_dark, r_bright)
        total = emit + switch
        with np.errstate(divide="ignore"):
            dwell = np.where(total > 0, rng.exponential(1.0, idx.size) / total, np.inf)
        u = rng.random(idx.size)
        ends = time[idx] + dwell >= t
        dark_count += int(ends.sum())
        active[idx[ends]] = False
        go = ~ends
        photon = go & (u * total < emit)
        active[idx[photon]] = False
        flip = go & ~photon
        time[idx[go]] += dwell[go]
        bright[idx[flip]] = ~bright[idx[flip]]
    return dark_count
