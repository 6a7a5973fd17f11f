import math

import numpy as np
import pytest
import scipy.linalg

from aqmsim import kernels
from aqmsim import _kernels_py

try:
    compiled = kernels.get_backend("cython")
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def random_generator(seed, n=9):
    rng = np.random.default_rng(seed)
    L = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / n
    L -= 1.5 * np.eye(n)  # contracting
    return L, rng.normal(size=n) + 1j * rng.normal(size=n)


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.get_backend("python") is _kernels_py
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("seed", range(3))
def test_python_dopri5_matches_expm(seed):
    L, y0 = random_generator(seed)
    y, acc, rej, _ = _kernels_py.dopri5(L, y0, 2.0, 1e-11, 1e-14, 1e-3, 100000)
    assert acc > 0
    assert np.allclose(y, scipy.linalg.expm(2.0 * L) @ y0, rtol=1e-8, atol=1e-10)


def test_step_budget_reported():
    L, y0 = random_generator(0)
    _, acc, _, _ = _kernels_py.dopri5(L, y0, 100.0, 1e-12, 1e-15, 1e-3, 5)
    assert acc == -1


@needs_compiled
@pytest.mark.parametrize("seed", range(3))
def test_compiled_dopri5_matches_python(seed):
    L, y0 = random_generator(seed)
    a = _kernels_py.dopri5(L, y0, 1.5, 1e-10, 1e-13, 1e-3, 100000)
    b = compiled.dopri5(L, y0, 1.5, 1e-10, 1e-13, 1e-3, 100000)
    assert np.allclose(np.asarray(b[0]), a[0], rtol=1e-12, atol=1e-14)
    assert (b[1], b[2]) == (a[1], a[2])


@pytest.mark.parametrize("backend", ["python", pytest.param("cython", marks=needs_compiled)])
def test_telegraph_limits(backend):
    k = kernels.get_backend(backend)
    # no emission at all: every trial is dark
    assert k.telegraph_no_photon(1000, 0.0, 0.0, 0.0, 0.0, 1e-5, True, 1) == 1000
    # bright without switching: Poisson zero-count probability
    n = 200_000
    p = k.telegraph_no_photon(n, 1e5, 0.0, 0.0, 0.0, 1e-5, True, 2) / n
    want = math.exp(-1.0)
    assert abs(p - want) < 4 * math.sqrt(want * (1 - want) / n)


@needs_compiled
def test_telegraph_backends_agree_statistically():
    n = 400_000
    args = (4e5, 1e3, 2e4, 3e4, 2e-5)
    for start in (True, False):
        a = _kernels_py.telegraph_no_photon(n, *args, start, 3) / n
        b = compiled.telegraph_no_photon(n, *args, start, 3) / n
        s = math.sqrt((a * (1 - a) + b * (1 - b)) / n)
        assert abs(a - b) < 4 * s
