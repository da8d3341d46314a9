"""Backend parity: the compiled kernels must reproduce the reference."""

import numpy as np
import pytest

from deeprf import _kernels
from deeprf._kernels import _ref

try:
    from deeprf._kernels import _speed
except ImportError:
    _speed = None

pytestmark = pytest.mark.skipif(_speed is None, reason="compiled kernels not built")


def test_backend_reports_itself():
    assert _kernels.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("z", [complex(-0.5, 0.0), complex(0.7, 0.3),
                               complex(-2.0, -0.8), complex(1.5, 1e-5)])
@pytest.mark.parametrize("c", [0.3, 1.0, 2.5])
def test_mp_fixed_point_parity(z, c):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 3.0, 200)
    w = np.full(200, 1 / 200)
    args = (x, w, c, z, -1.0 / z, 0.5, 1e-13, 20000)
    m1, r1, _ = _ref.mp_fixed_point(*args)
    m2, r2, _ = _speed.mp_fixed_point(*args)
    assert m1 == pytest.approx(m2, abs=1e-10)
    assert max(r1, r2) < 1e-11


@pytest.mark.parametrize("z", [complex(1.2, 1e-6), complex(-0.8, 0.0),
                               complex(0.4, 0.05), complex(2.0, -1e-4)])
def test_pop_chain_parity(z):
    rho = np.array([1 / 1.2, 1.2 / 0.6])
    a = np.array([0.55, 0.48])
    b = np.array([0.2, 0.35])
    x = np.array([0.7, 1.0, 1.6])
    w = np.array([0.25, 0.5, 0.25])
    init = np.full(3, -1.0 / z, dtype=complex)
    m1, r1, _ = _ref.pop_chain_solve(z, rho, a, b, x, w, init, 0.5, 1e-12, 20000)
    m2, r2, _ = _speed.pop_chain_solve(z, rho, a, b, x, w, init.copy(), 0.5, 1e-12, 20000)
    np.testing.assert_allclose(m1, m2, atol=1e-9)
    assert max(r1, r2) < 1e-9


def test_pure_python_env_flag(tmp_path):
    import subprocess
    import sys

    code = (
        "import deeprf; print(deeprf.KERNEL_BACKEND)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"DEEPRF_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
        cwd="/",
    )
    assert out.stdout.strip() == "python"
