"""Backend selection for the solver inner loops.

Importing this package picks the compiled Cython module when it is built and
importable, otherwise the pure-Python reference. Set DEEPRF_PURE_PYTHON=1 to
force the reference backend (used by the benchmark and the parity tests).
"""

import os

if os.environ.get("DEEPRF_PURE_PYTHON"):
    from . import _ref as _impl

    BACKEND = "python"
else:
    try:
        from . import _speed as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _ref as _impl

        BACKEND = "python"

mp_fixed_point = _impl.mp_fixed_point
pop_chain_solve = _impl.pop_chain_solve

__all__ = ["BACKEND", "mp_fixed_point", "pop_chain_solve"]
