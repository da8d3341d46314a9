"""Build script: compiles the optional speed kernels when Cython is available.

The package is fully functional without the extension; `deeprf._kernels`
falls back to the pure-Python reference implementation at import time.
Set DEEPRF_SKIP_EXT=1 to force a pure-Python install.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DEEPRF_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "deeprf._kernels._speed",
                    ["src/deeprf/_kernels/_speed.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build-env dependent
        print(f"deeprf: building without compiled kernels ({exc!r})")
        ext_modules = []

setup(ext_modules=ext_modules)
