"""Build script: compiles the filter-recursion kernel extension when possible.

The package works without the extension (a pure-numpy backend is selected at
import time), so a failed compile only costs speed. Set DKFSIM_SKIP_EXT=1 to
force a pure-Python install.
"""

import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("DKFSIM_SKIP_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "dkfsim._kernels._core",
                    ["src/dkfsim/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - build-host dependent
        sys.stderr.write(f"dkfsim: building without compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
