"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); set GAZEKIT_NO_NATIVE=1 to skip compilation.
"""

import os

from setuptools import setup

ext_modules = []
include_dirs = []

if not os.environ.get("GAZEKIT_NO_NATIVE"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/gazekit/_kernels/native.pyx"],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
        include_dirs = [numpy.get_include()]
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
