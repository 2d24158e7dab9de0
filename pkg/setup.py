"""Build script: compiles the optional Cython kernel extension.

The engine runs fine without the extension (a numpy fallback is selected at
import time), so any compile failure downgrades to a pure-Python install
instead of aborting.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ROBUSTEVAL_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "robusteval.kernels._ckernels",
                    ["src/robusteval/kernels/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
