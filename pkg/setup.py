"""Build script: compiles the optional Cython kernel extension.

Set FEEDRESPONSE_PURE_PYTHON=1 to skip the extension entirely; the package
falls back to the pure-Python kernels at import time when the compiled
module is absent.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FEEDRESPONSE_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "feedresponse._kernels",
                    ["src/feedresponse/_kernels.pyx"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
