"""Build hook for the optional compiled kernels.

Falls back to a pure-Python install when Cython or a C compiler is missing.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("OPELAB_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "opelab._kernels",
                    sources=["src/opelab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
