import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; oempc falls back to numpy kernels
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("OEMPC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "oempc._kernels",
                ["src/oempc/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: keeps results bitwise equal to the numpy fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
