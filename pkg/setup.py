import os

import numpy
from setuptools import Extension, setup

# POSESYNC_NO_EXT=1 builds a pure-Python install (kernels fall back to numpy/scipy).
ext_modules = []
if os.getenv("POSESYNC_NO_EXT") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "posesync._ckernels",
                ["src/posesync/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
