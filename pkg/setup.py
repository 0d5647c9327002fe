"""Build script for the optional compiled kernel extension.

The extension is marked optional: if no C toolchain is available the
install still succeeds and the package falls back to the numpy kernel
backend at import time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # source dist without Cython: install pure
    cythonize = None

extensions = []
if cythonize is not None:
    ext = Extension(
        "mmfuse.kernels._ckernels",
        sources=["src/mmfuse/kernels/_ckernels.pyx"],
        extra_compile_args=["-O3"],
        optional=True,
    )
    extensions = cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=extensions)
