"""Builds the optional Cython kernels; the package works without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CIPT_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "cipt._ckernels",
                    ["src/cipt/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3", "-march=native", "-fcx-limited-range"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
