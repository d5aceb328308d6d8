import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# OpenMP is optional: prange degrades to a serial loop when built without it.
omp_args = [] if os.environ.get("V3DG_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "v3dg.raster._kernels",
        ["src/v3dg/raster/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"] + omp_args,
        extra_link_args=omp_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
