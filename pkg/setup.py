"""Build script for the compiled kernel core.

The extension is optional at runtime: when it is missing the package falls
back to the NumPy kernels in ``pixelflykit._kernels_py``.

    python setup.py build_ext --inplace
"""
import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

# fp-contract=off keeps a*b+c as two roundings so the sparse and dense
# gradient paths agree bit-for-bit.
compile_args = ["-O3", "-ffp-contract=off", "-fopenmp"]
link_args = ["-fopenmp"]
if os.environ.get("PIXELFLYKIT_NO_OPENMP"):
    compile_args.remove("-fopenmp")
    link_args = []

extensions = [
    Extension(
        "pixelflykit._kernels",
        ["src/pixelflykit/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    if cythonize is not None
    else [],
)
