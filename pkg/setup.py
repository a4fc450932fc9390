"""Build script for the optional compiled kernels.

The compiled extension accelerates the scorer forward/backward passes and
the cosine scan. If Cython or a C compiler is unavailable the build falls
back to a pure-Python wheel; cogtree._kernels selects the numpy
implementation at import time in that case.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cogtree._kernels._cykern",
                ["src/cogtree/_kernels/_cykern.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
