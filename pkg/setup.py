"""Build the optional Cython kernels; the package falls back to pure Python
when the extension is missing."""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MANIFOLD_TRACK_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "manifold_track._ckernels",
                    ["src/manifold_track/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
