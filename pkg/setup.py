"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: `robustinf._backend`
falls back to the NumPy kernel implementations when the compiled module is
absent. Building is attempted unconditionally and failures are fatal only
when Cython itself is importable but compilation breaks, so a source install
on a toolchain-less host still succeeds with `ROBUSTINF_SKIP_EXT=1`.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ROBUSTINF_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "robustinf._kernels",
                    ["src/robustinf/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
            quiet=True,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
