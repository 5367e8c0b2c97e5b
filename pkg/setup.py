"""Build script: compiles the optional Cython speedups.

The package is fully functional without the extension; netcox.backend
falls back to the numpy implementation when the import fails.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "netcox._kernels",
                ["src/netcox/_kernels.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
