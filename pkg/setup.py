"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension; `uavgrid.kernels`
falls back to the pure NumPy/Python implementations at import time.
Build in place with `python setup.py build_ext --inplace` or just
`pip install -e . --no-build-isolation`.
"""

from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "uavgrid.kernels._core",
                ["src/uavgrid/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
