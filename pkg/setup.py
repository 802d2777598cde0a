import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: without Cython (or a working C
# compiler) the package falls back to the pure-numpy reference kernels.
try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ttlaw.kernels._fast",
                ["src/ttlaw/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
