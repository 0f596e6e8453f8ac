"""Builds the optional compiled simulator kernel; the package works without it."""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "momtopo.sim._chain",
                ["src/momtopo/sim/_chain.pyx"],
                include_dirs=[np.get_include()],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
