"""Builds the optional compiled kernel extension.

The package is fully functional without it: spacetrigger._kernels falls back
to the NumPy implementation when the extension is absent or fails to build.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "spacetrigger._kernels._ext",
                ["src/spacetrigger/_kernels/_ext.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
