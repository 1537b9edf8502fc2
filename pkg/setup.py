"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time); the build is therefore marked optional so installation
never fails on a machine without a C toolchain.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "semipot.kernels._core",
                ["src/semipot/kernels/_core.pyx"],
                # -ffp-contract=off keeps the C loops bit-identical to the
                # numpy fallback (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
    for ext in ext_modules:
        ext.optional = True

setup(ext_modules=ext_modules)
