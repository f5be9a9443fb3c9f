"""Build script for the optional compiled render core.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile degrades gracefully instead of blocking
installation.  Build in place with:

    python setup.py build_ext --inplace
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    # -ffp-contract=off keeps the C arithmetic bit-identical to the numpy
    # fallback (no fused multiply-add), which the backend-equivalence tests
    # rely on.
    ext = Extension(
        "navworld.world._render_core",
        ["src/navworld/world/_render_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except Exception as exc:  # pragma: no cover - builder environments vary
    sys.stderr.write(f"navworld: skipping compiled render core ({exc})\n")

setup(ext_modules=ext_modules)
