"""Build script: compiles the optional native kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing compiler or Cython must not fail the install.
"""

import logging

from setuptools import setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger("atlasfuse.setup")


def _extensions():
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        log.warning("Cython not available, skipping native kernels")
        return []
    ext = Extension(
        "atlasfuse._kernels._native",
        ["src/atlasfuse/_kernels/_native.pyx"],
        # -ffp-contract=off keeps the float semantics identical to the
        # NumPy fallback (no fused multiply-add), so both backends agree
        # bit for bit.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


class optional_build_ext(build_ext):
    """Downgrade native build failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            log.warning("native kernel build skipped: %s", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            log.warning("building %s failed: %s", ext.name, exc)


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
