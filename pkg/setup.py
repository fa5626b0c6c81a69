"""Build script: compiles the optional accelerator extension.

The package works without the extension; the pure-Python kernels are used
whenever the compiled module is missing, so any build failure here is
downgraded to a warning.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that tolerates a missing compiler or a failed compile."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - depends on toolchain
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(
            "warning: building the flexshop accelerator extension failed; "
            "falling back to the pure-Python kernels (%s)\n" % (exc,)
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - Cython is a build requirement
        return []
    ext = Extension(
        "flexshop._kernels._core",
        sources=["src/flexshop/_kernels/_core.pyx"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
