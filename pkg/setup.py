"""Build script for the optional compiled core.

The Cython extension is optional: if Cython or a C compiler is missing,
or compilation fails, the package installs without it and
``esag.kernels`` falls back to NumPy.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self.warn(f"compiled core not built ({exc}); using the NumPy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self.warn(f"compiled core not built ({exc}); using the NumPy fallback")


def extensions():
    if os.environ.get("ESAG_NO_EXTENSION"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "esag._core",
        ["src/esag/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
