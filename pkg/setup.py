"""Build script with an optional Cython speedup extension.

The package is fully functional without the extension (a pure NumPy/Python
fallback with matching semantics is selected at import time), so any failure
to build it is downgraded to a warning.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


def make_extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython not available; building without compiled kernels")
        return []
    from setuptools import Extension

    ext = Extension(
        "lowrank_lab._ckernels",
        ["src/lowrank_lab/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


class OptionalBuildExt(build_ext):
    """Skip the extension (instead of failing the install) if it won't compile."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # CompileError, missing toolchain, ...
            warnings.warn(f"compiled kernels skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernel {ext.name} skipped: {exc}")


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})
