"""Build script: compiles the optional kernel extension.

The compiled module is a pure accelerator. If Cython or a C compiler is
missing the build degrades to the pure-Python kernels and the package stays
fully functional (slower; see benchmarks/compare_backends.py).
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        sys.stderr.write("trisect: Cython not available, building without the compiled kernels\n")
        return []
    ext = Extension(
        "trisect._ckernels",
        ["src/trisect/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


class OptionalBuildExt(build_ext):
    """Swallow compiler failures so the pure-Python fallback still installs."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            sys.stderr.write(f"trisect: skipping compiled kernels ({exc})\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            sys.stderr.write(f"trisect: failed to build {ext.name} ({exc}); using pure-Python kernels\n")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
