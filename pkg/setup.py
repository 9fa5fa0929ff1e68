"""Build script for the compiled kernel extension.

The extension accelerates the two hot inner loops (sparse projection and
sparse similarity scoring).  If it cannot be compiled on this machine the
package still installs and falls back to the pure NumPy/SciPy kernels at
import time.
"""

import sys

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            print(f"warning: compiled kernels skipped ({exc}); "
                  "falling back to NumPy backend", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to NumPy backend", file=sys.stderr)


def make_ext():
    from Cython.Build import cythonize

    compile_args = ["-O3", "-funroll-loops", "-fopenmp"]
    if "--no-native" not in sys.argv:
        compile_args.append("-march=native")
    ext = Extension(
        "streamridge._kernels",
        sources=["src/streamridge/_kernels.pyx", "src/streamridge/_kernels_impl.c"],
        include_dirs=[numpy.get_include(), "src/streamridge"],
        extra_compile_args=compile_args,
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=make_ext(),
    cmdclass={"build_ext": OptionalBuildExt},
)
