"""Build script for the optional compiled SMO kernel.

The extension is a pure speedup: if Cython or a C compiler is missing the
package installs without it and singlem.svm falls back to the numpy solver.
-ffp-contract=off keeps the C arithmetic bit-identical to the numpy path.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "singlem._smo",
                ["src/singlem/_smo.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
