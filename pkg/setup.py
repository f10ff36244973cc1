"""Build script: compiles the optional Cython scoring core.

The package is fully functional without the extension (plankern.backend
falls back to the numpy implementation); the build therefore degrades
gracefully when Cython or a C compiler is unavailable.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/plankern/_score.pyx"],
        language_level="3str",
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
