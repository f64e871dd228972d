from setuptools import setup

# The compiled engine is optional: if Cython (or a C compiler) is missing the
# package still installs and falls back to the pure-Python engine.
import os

ext_modules = []
try:
    if not os.path.exists("src/mptetrys/_engine.pyx"):
        raise ImportError
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/mptetrys/_engine.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
