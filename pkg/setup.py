"""Build hook: compile the collection kernel when Cython and a C toolchain
are available; the package falls back to the pure-Python engine otherwise."""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "cubicap._kernels._collectc",
        ["src/cubicap/_kernels/_collectc.pyx"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
