"""Build the optional compiled kernels.

The package works without them; ``smallseg.nn.kernels`` falls back to numpy
when the extension is missing. Set SMALLSEG_NO_EXT=1 to skip compilation.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SMALLSEG_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "smallseg.nn._ckernels",
                    sources=["src/smallseg/nn/_ckernels.pyx"],
                    include_dirs=["src/smallseg/nn"],
                    extra_compile_args=["-O3", "-march=native", "-fno-math-errno"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
