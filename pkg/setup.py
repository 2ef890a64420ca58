from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np

ext = Extension(
    "bnsolve._collision_cy",
    ["src/bnsolve/_collision_cy.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize(ext, language_level=3))
