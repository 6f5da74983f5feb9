import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffast-math is deliberately avoided: the kernels rely on IEEE inf/nan
# semantics for the logit-bound rejection path.
ext = Extension(
    "attrisk._core",
    ["src/attrisk/_core.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)

setup(
    ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}),
)
