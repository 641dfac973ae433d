import numpy as np
import scipy  # noqa: F401  (cython_blas declarations ship with scipy)
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "lagrseq._ckernels",
        ["src/lagrseq/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
