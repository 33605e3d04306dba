import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: if Cython (or a C compiler) is not
# available the package falls back to the NumPy implementation at import.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "sharpstep._kernels._core",
                ["src/sharpstep/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                # -fno-builtin-{sin,cos} stops GCC from fusing the Box-Muller
                # sin/cos pair into sincos(), which rounds differently in the
                # last ulp and would break bit-parity with the NumPy backend.
                extra_compile_args=["-O3", "-fno-builtin-sin", "-fno-builtin-cos"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
