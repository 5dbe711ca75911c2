import os
import sys

import numpy as np
from setuptools import Extension, setup

# Set MEDIANFIT_NO_EXT=1 to install the pure-Python package only.
ext_modules = []

COMPILE_ARGS = ["-O3"]
LIBRARIES = []
if sys.platform.startswith("linux"):
    # glibc only declares its vector exp/tanh/log1p when __FAST_MATH__ is set;
    # defining it directly keeps strict IEEE semantics for everything else.
    COMPILE_ARGS += ["-fno-math-errno", "-D__FAST_MATH__"]
    LIBRARIES += ["m"]
if not os.environ.get("MEDIANFIT_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "medianfit._kernels",
                ["src/medianfit/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=COMPILE_ARGS,
                libraries=LIBRARIES,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
