"""Build script for the optional Cython kernels.

The package imports and runs without the extension; ``dualuv.kernels`` falls
back to the numpy implementations when ``dualuv._kernels`` is missing.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # pragma: no cover - pure-python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "dualuv._kernels",
                ["src/dualuv/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
