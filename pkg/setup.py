import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("OTFLOW_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "otflow._kernels._core",
                    ["src/otflow/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # Pure-Python fallback kernels are selected at import time.
        ext_modules = []

setup(ext_modules=ext_modules)
