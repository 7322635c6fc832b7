"""Build script for the compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); compiling it just makes the 3D conv/pool inner
loops faster.  Build in place with:

    python3 setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-python install, fallback kernels only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "temploc.net._kernels",
                ["src/temploc/net/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_2_0_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
