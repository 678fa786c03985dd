import os

from setuptools import setup

ext_modules = []
if os.environ.get("QBOREL_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "qborel._theta_ext",
                    ["src/qborel/_theta_ext.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython at build time: the pure-Python kernels take over
        pass

setup(ext_modules=ext_modules)
