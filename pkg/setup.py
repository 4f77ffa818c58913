"""Build script: compiles the optional Cython tree-kernel core.

The package works without the extension (a pure-numpy fallback is selected
at import time), so failure to build here only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "scate._treecore",
                ["src/scate/_treecore.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off: the fallback backend must match bitwise,
                # so FMA contraction of the shared expressions is forbidden.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules, zip_safe=False)
