from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure-Python
# implementations in symderive._kernels_py when the extension is missing.
try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("symderive._ckernels", ["src/symderive/_ckernels.pyx"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
