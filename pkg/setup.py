from setuptools import Extension, setup

# -ffp-contract=off: the kernel contract is mul-then-add per parent in IEEE
# double; a fused multiply-add would produce different bits than the pure
# Python fallback.
ext = Extension(
    "vinfer._kernels._accel",
    ["src/vinfer/_kernels/_accel.pyx"],
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

try:
    from Cython.Build import cythonize

    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    # No Cython at build time: ship pure Python, the fallback kernels are
    # selected at import.
    ext_modules = []

setup(ext_modules=ext_modules)
