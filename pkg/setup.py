from setuptools import setup

setup(cffi_modules=["src/topicseal/_pairing_build.py:ffibuilder"])
