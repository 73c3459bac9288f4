#!/usr/bin/env python
import io

from setuptools import find_packages, setup


def read(*filenames, **kwargs):
    encoding = kwargs.get('encoding', 'utf-8')
    sep = kwargs.get('sep', '\n')
    buf = []
    for filename in filenames:
        with io.open(filename, encoding=encoding) as f:
            buf.append(f.read())
    return sep.join(buf)

description = ("Sequential pattern mining, MSMR feature selection and "
               "outcome models for longitudinal clinical records.")
long_description = read('README.rst')

setup(
    name="mlho",
    version="0.1.0",
    packages=find_packages(),
    include_package_data=True,
    scripts=[],
    description=description,
    long_description=long_description,
    entry_points={
        'console_scripts': [
            'mlho = mlho.main:main',
        ]
    },
    install_requires=[
        "dill",
        "doit",
        "matplotlib",
        "multiprocess",
        "nengo>=3.0",
        "numpy>=1.17",
        "pandas>=1.5",
        "scikit-learn",
        "scipy",
        "seaborn",
    ],
    extras_require={
        'tests': ["pytest"],
    },
)
