# -*- coding: utf-8 -*-

import re

from setuptools import setup, find_packages


def get_version():
    try:
        f = open("StAlloc/_version.py")
    except EnvironmentError:
        return None
    for line in f.readlines():
        mo = re.match("__version__ = '([^']+)'", line)
        if mo:
            ver = mo.group(1)
            return ver
    return None

setup(
    name='StAlloc',
    version=get_version(),
    packages=find_packages(exclude=['tests']),
    description='Stable allocation and percolation simulator for Poisson centers',
    scripts=['bin/stalloc'],
    install_requires=['numpy', 'scipy', 'pandas', 'h5py', 'prettytable', 'scikit-learn'],
    extras_require={'test': ['pytest']},
    include_package_data=True,
)
