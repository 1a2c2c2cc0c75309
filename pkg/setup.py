#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

from setuptools import find_packages, setup

__version__ = '0.1.0-dev'

classes = """
    Development Status :: 1 - Planning
    Intended Audience :: Science/Research
    Natural Language :: English
    Operating System :: MacOS :: MacOS X
    Operating System :: POSIX
    Operating System :: Unix
    Programming Language :: Python :: 3
    Programming Language :: Python :: 3 :: Only
    Topic :: Scientific/Engineering
    Topic :: Scientific/Engineering :: Artificial Intelligence
"""
classifiers = [s.strip() for s in classes.split('\n') if s]

description = ("Voxel autoencoders for 3D CAD shapes, with a numpy "
               "convolution and autodiff core.")

standalone = ['voxelae=voxelae._cli:cli']

with open('README.md') as f:
    long_description = f.read()


setup(
    name='voxelae',
    version=__version__,
    license='modified BSD',
    description=description,
    long_description=long_description,
    long_description_content_type='text/markdown',
    author='Biota Technology',
    author_email='will@biota.com',
    maintainer='Will Van Treuren',
    maintainer_email='will@biota.com',
    url='http://www.biota.com',
    packages=find_packages(),
    python_requires='>=3.7',
    install_requires=[
          'numpy >= 1.20',
          'click',
          'pandas',
          'scipy',
          'matplotlib',
          'seaborn'],
    classifiers=classifiers,
    entry_points={'console_scripts': standalone},
    zip_safe=False)
