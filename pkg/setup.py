#!/usr/bin/env python
from setuptools import setup, find_packages


setup(name = "regime_ensemble",
      version = '0.1',
      description = "Regime-adaptive ensemble forecasting of data-center power",
      packages = find_packages(exclude=['tests', 'tests.*']),
      license = "BSD License",
      python_requires='>=3.8',
      install_requires=[
          'setuptools',
          'atom',
          'networkx',
          'numpy>=1.20',
          'pandas>=1.5',
          'scikit-learn',
          'PyYAML',
          'matplotlib',
      ],
      extras_require={'test': ['pytest']},
      entry_points={
          'console_scripts': ['regime-ensemble = regime_ensemble.cli:main'],
      },
      zip_safe=False,
      long_description = """\
Minute-scale load forecasting for AI data centers: gradient-boosted trees and a
causal convolutional network blended by a learned, increment-informed gate.""",
      classifiers = [
          "Development Status :: 4 - Beta",
          "Intended Audience :: Science/Research",
          "License :: OSI Approved :: BSD License",
          "Operating System :: OS Independent",
          "Programming Language :: Python",
          "Programming Language :: Python :: 3",
          "Topic :: Scientific/Engineering",
        ],
      )
