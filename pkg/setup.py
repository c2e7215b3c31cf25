#!/usr/bin/env python
# -*- coding: utf-8 -*-

from setuptools import setup

long_description = """A Python code for simulating power-system transients
and forecasting them with a small causal-attention model.
"""

setup(name='gridseq',
      description='Transient-dynamics forecaster for power systems',
      packages=['gridseq'],
      package_data = {
            'gridseq': ['systems/*.json'],
      },
      long_description = long_description,
      license = 'MIT',
      python_requires='>=3.8',
      install_requires=[
          'numpy',
          'scipy',
      ],
      extras_require={
          'test': ['pytest'],
      },
      entry_points={
          'console_scripts': ['gridseq=gridseq.runs:main'],
      },
     )
