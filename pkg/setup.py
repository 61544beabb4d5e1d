#!/usr/bin/env python
# Licensed under a 3-clause BSD style license - see LICENSE.md

import sys

# Enforce Python version check - this is the same check as in __init__.py but
# this one has to happen before setuptools reads the package.
if sys.version_info < tuple((int(val) for val in "3.9".split('.'))):
    sys.stderr.write(
        "ERROR: wcreg requires Python {} or later\n".format("3.9")
        )
    sys.exit(1)

from configparser import ConfigParser

from setuptools import setup

# Get some values from the setup.cfg
conf = ConfigParser()
conf.read(['setup.cfg'])
metadata = dict(conf.items('metadata'))

PACKAGENAME = metadata.get('package_name', 'wcreg')

# order of priority for long_description:
#   (1) set in setup.cfg,
#   (2) load README.md
_cfg_long_description = metadata.get('long_description', '')
if _cfg_long_description:
    LONG_DESCRIPTION = _cfg_long_description
else:
    with open('README.md') as f:
        LONG_DESCRIPTION = f.read()

setup(name=PACKAGENAME,
      long_description=LONG_DESCRIPTION,
      keywords=['minimax', 'chebyshev', 'regression', 'active learning',
                'global optimization', 'error bounds', 'model predictive control'],
      classifiers=[
          'Intended Audience :: Science/Research',
          'License :: OSI Approved :: BSD License',
          'Operating System :: OS Independent',
          'Programming Language :: Python :: 3',
          'Programming Language :: Python :: Implementation :: CPython',
          'Topic :: Scientific/Engineering :: Mathematics',
      ],
      )
