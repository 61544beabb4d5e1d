# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
wcreg: worst-case (minimax) nonlinear regression with certified error bounds.

Surrogate models are trained by minimizing a smooth approximation of the
maximum absolute error on a data set that is enriched, one point at a time,
with the global maximizer of the current approximation error. Trained models
can then be equipped with constant or input-dependent error bounds,
conservative constraint certificates, uncertain discrete-time dynamics and
approximate explicit MPC laws.
"""

# Packages may add whatever they like to this file, but
# should keep this content at the top.
# ----------------------------------------------------------------------------
from ._astropy_init import *
# ----------------------------------------------------------------------------

# Enforce Python version check during package import.
# This is the same check as the one at the top of setup.py
import sys

from astropy import config as _config

__minimum_python_version__ = "3.9"


class UnsupportedPythonError(Exception):
    pass


if sys.version_info < tuple(
        (int(val) for val in __minimum_python_version__.split('.'))):
    raise UnsupportedPythonError(
        "wcreg does not support Python < {}".format(
            __minimum_python_version__))


class Conf(_config.ConfigNamespace):
    """
    Configuration parameters for `wcreg`.
    """

    threads = _config.ConfigItem(
        1, 'Maximum number of worker threads used for multistart training, '
           'global-optimizer probe batches and per-component fits.',
        cfgtype='integer')
    gamma = _config.ConfigItem(
        10.0, 'Default smoothing parameter of the log-sum-exp maximum.',
        cfgtype='float')
    l2_reg = _config.ConfigItem(
        1e-8, 'Default coefficient of the squared l2 norm of the model '
              'parameters in training objectives.',
        cfgtype='float')
    direct_evals_per_dim = _config.ConfigItem(
        2000, 'Default DIRECT evaluation budget per input dimension.',
        cfgtype='integer')
    direct_epsilon = _config.ConfigItem(
        1e-4, 'Default potential-optimality slack of DIRECT.',
        cfgtype='float')
    lbfgs_starts = _config.ConfigItem(
        5, 'Default number of L-BFGS starts per training problem.',
        cfgtype='integer')
    lbfgs_max_iters = _config.ConfigItem(
        2000, 'Default iteration cap of a single L-BFGS run.',
        cfgtype='integer')


conf = Conf()

from . import utils  # noqa: E402
from .models import Box, ModelSpec, ParamVec, build_model  # noqa: E402
