"""
Element-wise activation functions and their derivatives.

All formulas are overflow safe for arguments of any magnitude.
"""
import re
from collections import namedtuple

import numpy as np
from scipy.special import expit

from ..utils.exceptions import ConfigError

__all__ = ['Activation', 'get_activation', 'softplus', 'sigmoid',
           'inverse_softplus', 'positive_from_raw', 'raw_from_positive']

Activation = namedtuple('Activation', ['name', 'func', 'deriv', 'nonnegative'])

_LEAKY = re.compile(r'^leaky-relu(?:\((?P<slope>[^)]*)\))?$')


def softplus(x):
    """log(1 + e^x) computed as max(x, 0) + log1p(e^-|x|)."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    return expit(x)


def inverse_softplus(y):
    """Inverse of `softplus` for y > 0."""
    y = np.asarray(y, dtype=float)
    big = y > 30.0
    safe = np.where(big, 1.0, y)
    return np.where(big, y + np.log1p(-np.exp(-np.where(big, y, 30.0))),
                    np.log(np.expm1(safe)))


# Trainable positive scalars (gate steepness, saturation sharpness) are
# stored unconstrained and mapped through softplus plus a floor.
POSITIVE_FLOOR = 1e-6


def positive_from_raw(raw):
    return softplus(raw) + POSITIVE_FLOOR


def raw_from_positive(value):
    if np.any(np.asarray(value) <= POSITIVE_FLOOR):
        raise ConfigError("trainable positive parameters must exceed {}"
                          .format(POSITIVE_FLOOR))
    return inverse_softplus(np.asarray(value, dtype=float) - POSITIVE_FLOOR)


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_deriv(x):
    # the subgradient at 0 is taken as 0
    return (x > 0.0).astype(float)


def _tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _sigmoid_deriv(x):
    s = expit(x)
    return s * (1.0 - s)


def _identity(x):
    return np.asarray(x, dtype=float)


def _identity_deriv(x):
    return np.ones_like(x, dtype=float)


_TABLE = {
    'tanh': Activation('tanh', np.tanh, _tanh_deriv, False),
    'relu': Activation('relu', _relu, _relu_deriv, True),
    'softplus': Activation('softplus', softplus, expit, True),
    'sigmoid': Activation('sigmoid', expit, _sigmoid_deriv, True),
    'linear': Activation('linear', _identity, _identity_deriv, False),
}


def get_activation(name):
    """
    Look up an activation by name.

    Parameters
    ----------
    name : str
        One of ``'tanh'``, ``'relu'``, ``'softplus'``, ``'sigmoid'``,
        ``'linear'`` or ``'leaky-relu(slope)'`` with ``0 < slope < 1``
        (a bare ``'leaky-relu'`` uses slope 0.1, i.e. max(x, 0.1 x)).

    Returns
    -------
    Activation
        Named tuple ``(name, func, deriv, nonnegative)``.
    """
    if isinstance(name, Activation):
        return name
    if name in _TABLE:
        return _TABLE[name]
    match = _LEAKY.match(str(name))
    if match is None:
        raise ConfigError("unknown activation {!r}".format(name))
    slope = float(match.group('slope') or 0.1)
    if not 0.0 < slope < 1.0:
        raise ConfigError("leaky-relu slope must lie in (0, 1), got {}"
                          .format(slope))

    def func(x):
        return np.maximum(x, slope * x)

    def deriv(x):
        return np.where(x > 0.0, 1.0, slope)

    return Activation('leaky-relu({!r})'.format(slope), func, deriv, False)
