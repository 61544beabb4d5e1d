"""
Axis-aligned boxes, the compact input domains everything is certified on.
"""
from dataclasses import dataclass

import numpy as np

from ..utils.exceptions import ConfigError, DimensionError
from ..utils.serialize import float_to_str, str_to_float

__all__ = ['Box']


@dataclass(frozen=True, eq=False)
class Box:
    """
    Compact box ``{x : lower <= x <= upper}``.

    Parameters
    ----------
    lower, upper : array_like
        Finite per-dimension bounds with ``lower <= upper``. Dimensions with
        ``lower == upper`` are frozen.

    Examples
    --------
    >>> box = Box([0, 0], [1, 2])
    >>> box.dim
    2
    >>> box.contains([0.5, 2.0])
    True
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise DimensionError("box bounds must be two vectors of equal "
                                 "length >= 1, got shapes {} and {}"
                                 .format(lower.shape, upper.shape))
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigError("box bounds must be finite")
        if np.any(lower > upper):
            raise ConfigError("box lower bound exceeds upper bound in "
                              "dimension(s) {}".format(
                                  np.flatnonzero(lower > upper).tolist()))
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def frozen(self):
        """Boolean mask of zero-width dimensions."""
        return self.lower == self.upper

    def contains(self, x, atol=0.0):
        """
        Whether every point of ``x`` (a vector or an ``(N, n)`` array) lies
        in the box, inclusive.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError("point of dimension {} checked against a "
                                 "box of dimension {}".format(x.shape[-1], self.dim))
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def to_unit(self, x):
        width = np.where(self.frozen, 1.0, self.width)
        return (np.asarray(x, dtype=float) - self.lower) / width

    def from_unit(self, s):
        return self.lower + np.asarray(s, dtype=float) * self.width

    def to_dict(self):
        return {'lower': float_to_str(self.lower), 'upper': float_to_str(self.upper)}

    @classmethod
    def from_dict(cls, document):
        return cls(str_to_float(document['lower']), str_to_float(document['upper']))

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __repr__(self):
        return "Box(lower={}, upper={})".format(self.lower.tolist(), self.upper.tolist())
