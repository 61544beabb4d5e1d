"""
Initial-design generators over a box.

All samplers return an ``(N, n)`` array of points inside the box and are
deterministic for a given seed.
"""
import numpy as np
from scipy.stats import qmc

from ..models.box import Box
from ..utils.exceptions import ConfigError

__all__ = ['lhs_sample', 'grid_sample', 'uniform_sample', 'draw_initial',
           'SAMPLERS']

SAMPLERS = ('lhs', 'grid', 'uniform')


def _box(box):
    return box if isinstance(box, Box) else Box(*box)


def _count(n):
    if int(n) != n or n < 1:
        raise ConfigError("the number of samples must be a positive integer, got {}"
                          .format(n))
    return int(n)


def lhs_sample(box, n, seed=None):
    """
    Latin hypercube sample of ``n`` points.

    Each of the ``n`` equal-width strata of every dimension holds exactly
    one point, placed uniformly at random inside its stratum.

    Examples
    --------
    >>> pts = lhs_sample(Box([0.0], [1.0]), 4, seed=0)
    >>> sorted(np.floor(pts[:, 0] * 4).astype(int).tolist())
    [0, 1, 2, 3]
    """
    box = _box(box)
    n = _count(n)
    rng = np.random.default_rng(seed)
    try:
        engine = qmc.LatinHypercube(d=box.dim, rng=rng)
    except TypeError:
        engine = qmc.LatinHypercube(d=box.dim, seed=rng)
    return np.clip(box.from_unit(engine.random(n)), box.lower, box.upper)


def grid_sample(box, points_per_dim):
    """
    Tensor grid including the box corners.

    Parameters
    ----------
    box : `~wcreg.models.Box`
    points_per_dim : int or sequence of int
        At least two per dimension; frozen dimensions contribute a single
        value.

    Returns
    -------
    ndarray
        ``(prod(points_per_dim), n)``, last dimension varying fastest.
    """
    box = _box(box)
    counts = np.broadcast_to(np.asarray(points_per_dim), (box.dim,))
    if np.any(counts < 2):
        raise ConfigError("a grid needs at least 2 points per dimension, got {}"
                          .format(counts.tolist()))
    axes = [np.array([lo]) if lo == hi else np.linspace(lo, hi, int(k))
            for lo, hi, k in zip(box.lower, box.upper, counts)]
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=1)


def uniform_sample(box, n, seed=None):
    """``n`` points drawn independently from the uniform distribution."""
    box = _box(box)
    n = _count(n)
    rng = np.random.default_rng(seed)
    return rng.uniform(box.lower, box.upper, size=(n, box.dim))


def draw_initial(sampler, box, n, seed=None):
    """
    ``n`` initial points with the named sampler.

    The grid sampler uses ``ceil(n ** (1/d))`` points per non-frozen
    dimension, so it may return more than ``n`` points.
    """
    if sampler == 'lhs':
        return lhs_sample(box, n, seed)
    if sampler == 'uniform':
        return uniform_sample(box, n, seed)
    if sampler == 'grid':
        box = _box(box)
        k = max(int((~box.frozen).sum()), 1)
        per_dim = max(2, int(np.ceil(_count(n) ** (1.0 / k) - 1e-9)))
        return grid_sample(box, per_dim)
    raise ConfigError("unknown sampler {!r}; choose from {}".format(sampler, SAMPLERS))
