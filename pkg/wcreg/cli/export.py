"""
Plot data on tensor grids.
"""
import numpy as np
from astropy.table import Table

from ..certify.bounds import bound_at
from ..models.box import Box
from ..regression.sampling import grid_sample
from ..utils.exceptions import ConfigError
from ..utils.serialize import write_table

__all__ = ['MAX_GRID_POINTS', 'export_grid']

MAX_GRID_POINTS = 10 ** 7


def _surrogate(source):
    # FitReport-like objects carry model and theta_star; otherwise a pair
    if hasattr(source, 'theta_star'):
        return source.model, source.theta_star
    model, theta = source
    return model, theta


def export_grid(source, f=None, box=None, resolution=50, bounds=None, path=None):
    """
    Evaluate a surrogate, its target and its certified interval on a grid.

    Parameters
    ----------
    source : `~wcreg.regression.FitReport` or (model, theta)
    f : callable, optional
        Target; the ``f`` and ``err`` columns are NaN without it.
    box : `~wcreg.models.Box`, optional
        Defaults to the box of ``bounds`` or of the report's data set.
    resolution : int
        Points per dimension, at least 2.
    bounds : `~wcreg.certify.BoundsReport`, optional
        Gives the ``lower`` and ``upper`` columns. Without it a report's
        ``wce_certified`` is used as a constant bound, and a bare
        (model, theta) pair gets NaN.
    path : str, optional
        Write the table as CSV.

    Returns
    -------
    `~astropy.table.Table`
        Columns ``x1 ... xn``, ``f``, ``f_hat``, ``err = f - f_hat`` and the
        certified interval ``lower``, ``upper`` of ``f``.

    Raises
    ------
    `~wcreg.utils.exceptions.ConfigError`
        If the resolution is below 2 or the grid exceeds `MAX_GRID_POINTS`.
    """
    model, theta = _surrogate(source)
    if box is None:
        if bounds is not None:
            box = bounds.box
        elif getattr(source, 'dataset_final', None) is not None:
            box = source.dataset_final.box
    if box is None:
        raise ConfigError("export_grid needs a box")
    box = box if isinstance(box, Box) else Box(*box)
    resolution = int(resolution)
    if resolution < 2:
        raise ConfigError("grid resolution must be at least 2, got {}".format(resolution))
    n_active = int(np.sum(~box.frozen))
    if float(resolution) ** n_active > MAX_GRID_POINTS:
        raise ConfigError("{}^{} grid points exceed the limit of {}"
                          .format(resolution, n_active, MAX_GRID_POINTS))

    X = grid_sample(box, resolution)
    f_hat = np.asarray(model.predict(theta, X), dtype=float)
    if f is None:
        fv = np.full(len(X), np.nan)
    else:
        fv = np.array([float(f(x)) for x in X])
    if bounds is not None:
        lower, upper = bound_at(bounds, X)
    elif hasattr(source, 'wce_certified'):
        lower = upper = np.full(len(X), source.wce_certified)
    else:
        lower = upper = np.full(len(X), np.nan)

    table = Table()
    for j in range(box.dim):
        table['x{}'.format(j + 1)] = X[:, j]
    table['f'] = fv
    table['f_hat'] = f_hat
    table['err'] = fv - f_hat
    table['lower'] = f_hat - lower
    table['upper'] = f_hat + upper
    if path is not None:
        write_table(table, path)
    return table
