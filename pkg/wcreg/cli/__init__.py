# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Benchmark registry, grid export and the ``wcreg`` command.
"""
from .export import MAX_GRID_POINTS, export_grid
from .main import RunConfig, main, run
from .problems import MODES, PROBLEMS, Problem, get_problem
