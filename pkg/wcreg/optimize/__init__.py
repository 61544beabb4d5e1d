# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Local (L-BFGS) and global derivative-free (DIRECT) optimizers.
"""
from .direct import DirectConfig, GlobalResult, maximize
from .lbfgs import (LbfgsConfig, LbfgsResult, line_search_wolfe, minimize,
                    multistart_minimize)
