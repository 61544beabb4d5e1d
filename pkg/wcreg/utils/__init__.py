# Licensed under a 3-clause BSD style license - see LICENSE.md

# This sub-module is destined for common non-package specific utility
# functions.
from .exceptions import *
from .parallel import map_ordered, resolve_threads
from .serialize import (dump_json, load_json, float_to_str, str_to_float,
                        write_table)
