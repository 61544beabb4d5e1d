"""
JSON and CSV helpers shared by the report types.
"""
import json

import numpy as np
from astropy.utils.misc import JsonCustomEncoder

__all__ = ['float_to_str', 'str_to_float', 'dump_json', 'load_json',
           'write_table']


def float_to_str(values):
    """
    Shortest decimal strings that round-trip every float bit-exactly.
    """
    return [repr(float(v)) for v in np.ravel(values)]


def str_to_float(strings, shape=None):
    values = np.array([float(s) for s in strings], dtype=float)
    if shape is not None:
        values = values.reshape(shape)
    return values


def dump_json(document, path=None):
    """
    Serialize ``document`` with stable key order.

    Returns the text; writes it (UTF-8) to ``path`` when given.
    """
    text = json.dumps(document, cls=JsonCustomEncoder, indent=2,
                      sort_keys=True, allow_nan=True)
    if path is not None:
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(text + "\n")
    return text


def load_json(path_or_text):
    if isinstance(path_or_text, str) and path_or_text.lstrip().startswith('{'):
        return json.loads(path_or_text)
    with open(path_or_text, encoding='utf-8') as fh:
        return json.load(fh)


def write_table(table, path):
    """
    Write an `~astropy.table.Table` as RFC-4180 CSV.
    """
    table.write(path, format='ascii.csv', overwrite=True)
    return path
