"""
Flat parameter vectors and the layouts that name their blocks.
"""
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from ..utils.exceptions import ConfigError, DimensionError
from ..utils.serialize import float_to_str, str_to_float

__all__ = ['ParamEntry', 'ParamLayout', 'ParamVec', 'glorot_uniform']

ParamEntry = namedtuple('ParamEntry', ['name', 'shape', 'offset'])


class ParamLayout:
    """
    Ordered ``(name, shape, offset)`` records of a flat parameter vector.

    Offsets are contiguous and non-overlapping by construction: each block
    starts where the previous one ends.

    Examples
    --------
    >>> layout = ParamLayout([('W1', (2, 3)), ('b1', (2,))])
    >>> layout.size
    8
    >>> layout['b1'].offset
    6
    """

    def __init__(self, blocks):
        entries = []
        offset = 0
        for name, shape in blocks:
            shape = tuple(int(s) for s in shape)
            if any(s < 0 for s in shape):
                raise ConfigError("negative dimension in block {!r}".format(name))
            entries.append(ParamEntry(name, shape, offset))
            offset += int(np.prod(shape, dtype=int))
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter block names: {}".format(names))
        self.entries = tuple(entries)
        self.size = offset
        self._index = {e.name: e for e in entries}

    def __getitem__(self, name):
        return self._index[name]

    def __contains__(self, name):
        return name in self._index

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, ParamLayout) and self.entries == other.entries

    def block_size(self, name):
        return int(np.prod(self._index[name].shape, dtype=int))

    def unpack(self, values):
        """Views of ``values`` reshaped to each block's shape."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise DimensionError("parameter vector of length {} does not match "
                                 "layout of size {}".format(values.size, self.size),
                                 layer='parameters')
        return {e.name: values[e.offset:e.offset + int(np.prod(e.shape, dtype=int))]
                .reshape(e.shape) for e in self.entries}

    def pack(self, blocks):
        """Inverse of `unpack`; missing blocks are left at zero."""
        values = np.zeros(self.size)
        for e in self.entries:
            if e.name in blocks:
                size = int(np.prod(e.shape, dtype=int))
                values[e.offset:e.offset + size] = np.asarray(blocks[e.name],
                                                              dtype=float).reshape(size)
        return values

    def prefixed(self, prefix):
        return [(prefix + e.name, e.shape) for e in self.entries]

    def to_list(self):
        return [{'name': e.name, 'shape': list(e.shape), 'offset': e.offset}
                for e in self.entries]

    @classmethod
    def from_list(cls, records):
        layout = cls([(r['name'], r['shape']) for r in records])
        for r, e in zip(records, layout.entries):
            if int(r.get('offset', e.offset)) != e.offset:
                raise ConfigError("non-contiguous offset for block {!r}".format(e.name))
        return layout


@dataclass(eq=False)
class ParamVec:
    """
    Trainable parameter vector θ together with its layout.
    """

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).ravel()
        if self.values.size != self.layout.size:
            raise DimensionError("parameter vector of length {} does not match "
                                 "layout of size {}".format(self.values.size,
                                                            self.layout.size),
                                 layer='parameters')

    def __len__(self):
        return self.values.size

    def blocks(self):
        return self.layout.unpack(self.values)

    def with_values(self, values):
        return ParamVec(np.array(values, dtype=float), self.layout)

    def copy(self):
        return ParamVec(self.values.copy(), self.layout)

    def to_dict(self):
        return {'layout': self.layout.to_list(),
                'values': float_to_str(self.values)}

    @classmethod
    def from_dict(cls, document):
        return cls(str_to_float(document['values']),
                   ParamLayout.from_list(document['layout']))


def glorot_uniform(rng, shape):
    """
    Uniform draw in ``[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]``
    for a ``(fan_out, fan_in)`` weight matrix.
    """
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=shape)
