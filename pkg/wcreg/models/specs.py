"""
Declarative descriptions of model families and their wrappers.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from ..utils.exceptions import ConfigError
from ..utils.serialize import float_to_str, str_to_float
from .activations import get_activation

__all__ = ['FAMILIES', 'IndicatorSpec', 'SaturationSpec', 'ModelSpec']

FAMILIES = ('mlp', 'max-affine', 'input-convex-nn', 'envelope-nn')


def _matrix(value, n_cols=None):
    if value is None:
        return None
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.size == 0:
        return None
    if n_cols is not None and mat.shape[1] != n_cols:
        raise ConfigError("affine map has {} columns, expected {}"
                          .format(mat.shape[1], n_cols))
    return mat


def _encode_matrix(mat):
    if mat is None:
        return None
    return {'shape': list(mat.shape), 'values': float_to_str(mat)}


def _decode_matrix(document):
    if document is None:
        return None
    return str_to_float(document['values'], tuple(document['shape']))


@dataclass(eq=False)
class IndicatorSpec:
    """
    Approximate indicator of ``G = {x : G x + g_offset <= 0, H x + h_offset = 0}``.

    Parameters
    ----------
    mode : {'pwa', 'exp'}
        ``'pwa'``: ``max(1 - beta * max(g, h, -h, 0), 0)``;
        ``'exp'``: ``exp(-beta * (sum(max(g, 0)) + sum(|h|)))``.
    G, g_offset : array_like, optional
        Inequality rows ``g(x) = G x + g_offset``.
    H, h_offset : array_like, optional
        Equality rows ``h(x) = H x + h_offset``.
    beta : float
        Steepness, ``beta > 0``.
    beta_trainable : bool
        Whether beta is a component of θ.
    """

    mode: str = 'pwa'
    G: Optional[np.ndarray] = None
    g_offset: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    h_offset: Optional[np.ndarray] = None
    beta: float = 1.0
    beta_trainable: bool = False

    def __post_init__(self):
        if self.mode not in ('pwa', 'exp'):
            raise ConfigError("indicator mode must be 'pwa' or 'exp', got {!r}"
                              .format(self.mode))
        self.G = _matrix(self.G)
        self.H = _matrix(self.H)
        n_cols = None
        for mat in (self.G, self.H):
            if mat is not None:
                if n_cols is not None and mat.shape[1] != n_cols:
                    raise ConfigError("inequality and equality rows disagree on "
                                      "the input dimension")
                n_cols = mat.shape[1]
        if n_cols is None:
            raise ConfigError("an indicator needs at least one constraint row")
        self.g_offset = self._offset(self.G, self.g_offset)
        self.h_offset = self._offset(self.H, self.h_offset)
        for arr in (self.G, self.H, self.g_offset, self.h_offset):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ConfigError("indicator rows must be finite")
        self.beta = float(self.beta)
        if not self.beta > 0.0:
            raise ConfigError("indicator beta must be positive, got {}".format(self.beta))

    @staticmethod
    def _offset(mat, offset):
        if mat is None:
            return None
        if offset is None:
            return np.zeros(mat.shape[0])
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        if offset.shape != (mat.shape[0],):
            raise ConfigError("offset of length {} for {} rows"
                              .format(offset.size, mat.shape[0]))
        return offset

    @property
    def n_inputs(self):
        return (self.G if self.G is not None else self.H).shape[1]

    @property
    def n_g(self):
        return 0 if self.G is None else self.G.shape[0]

    @property
    def n_h(self):
        return 0 if self.H is None else self.H.shape[0]

    def to_dict(self):
        return {'mode': self.mode, 'G': _encode_matrix(self.G),
                'g_offset': None if self.G is None else float_to_str(self.g_offset),
                'H': _encode_matrix(self.H),
                'h_offset': None if self.H is None else float_to_str(self.h_offset),
                'beta': repr(self.beta), 'beta_trainable': self.beta_trainable}

    @classmethod
    def from_dict(cls, d):
        return cls(mode=d['mode'], G=_decode_matrix(d['G']),
                   g_offset=None if d['g_offset'] is None else str_to_float(d['g_offset']),
                   H=_decode_matrix(d['H']),
                   h_offset=None if d['h_offset'] is None else str_to_float(d['h_offset']),
                   beta=float(d['beta']), beta_trainable=d['beta_trainable'])


@dataclass(eq=False)
class SaturationSpec:
    """
    Output saturation to ``[y_min, y_max]``.

    With ``rate_index`` set, the bounds become input dependent,
    ``max(y_min, x[rate_index] + rate_min)`` and
    ``min(y_max, x[rate_index] + rate_max)``, which is how input-rate limits
    of a receding-horizon controller act on its first move.

    Parameters
    ----------
    mode : {'hard', 'smooth'}
    y_min, y_max : float
    eta : float
        Sharpness of the smooth saturation, ``eta > 0``.
    eta_trainable : bool
    rate_index : int, optional
    rate_min, rate_max : float
    """

    mode: str = 'hard'
    y_min: float = -np.inf
    y_max: float = np.inf
    eta: float = 10.0
    eta_trainable: bool = False
    rate_index: Optional[int] = None
    rate_min: float = -np.inf
    rate_max: float = np.inf

    def __post_init__(self):
        if self.mode not in ('hard', 'smooth'):
            raise ConfigError("saturation mode must be 'hard' or 'smooth', got {!r}"
                              .format(self.mode))
        self.y_min, self.y_max = float(self.y_min), float(self.y_max)
        self.rate_min, self.rate_max = float(self.rate_min), float(self.rate_max)
        self.eta = float(self.eta)
        if self.y_min > self.y_max:
            raise ConfigError("saturation y_min > y_max")
        if self.rate_min > self.rate_max:
            raise ConfigError("saturation rate_min > rate_max")
        if self.mode == 'smooth':
            if not self.y_min < self.y_max:
                raise ConfigError("smooth saturation needs y_min < y_max")
            if not (np.isfinite(self.y_min) and np.isfinite(self.y_max)):
                raise ConfigError("smooth saturation needs finite bounds")
            if self.rate_index is not None:
                raise ConfigError("input-dependent bounds are only supported by "
                                  "hard saturation")
        if not self.eta > 0.0:
            raise ConfigError("saturation eta must be positive, got {}".format(self.eta))

    def to_dict(self):
        return {'mode': self.mode, 'y_min': repr(self.y_min), 'y_max': repr(self.y_max),
                'eta': repr(self.eta), 'eta_trainable': self.eta_trainable,
                'rate_index': self.rate_index, 'rate_min': repr(self.rate_min),
                'rate_max': repr(self.rate_max)}

    @classmethod
    def from_dict(cls, d):
        return cls(mode=d['mode'], y_min=float(d['y_min']), y_max=float(d['y_max']),
                   eta=float(d['eta']), eta_trainable=d['eta_trainable'],
                   rate_index=d['rate_index'], rate_min=float(d['rate_min']),
                   rate_max=float(d['rate_max']))


@dataclass(eq=False)
class ModelSpec:
    """
    Parametric model family descriptor.

    Parameters
    ----------
    family : {'mlp', 'max-affine', 'input-convex-nn', 'envelope-nn'}
    n_inputs : int
    widths : tuple of int
        Hidden-layer widths (``mlp``, ``input-convex-nn``, ``envelope-nn``)
        or ``(n_f,)`` affine pieces (``max-affine``). An ``mlp`` without
        hidden layers is the affine model ``w'x + b``.
    activations : tuple of str
        One per hidden layer. ``envelope-nn`` takes ``(a, a_plus)`` with a
        nonnegative ``a_plus`` (``relu``, ``sigmoid`` or ``softplus``).
    bypass : bool or tuple of int
        Add a linear term ``V x`` to the output (``mlp`` only). A tuple
        restricts the term to those input columns.
    gate : IndicatorSpec, optional
        Force the model to the affine law ``w_affine`` on the gate's set.
    w_affine : tuple, optional
        ``(c, d)`` with ``w(x) = c' x + d``; required with ``gate``.
    saturation : SaturationSpec, optional
    """

    family: str = 'mlp'
    n_inputs: int = 1
    widths: Tuple[int, ...] = ()
    activations: Tuple[str, ...] = ()
    bypass: Union[bool, Tuple[int, ...]] = False
    gate: Optional[IndicatorSpec] = None
    w_affine: Optional[tuple] = None
    saturation: Optional[SaturationSpec] = None
    name: str = field(default='')

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError("unknown model family {!r}; expected one of {}"
                              .format(self.family, FAMILIES))
        self.n_inputs = int(self.n_inputs)
        if self.n_inputs < 1:
            raise ConfigError("a model needs at least one input")
        self.widths = tuple(int(w) for w in self.widths)
        if any(w < 1 for w in self.widths):
            raise ConfigError("layer widths must be >= 1, got {}".format(self.widths))
        if self.family == 'max-affine':
            if len(self.widths) != 1:
                raise ConfigError("max-affine takes widths=(n_f,)")
            self.activations = ()
        elif self.family == 'envelope-nn':
            if len(self.widths) != 2:
                raise ConfigError("envelope-nn takes two hidden widths")
            if not self.activations:
                self.activations = ('tanh', 'relu')
        elif self.family == 'input-convex-nn':
            if not self.activations:
                self.activations = ('softplus',) * len(self.widths)
        elif not self.activations:
            self.activations = ('tanh',) * len(self.widths)
        self.activations = tuple(self.activations)
        if not isinstance(self.bypass, (bool, np.bool_)):
            cols = tuple(int(c) for c in self.bypass)
            if not cols or len(set(cols)) != len(cols) or \
                    any(not 0 <= c < self.n_inputs for c in cols):
                raise ConfigError("bypass columns {} do not index {} inputs"
                                  .format(self.bypass, self.n_inputs))
            self.bypass = cols
        else:
            self.bypass = bool(self.bypass)
        if self.family != 'max-affine' and len(self.activations) != len(self.widths):
            raise ConfigError("{} activations for {} hidden layers"
                              .format(len(self.activations), len(self.widths)))
        acts = [get_activation(a) for a in self.activations]
        if self.family == 'envelope-nn' and not acts[1].nonnegative:
            raise ConfigError("the outer envelope activation must be nonnegative, "
                              "got {!r}".format(self.activations[1]))
        if self.family == 'input-convex-nn' and any(a.name != 'softplus' for a in acts):
            raise ConfigError("input-convex networks use softplus hidden activations")
        if (self.gate is None) != (self.w_affine is None):
            raise ConfigError("a gate and its affine law w(x) go together")
        if self.gate is not None:
            c, d = self.w_affine
            c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
            if c.size != self.n_inputs:
                raise ConfigError("w(x) has {} coefficients for {} inputs"
                                  .format(c.size, self.n_inputs))
            if self.gate.n_inputs != self.n_inputs:
                raise ConfigError("gate rows have {} columns for {} inputs"
                                  .format(self.gate.n_inputs, self.n_inputs))
            self.w_affine = (c, float(d))
        if self.saturation is not None and self.saturation.rate_index is not None:
            if not 0 <= self.saturation.rate_index < self.n_inputs:
                raise ConfigError("saturation rate_index out of range")

    @property
    def bypass_columns(self):
        """Input columns feeding the linear bypass."""
        if self.bypass is True:
            return tuple(range(self.n_inputs))
        return self.bypass or ()

    @property
    def is_composite(self):
        return self.gate is not None or self.saturation is not None

    def core(self):
        """The same family without gate and saturation wrappers."""
        return ModelSpec(family=self.family, n_inputs=self.n_inputs,
                         widths=self.widths, activations=self.activations,
                         bypass=self.bypass, name=self.name)

    def to_dict(self):
        return {'family': self.family, 'n_inputs': self.n_inputs,
                'widths': list(self.widths), 'activations': list(self.activations),
                'bypass': (self.bypass if isinstance(self.bypass, bool)
                           else list(self.bypass)), 'name': self.name,
                'gate': None if self.gate is None else self.gate.to_dict(),
                'w_affine': None if self.w_affine is None else
                {'c': float_to_str(self.w_affine[0]), 'd': repr(self.w_affine[1])},
                'saturation': None if self.saturation is None else
                self.saturation.to_dict()}

    @classmethod
    def from_dict(cls, d):
        w_affine = None
        if d.get('w_affine') is not None:
            w_affine = (str_to_float(d['w_affine']['c']), float(d['w_affine']['d']))
        return cls(family=d['family'], n_inputs=d['n_inputs'],
                   widths=tuple(d['widths']), activations=tuple(d['activations']),
                   bypass=_bypass_from_doc(d['bypass']), name=d.get('name', ''),
                   gate=None if d.get('gate') is None else IndicatorSpec.from_dict(d['gate']),
                   w_affine=w_affine,
                   saturation=None if d.get('saturation') is None else
                   SaturationSpec.from_dict(d['saturation']))


def _bypass_from_doc(value):
    return value if isinstance(value, bool) else tuple(value)
