"""
Registry of benchmark problems.

Each entry fixes a target, a region of interest, the model families and the
settings the benchmark is published with. Run settings given on the command
line or in a config file override the registry values.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import astropy.units as u
import numpy as np
from astropy.utils.introspection import resolve_name
from scipy import special

from ..control.dynamics import pendulum
from ..control.mpc import nonminphase_spec
from ..models.box import Box
from ..models.specs import ModelSpec
from ..utils.exceptions import ConfigError

__all__ = ['MODES', 'Problem', 'PROBLEMS', 'get_problem', 'scalar_example',
           'gaussian_bump', 'nonconvex_set']

MODES = ('fit', 'bounds', 'certify-set', 'sysid', 'mpqp', 'mpc')


def scalar_example(x):
    """
    ``(sin(x - x^2/10) + (x/10)^3 - 4x/10) e^-x / (1 + e^-x)``.

    >>> round(scalar_example([0.0]), 12)
    0.0
    """
    x = float(np.ravel(x)[0])
    return ((np.sin(x - x ** 2 / 10.0) + (x / 10.0) ** 3 - 0.4 * x)
            * special.expit(-x))


def gaussian_bump(x):
    return float(np.exp(-30.0 * ((x[0] - 0.5) ** 2 + (x[1] - 0.5) ** 2)))


def nonconvex_set(x):
    """Constraint function of a nonconvex set in the plane; feasible where ``<= 0``."""
    return float(x[0] ** 2 + x[1] ** 4 + x[0] ** 3 / 3.0 - x[1] ** 3 - x[1] / 2.0 - 1.0)


@dataclass(frozen=True, eq=False)
class Problem:
    """
    A benchmark: what to approximate, where, and with which settings.

    Parameters
    ----------
    name : str
    description : str
    modes : tuple of str
        Subcommands the problem supports; the first is its natural one.
    box : `~wcreg.models.Box`
    families : dict
        Model families by name; the first is the default.
    target : callable, optional
        ``x -> float`` for the ``fit``, ``bounds`` and ``certify-set`` modes.
    ode : callable, optional
        Factory returning the `~wcreg.control.OdeModel` learned in ``sysid``;
        ``box`` then ranges over ``col(xi, u)`` and ``settings`` holds ``Ts``
        in seconds and optionally the integration ``method``.
    n_initial, max_steps : int
    err_threshold, gamma, nu, l2_reg : float
    sign_eta : float, optional
        Smoothing of the sign transform in ``certify-set``.
    envelope : dict
        Keyword arguments of `~wcreg.certify.EnvelopeConfig`.
    settings : dict
        Problem-specific values (sampling time, horizon, instance seed, ...).
    references : dict
        Published results of the benchmark, informative only.
    """

    name: str
    description: str
    modes: tuple
    box: Box
    families: dict
    target: Optional[Callable] = None
    ode: Optional[Callable] = None
    n_initial: int = 20
    max_steps: int = 30
    err_threshold: float = 0.0
    gamma: float = 10.0
    nu: float = 0.0
    l2_reg: float = 1e-4
    sign_eta: Optional[float] = None
    envelope: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)

    def __post_init__(self):
        if 'sysid' in self.modes:
            if self.ode is None:
                raise ConfigError("problem {!r} lists sysid but defines no ode"
                                  .format(self.name))
            if 'Ts' not in self.settings:
                raise ConfigError("problem {!r} needs a sampling time Ts in its settings"
                                  .format(self.name))

    def family(self, name=None):
        """The `~wcreg.models.ModelSpec` called ``name`` (the default one if `None`)."""
        if name is None:
            return next(iter(self.families.values()))
        try:
            return self.families[name]
        except KeyError:
            raise ConfigError("problem {!r} has no family {!r}; choose from {}"
                              .format(self.name, name, sorted(self.families))) from None

    def to_dict(self):
        return {'name': self.name, 'description': self.description,
                'modes': list(self.modes), 'box': self.box.to_dict(),
                'families': {k: v.to_dict() for k, v in self.families.items()},
                'n_initial': self.n_initial, 'max_steps': self.max_steps,
                'err_threshold': self.err_threshold, 'gamma': self.gamma, 'nu': self.nu,
                'l2_reg': self.l2_reg, 'sign_eta': self.sign_eta,
                'envelope': {k: list(v) if isinstance(v, tuple) else v
                             for k, v in self.envelope.items()},
                'ode': None if self.ode is None else getattr(self.ode, '__name__', repr(self.ode)),
                'settings': self.settings, 'references': self.references}


def _pendulum_box():
    return Box([-np.pi, -5.0, -2.0], [np.pi, 5.0, 2.0])


def _registry():
    mpc = nonminphase_spec(N=20, Ts=0.5 * u.s)
    leaky = 'leaky-relu(0.1)'
    problems = [
        Problem(
            name='scalar-example',
            description="Scalar function on [-10, 10] fitted by a 2-1 tanh network.",
            modes=('fit', 'bounds'), box=Box([-10.0], [10.0]),
            families={'mlp': ModelSpec('mlp', n_inputs=1, widths=(2, 1),
                                       activations=('tanh', 'tanh'))},
            target=scalar_example, n_initial=20, max_steps=30, err_threshold=1e-3,
            gamma=10.0, nu=0.0, l2_reg=1e-8,
            envelope={'widths': (2, 1), 'activations': ('tanh', 'softplus'),
                      'rho_psi': 1e-3}),
        Problem(
            name='gaussian',
            description="exp(-30 |x - (0.5, 0.5)|^2) on the unit square, 10-5 "
                        "leaky-ReLU network.",
            modes=('fit', 'bounds'), box=Box([0.0, 0.0], [1.0, 1.0]),
            families={'mlp': ModelSpec('mlp', n_inputs=2, widths=(10, 5),
                                       activations=(leaky, leaky))},
            target=gaussian_bump, n_initial=100, max_steps=50, l2_reg=1e-4,
            envelope={'widths': (20, 10), 'activations': (leaky, 'relu'),
                      'rho_psi': 1e-8},
            references={'cpu_seconds': 107.4}),
        Problem(
            name='nonconvex-set',
            description="Convex inner approximation of "
                        "{x1^2 + x2^4 + x1^3/3 - x2^3 - x2/2 - 1 <= 0} on [-2, 2]^2.",
            modes=('certify-set', 'fit'), box=Box([-2.0, -2.0], [2.0, 2.0]),
            families={'max-affine': ModelSpec('max-affine', n_inputs=2, widths=(10,)),
                      'input-convex-nn': ModelSpec('input-convex-nn', n_inputs=2,
                                                   widths=(5, 5))},
            target=nonconvex_set, n_initial=50, max_steps=50, l2_reg=1e-4, sign_eta=10.0,
            references={'cpu_seconds': [52.5, 155.9]}),
        Problem(
            name='pendulum',
            description="Nonlinear pendulum sampled at 0.1 s with Heun steps; inputs "
                        "(angle, rate, torque) over [-pi, pi] x [-5, 5] x [-2, 2], "
                        "10-neuron ReLU network plus a linear term in the torque.",
            modes=('sysid',), box=_pendulum_box(),
            families={'mlp': ModelSpec('mlp', n_inputs=3, widths=(10,),
                                       activations=('relu',), bypass=(2,))},
            ode=pendulum, n_initial=100, max_steps=50, l2_reg=1e-4,
            settings={'Ts': 0.1, 'method': 'heun'},
            references={'W': [[-3.1714, 3.1714], [-0.07824, 0.07824]]}),
        Problem(
            name='random-mpqp',
            description="First optimizer of a random mpQP with 2 parameters, 10 "
                        "variables, 30 inequalities and |z_i| <= 1, gated on CR0.",
            modes=('mpqp',), box=Box([-1.0, -1.0], [1.0, 1.0]),
            families={'mlp': ModelSpec('mlp', n_inputs=2, widths=(5, 5),
                                       activations=('relu', 'relu'), bypass=True)},
            n_initial=20, max_steps=30, l2_reg=1e-4,
            envelope={'widths': (5, 5), 'activations': ('relu', 'relu'),
                      'rho_psi': 1e-4},
            settings={'instance_seed': 0, 'n_z': 10, 'n_ineq': 30, 'z_bound': 1.0},
            references={'cpu_seconds': 31.2}),
        Problem(
            name='mpc-nonminphase',
            description="Explicit tracking MPC of (s - 0.5)/(s^2 + 0.4 s + 1), "
                        "zero-order hold at Ts = 0.5 s, N = Nu = Nc = 20, |du| <= 0.5, "
                        "|tau| <= 1.2.",
            modes=('mpc',), box=mpc.box,
            families={'mlp': ModelSpec('mlp', n_inputs=4, widths=(20, 10),
                                       activations=('relu', 'relu'), bypass=True)},
            n_initial=1000, max_steps=1000, l2_reg=1e-4, nu=1e-4,
            settings={'N': 20, 'Ts': 0.5, 'reference': 1.0, 'steps': 100},
            references={'wce': 4.394e-2, 'mse': 1.418e-4, 'passive_wce': 0.4185}),
    ]
    return {p.name: p for p in problems}


PROBLEMS = _registry()


def get_problem(key):
    """
    Look up a registry entry, or import a user `Problem` by dotted name.

    >>> get_problem('gaussian').n_initial
    100
    """
    if isinstance(key, Problem):
        return key
    if key in PROBLEMS:
        return PROBLEMS[key]
    if '.' in key:
        try:
            obj = resolve_name(key)
        except (ImportError, AttributeError) as exc:
            raise ConfigError("cannot import problem {!r}: {}".format(key, exc)) from None
        if callable(obj) and not isinstance(obj, Problem):
            obj = obj()
        if isinstance(obj, Problem):
            return obj
        raise ConfigError("{!r} is not a Problem".format(key))
    raise ConfigError("unknown problem {!r}; choose from {}".format(key, sorted(PROBLEMS)))
