"""
Discrete-time uncertain models of continuous-time systems.

A system ``dxi/dt = F(xi, u)``, ``tau = G(xi, u)`` sampled with a
zero-order hold at ``Ts`` is described by

    xi(t + Ts) = F_hat(xi(t), u(t)) + w(t),   w(t) in W
    tau(t) = G_hat(xi(t), u(t)) + v(t),       v(t) in V

where every component of ``F_hat`` and ``G_hat`` is fitted by worst-case
regression and ``W``, ``V`` are boxes of certified constant error bounds.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import astropy.units as u
import numpy as np
from astropy import log
from astropy.table import Table

from ..certify.bounds import constant_asym_bounds
from ..models.box import Box
from ..models.specs import ModelSpec
from ..regression.active import ActiveConfig, fit_worst_case
from ..utils.exceptions import ConfigError, DimensionError, IntegrationError
from ..utils.parallel import map_ordered
from ..utils.serialize import dump_json, write_table

__all__ = ['METHODS', 'OdeModel', 'UncertainModel', 'integrate_step',
           'learn_uncertain_model', 'rollout_table', 'pendulum']

METHODS = ('heun', 'rk4')
DEFAULT_SUBSTEPS = {'heun': 10, 'rk4': 1}


@dataclass(eq=False)
class OdeModel:
    """
    Continuous-time model ``dxi/dt = F(xi, u)`` with output ``tau = G(xi, u)``.

    Parameters
    ----------
    n_states, n_inputs : int
    vector_field : callable
        ``F(xi, u) -> dxi/dt`` with ``n_states`` components.
    output_map : callable, optional
        ``G(xi, u) -> tau`` with ``n_outputs`` components.
    n_outputs : int
    name : str
    """

    n_states: int
    n_inputs: int
    vector_field: Callable
    output_map: Optional[Callable] = None
    n_outputs: int = 0
    name: str = ''

    def __post_init__(self):
        if self.n_states < 1 or self.n_inputs < 0:
            raise ConfigError("a model needs at least one state")
        if (self.output_map is None) != (self.n_outputs == 0):
            raise ConfigError("an output map and n_outputs >= 1 go together")

    def derivative(self, xi, u_in):
        d = np.asarray(self.vector_field(xi, u_in), dtype=float).reshape(-1)
        if d.size != self.n_states:
            raise DimensionError("vector field returned {} components for {} states"
                                 .format(d.size, self.n_states), layer='vector field')
        return d

    def output(self, xi, u_in):
        if self.output_map is None:
            return np.zeros(0)
        return np.asarray(self.output_map(xi, u_in), dtype=float).reshape(-1)

    def split(self, x):
        """``x = col(xi, u)`` into its state and input parts."""
        x = np.asarray(x, dtype=float)
        return x[:self.n_states], x[self.n_states:self.n_states + self.n_inputs]


def _seconds(Ts):
    if isinstance(Ts, u.Quantity):
        return float(Ts.to_value(u.s))
    return float(Ts)


def integrate_step(model, xi, u_in, Ts, method='heun', substeps=None):
    """
    Advance the state over one sampling interval with constant input.

    Parameters
    ----------
    model : `OdeModel`
    xi : array_like
        State at the start of the interval.
    u_in : array_like
        Input held over ``[0, Ts]``.
    Ts : float or `~astropy.units.Quantity`
        Sampling time, in seconds when a float.
    method : {'heun', 'rk4'}
        Explicit trapezoidal rule or the classical Runge-Kutta scheme.
    substeps : int, optional
        Fixed steps per interval; 10 for ``heun`` and 1 for ``rk4`` by
        default.

    Returns
    -------
    xi_next : ndarray

    Raises
    ------
    `~wcreg.utils.exceptions.IntegrationError`
        If a stage evaluation is not finite.
    """
    if method not in METHODS:
        raise ConfigError("unknown integrator {!r}; choose from {}".format(method, METHODS))
    substeps = DEFAULT_SUBSTEPS[method] if substeps is None else int(substeps)
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    h = _seconds(Ts) / substeps
    xi = np.asarray(xi, dtype=float).copy()
    u_in = np.atleast_1d(np.asarray(u_in, dtype=float))

    def stage(point, index):
        d = model.derivative(point, u_in)
        if not np.all(np.isfinite(d)):
            raise IntegrationError("non-finite derivative at xi = {}"
                                   .format(np.array2string(point, precision=4)),
                                   stage=index)
        return d

    for _ in range(substeps):
        if method == 'heun':
            k1 = stage(xi, 1)
            k2 = stage(xi + h * k1, 2)
            xi = xi + 0.5 * h * (k1 + k2)
        else:
            k1 = stage(xi, 1)
            k2 = stage(xi + 0.5 * h * k1, 2)
            k3 = stage(xi + 0.5 * h * k2, 3)
            k4 = stage(xi + h * k3, 4)
            xi = xi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return xi


@dataclass(eq=False)
class UncertainModel:
    """
    Learned discrete-time model with additive bounded uncertainty.

    ``state_fits[j]`` and ``output_fits[j]`` are the `~wcreg.regression.FitReport`
    of each component; ``W`` and ``V`` hold the intervals
    ``[-e_min_j, e_max_j]`` as boxes.
    """

    n_states: int
    n_inputs: int
    Ts: float
    state_fits: list
    W: Box
    output_fits: list = field(default_factory=list)
    V: Optional[Box] = None
    method: str = 'heun'
    substeps: int = 10

    def _x(self, xi, u_in):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        u_in = np.asarray(u_in, dtype=float).reshape(xi.shape[0], self.n_inputs)
        return np.hstack([xi, u_in])

    def predict_state(self, xi, u_in):
        """``F_hat(xi, u)`` for one state or a batch of rows."""
        single = np.ndim(xi) == 1
        X = self._x(xi, u_in)
        out = np.column_stack([fit.predict(X) for fit in self.state_fits])
        return out[0] if single else out

    def predict_output(self, xi, u_in):
        single = np.ndim(xi) == 1
        X = self._x(xi, u_in)
        out = np.column_stack([fit.predict(X) for fit in self.output_fits])
        return out[0] if single else out

    def state_bounds(self, xi, u_in):
        """Certified interval ``F_hat(xi, u) + W`` of the next state."""
        center = self.predict_state(xi, u_in)
        return center + self.W.lower, center + self.W.upper

    def contains_next(self, xi, u_in, xi_next, atol=0.0):
        lower, upper = self.state_bounds(xi, u_in)
        xi_next = np.asarray(xi_next, dtype=float)
        return np.all((xi_next >= lower - atol) & (xi_next <= upper + atol), axis=-1)

    def to_dict(self):
        def component(fit):
            return {'model': fit.model.spec.to_dict(),
                    'theta_star': fit.theta_star.to_dict(),
                    'wce': fit.wce, 'stop_reason': fit.stop_reason}

        doc = {'n_states': self.n_states, 'n_inputs': self.n_inputs, 'Ts': self.Ts,
               'method': self.method, 'substeps': self.substeps,
               'W': self.W.to_dict(), 'states': [component(f) for f in self.state_fits]}
        if self.output_fits:
            doc['V'] = self.V.to_dict()
            doc['outputs'] = [component(f) for f in self.output_fits]
        return doc

    def to_json(self, path=None):
        return dump_json(self.to_dict(), path)

    def interval_table(self):
        """One row per uncertain component: ``name``, ``lower``, ``upper``."""
        names = ['w{}'.format(j + 1) for j in range(self.n_states)]
        lower, upper = list(self.W.lower), list(self.W.upper)
        if self.V is not None:
            names += ['v{}'.format(j + 1) for j in range(self.V.dim)]
            lower += list(self.V.lower)
            upper += list(self.V.upper)
        return Table([names, lower, upper], names=('component', 'lower', 'upper'))


def _component_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def learn_uncertain_model(ode, box, Ts, families, cfg=None, output_families=None,
                          method='heun', substeps=None, threads=None):
    """
    Fit ``F_hat`` and ``G_hat`` component-wise and certify ``W`` and ``V``.

    The target of state ``j`` is ``x -> integrate_step(ode, xi, u, Ts)[j]``
    with ``x = col(xi, u)``; every target uses the same integrator settings.

    Parameters
    ----------
    ode : `OdeModel`
    box : `~wcreg.models.Box`
        Operating range of ``col(xi, u)``.
    Ts : float or `~astropy.units.Quantity`
    families : `~wcreg.models.ModelSpec` or list of them
        One per state, or a single family shared by all states.
    cfg : `~wcreg.regression.ActiveConfig`, optional
        Each component runs with its own seed spawned from ``cfg.seed``.
    output_families : `~wcreg.models.ModelSpec` or list, optional
        Required when ``ode`` has outputs.
    threads : int, optional
        Components fitted concurrently.

    Returns
    -------
    `UncertainModel`
    """
    cfg = ActiveConfig() if cfg is None else cfg
    box = box if isinstance(box, Box) else Box(*box)
    n_x = ode.n_states + ode.n_inputs
    if box.dim != n_x:
        raise DimensionError("box over {} dimensions for col(xi, u) of size {}"
                             .format(box.dim, n_x), layer='box')
    Ts = _seconds(Ts)
    substeps = DEFAULT_SUBSTEPS[method] if substeps is None else int(substeps)

    def as_list(spec, n):
        specs = [spec] * n if isinstance(spec, ModelSpec) else list(spec)
        if len(specs) != n:
            raise ConfigError("{} model families for {} components".format(len(specs), n))
        return specs

    def state_target(j):
        def f(x):
            xi, u_in = ode.split(x)
            return integrate_step(ode, xi, u_in, Ts, method, substeps)[j]
        return f

    def output_target(j):
        def f(x):
            xi, u_in = ode.split(x)
            return ode.output(xi, u_in)[j]
        return f

    jobs = [(state_target(j), spec, 'xi{}'.format(j + 1))
            for j, spec in enumerate(as_list(families, ode.n_states))]
    if ode.n_outputs:
        if output_families is None:
            raise ConfigError("the model has outputs; pass output_families")
        jobs += [(output_target(j), spec, 'tau{}'.format(j + 1))
                 for j, spec in enumerate(as_list(output_families, ode.n_outputs))]
    seeds = _component_seeds(cfg.seed, len(jobs))

    def run(item):
        (target, spec, name), seed = item
        report = fit_worst_case(target, spec, box, replace(cfg, seed=seed))
        e_min, e_max = constant_asym_bounds(target, report.model, report.theta_star,
                                            box, cfg.direct)
        log.info("{}: worst-case error {:.6g}, interval [{:.6g}, {:.6g}]"
                 .format(name, report.wce, -e_min, e_max))
        return report, -e_min, e_max

    results = []
    for ok, value in map_ordered(run, zip(jobs, seeds), threads):
        if not ok:
            raise value
        results.append(value)
    n = ode.n_states
    W = Box([r[1] for r in results[:n]], [r[2] for r in results[:n]])
    V = None
    if ode.n_outputs:
        V = Box([r[1] for r in results[n:]], [r[2] for r in results[n:]])
    return UncertainModel(n_states=n, n_inputs=ode.n_inputs, Ts=Ts,
                          state_fits=[r[0] for r in results[:n]], W=W,
                          output_fits=[r[0] for r in results[n:]], V=V,
                          method=method, substeps=substeps)


def rollout_table(model, ode, xi0, inputs, path=None):
    """
    One-step-ahead predictions along a simulated trajectory.

    The true trajectory is integrated with the settings ``model`` was learned
    with; at every step the prediction starts from the true state.

    Returns
    -------
    `~astropy.table.Table`
        Columns ``t`` (s), ``xi<j>``, ``xi<j>_hat``, ``xi<j>_lower`` and
        ``xi<j>_upper`` for every state; written as CSV when ``path`` is given.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim < 2:
        inputs = inputs.reshape(-1, ode.n_inputs)
    xi = np.asarray(xi0, dtype=float)
    rows = []
    for k, u_k in enumerate(inputs):
        xi_next = integrate_step(ode, xi, u_k, model.Ts, model.method, model.substeps)
        lower, upper = model.state_bounds(xi, u_k)
        rows.append(((k + 1) * model.Ts, xi_next, model.predict_state(xi, u_k),
                     lower, upper))
        xi = xi_next
    table = Table()
    table['t'] = np.array([r[0] for r in rows]) * u.s
    for j in range(ode.n_states):
        name = 'xi{}'.format(j + 1)
        table[name] = [r[1][j] for r in rows]
        table[name + '_hat'] = [r[2][j] for r in rows]
        table[name + '_lower'] = [r[3][j] for r in rows]
        table[name + '_upper'] = [r[4][j] for r in rows]
    if path is not None:
        write_table(table, path)
    return table


def _si(value, unit):
    if isinstance(value, u.Quantity):
        return float(value.to_value(unit, equivalencies=u.dimensionless_angles()))
    return float(value)


def pendulum(J=0.05 * u.kg * u.m ** 2, b=0.08 * u.N * u.m * u.s / u.rad, m=1.0 * u.kg,
             g=9.81 * u.m / u.s ** 2, l_c=0.15 * u.m, k1=2.0 * u.N * u.m / u.rad,
             k3=5.0 * u.N * u.m / u.rad ** 3):
    """
    Pendulum with viscous friction and a cubic spring.

    ``xi = (angle [rad], angular velocity [rad/s])`` and the input is the
    applied torque in N m:

    .. math::

        \\dot\\xi_1 = \\xi_2, \\qquad
        \\dot\\xi_2 = \\frac{1}{J}\\left(u - b\\xi_2 - m g \\ell_c \\sin\\xi_1
                     - k_1\\xi_1 - k_3\\xi_1^3\\right)

    Floats are taken as SI values.

    Returns
    -------
    `OdeModel`
    """
    J = _si(J, u.kg * u.m ** 2)
    b = _si(b, u.N * u.m * u.s)
    mgl = _si(m, u.kg) * _si(g, u.m / u.s ** 2) * _si(l_c, u.m)
    k1 = _si(k1, u.N * u.m)
    k3 = _si(k3, u.N * u.m)

    def vector_field(xi, u_in):
        angle, rate = xi[0], xi[1]
        torque = float(np.ravel(u_in)[0])
        return np.array([rate, (torque - b * rate - mgl * np.sin(angle)
                                - k1 * angle - k3 * angle ** 3) / J])

    return OdeModel(n_states=2, n_inputs=1, vector_field=vector_field, name='pendulum')
