"""
Reference-tracking linear MPC, its condensed mpQP and the gated
approximate control law.

The controller solves, for the parameter ``x = (xi_0, r, u_{-1})``,

.. math::

    \\min_{u, \\zeta} \\sum_{k=1}^{N} (\\tau_k - r)' Q_y (\\tau_k - r)
        + \\sum_{k=0}^{N-1} \\Delta u_k' Q_{\\Delta u} \\Delta u_k
        + \\rho_2 \\zeta^2 + \\rho_1 \\zeta

subject to ``xi_{k+1} = A xi_k + B u_k``, ``tau_k = C xi_k``, input and
input-rate bounds on the first ``Nu`` moves, output bounds on
``tau_1 .. tau_Nc`` softened by ``zeta V_min`` and ``zeta V_max``,
``zeta >= 0`` and the blocking ``u_k = u_{Nu-1}`` for ``k >= Nu``.
"""
from dataclasses import dataclass, replace
from typing import Optional

import astropy.units as u
import numpy as np
from astropy import log
from astropy.table import Table
from scipy import signal

from ..models.box import Box
from ..models.networks import build_model
from ..models.specs import IndicatorSpec, ModelSpec, SaturationSpec
from ..utils.exceptions import ConfigError, DimensionError, ModelEvaluationError
from ..utils.serialize import dump_json, write_table
from .qp import MpQp, _decode, _encode, cr0, unconstrained_law

__all__ = ['MpcSpec', 'condense_mpc', 'mpc_saturation', 'mpc_gated_model',
           'simulate_closed_loop', 'zoh_plant', 'nonminphase_spec']

# added to the slack weight when rho2 = 0 so that Q stays positive definite
ZETA_REGULARIZATION = 1e-9


def _weight(value, n, name):
    mat = np.asarray(value, dtype=float)
    if mat.ndim == 0:
        mat = float(mat) * np.eye(n)
    mat = np.atleast_2d(mat)
    if mat.shape != (n, n):
        raise DimensionError("{} must be {}x{}, got {}".format(name, n, n, mat.shape),
                             layer=name)
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
        raise ConfigError("{} must be symmetric".format(name))
    return 0.5 * (mat + mat.T)


def _vector(value, n, name):
    vec = np.asarray(value, dtype=float)
    if vec.ndim == 0:
        return np.full(n, float(vec))
    vec = vec.reshape(-1)
    if vec.size != n:
        raise DimensionError("{} has {} entries, expected {}".format(name, vec.size, n),
                             layer=name)
    return vec


@dataclass(eq=False)
class MpcSpec:
    """
    Linear MPC problem for the plant ``xi+ = A xi + B u``, ``tau = C xi``.

    Parameters
    ----------
    A, B, C : array_like
    N : int
        Prediction horizon.
    Nu, Nc : int, optional
        Control and constraint horizons; ``N`` when omitted.
    Q_y : array_like or float
        Output tracking weight, positive semidefinite.
    Q_du : array_like or float
        Input-rate weight, positive definite.
    rho2, rho1 : float
        Quadratic and linear weights of the slack ``zeta``.
    u_min, u_max, du_min, du_max, y_min, y_max : array_like or float
        Infinite entries are left unconstrained.
    V_min, V_max : array_like or float
        Nonnegative softening vectors of the output bounds.
    box : `~wcreg.models.Box`, optional
        Region of interest of ``x = (xi_0, r, u_{-1})``.
    Ts : float or `~astropy.units.Quantity`, optional
        Sampling time, only used to label simulated trajectories.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    N: int = 20
    Nu: Optional[int] = None
    Nc: Optional[int] = None
    Q_y: object = 1.0
    Q_du: object = 0.1
    rho2: float = 100.0
    rho1: float = 0.0
    u_min: object = -np.inf
    u_max: object = np.inf
    du_min: object = -np.inf
    du_max: object = np.inf
    y_min: object = -np.inf
    y_max: object = np.inf
    V_min: object = 1.0
    V_max: object = 1.0
    box: Optional[Box] = None
    Ts: Optional[float] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError("A must be square, got {}".format(self.A.shape),
                                 layer='A')
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, n)
        m, p = self.n_inputs, self.n_outputs
        self.N = int(self.N)
        self.Nu = self.N if self.Nu is None else int(self.Nu)
        self.Nc = self.N if self.Nc is None else int(self.Nc)
        if not self.N >= self.Nu >= 1:
            raise ConfigError("horizons must satisfy N >= Nu >= 1, got N={}, Nu={}"
                              .format(self.N, self.Nu))
        if not self.N >= self.Nc >= 1:
            raise ConfigError("horizons must satisfy N >= Nc >= 1, got N={}, Nc={}"
                              .format(self.N, self.Nc))
        self.Q_y = _weight(self.Q_y, p, 'Q_y')
        self.Q_du = _weight(self.Q_du, m, 'Q_du')
        if np.min(np.linalg.eigvalsh(self.Q_y)) < -1e-12:
            raise ConfigError("Q_y must be positive semidefinite")
        if not np.min(np.linalg.eigvalsh(self.Q_du)) > 0.0:
            raise ConfigError("Q_du must be positive definite")
        self.rho2, self.rho1 = float(self.rho2), float(self.rho1)
        if self.rho2 < 0.0 or self.rho1 < 0.0:
            raise ConfigError("slack weights must be nonnegative")
        for name, size in (('u_min', m), ('u_max', m), ('du_min', m), ('du_max', m),
                           ('y_min', p), ('y_max', p), ('V_min', p), ('V_max', p)):
            setattr(self, name, _vector(getattr(self, name), size, name))
        for lo, hi in (('u_min', 'u_max'), ('du_min', 'du_max'), ('y_min', 'y_max')):
            if np.any(getattr(self, lo) > getattr(self, hi)):
                raise ConfigError("{} exceeds {}".format(lo, hi))
        if np.any(self.V_min < 0.0) or np.any(self.V_max < 0.0):
            raise ConfigError("softening vectors must be nonnegative")
        if self.box is not None and self.box.dim != self.n_params:
            raise DimensionError("box of dimension {} for {} MPC parameters"
                                 .format(self.box.dim, self.n_params), layer='box')
        if isinstance(self.Ts, u.Quantity):
            self.Ts = float(self.Ts.to_value(u.s))

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    @property
    def n_params(self):
        """Size of ``x = (xi_0, r, u_{-1})``."""
        return self.n_states + self.n_outputs + self.n_inputs

    def split(self, x):
        """``x`` into ``(xi_0, r, u_{-1})``."""
        x = np.asarray(x, dtype=float)
        n, p = self.n_states, self.n_outputs
        return x[:n], x[n:n + p], x[n + p:]

    def to_dict(self):
        doc = {name: _encode(getattr(self, name))
               for name in ('A', 'B', 'C', 'Q_y', 'Q_du', 'u_min', 'u_max', 'du_min',
                            'du_max', 'y_min', 'y_max', 'V_min', 'V_max')}
        doc.update(N=self.N, Nu=self.Nu, Nc=self.Nc, rho2=self.rho2, rho1=self.rho1,
                   Ts=self.Ts, box=None if self.box is None else self.box.to_dict())
        return doc

    @classmethod
    def from_dict(cls, doc):
        arrays = {k: _decode(v) for k, v in doc.items()
                  if isinstance(v, dict) and 'shape' in v}
        box = None if doc.get('box') is None else Box.from_dict(doc['box'])
        return cls(N=doc['N'], Nu=doc['Nu'], Nc=doc['Nc'], rho2=doc['rho2'],
                   rho1=doc['rho1'], Ts=doc.get('Ts'), box=box, **arrays)

    def to_json(self, path=None):
        return dump_json(self.to_dict(), path)


def _prediction(spec):
    """
    Stacked prediction matrices over ``k = 1 .. N``.

    ``tau = Phi xi_0 + Gamma U`` with ``U = (u_0, ..., u_{N-1})``.
    """
    A, B, C = spec.A, spec.B, spec.C
    n, m, p, N = spec.n_states, spec.n_inputs, spec.n_outputs, spec.N
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    Phi = np.vstack([C @ powers[k] for k in range(1, N + 1)])
    Gamma = np.zeros((N * p, N * m))
    for k in range(1, N + 1):
        for j in range(k):
            Gamma[(k - 1) * p:k * p, j * m:(j + 1) * m] = C @ powers[k - 1 - j] @ B
    return Phi, Gamma


def _blocking(spec):
    """``U = M z_u``: move ``k`` is free variable ``min(k, Nu - 1)``."""
    m, N, Nu = spec.n_inputs, spec.N, spec.Nu
    M = np.zeros((N * m, Nu * m))
    for k in range(N):
        j = min(k, Nu - 1)
        M[k * m:(k + 1) * m, j * m:(j + 1) * m] = np.eye(m)
    return M


def condense_mpc(spec):
    """
    Eliminate the states and write the MPC problem as an `~wcreg.control.MpQp`.

    The decision vector is ``z = (u_0, ..., u_{Nu-1}, zeta)`` and the
    parameter is ``x = (xi_0, r, u_{-1})``. The parameter-only part of the
    cost is kept in ``MpQp.Y``, so ``MpQp.cost(z, x)`` is the full MPC cost.

    Parameters
    ----------
    spec : `MpcSpec`

    Returns
    -------
    `~wcreg.control.MpQp`
        Rows with an infinite bound are left out of ``A z <= B x + b``.
    """
    n, m, p = spec.n_states, spec.n_inputs, spec.n_outputs
    N, Nu, Nc = spec.N, spec.Nu, spec.Nc
    n_x, n_u = spec.n_params, Nu * m
    Phi, Gamma = _prediction(spec)
    Mb = _blocking(spec)
    Gu = Gamma @ Mb
    # tracking error  Gu z_u + Sx x,  input moves  DM z_u + T x
    R = np.tile(np.eye(p), (N, 1))
    Sx = np.hstack([Phi, -R, np.zeros((N * p, m))])
    D = np.eye(N * m) - np.eye(N * m, k=-m)
    DM = D @ Mb
    E = np.zeros((N * m, m))
    E[:m] = np.eye(m)
    T = np.hstack([np.zeros((N * m, n + p)), -E])
    Qy = np.kron(np.eye(N), spec.Q_y)
    Qd = np.kron(np.eye(N), spec.Q_du)

    Q = np.zeros((n_u + 1, n_u + 1))
    Q[:n_u, :n_u] = 2.0 * (Gu.T @ Qy @ Gu + DM.T @ Qd @ DM)
    Q[n_u, n_u] = 2.0 * spec.rho2
    if spec.rho2 == 0.0:
        Q[n_u, n_u] += ZETA_REGULARIZATION
    Q = 0.5 * (Q + Q.T)
    F = np.zeros((n_u + 1, n_x))
    F[:n_u] = 2.0 * (Gu.T @ Qy @ Sx + DM.T @ Qd @ T)
    f = np.zeros(n_u + 1)
    f[n_u] = spec.rho1
    Y = 2.0 * (Sx.T @ Qy @ Sx + T.T @ Qd @ T)

    rows_A, rows_B, rows_b = [], [], []

    def add(a_u, a_zeta, b_x, b_const):
        if np.isfinite(b_const):
            rows_A.append(np.append(a_u, a_zeta))
            rows_B.append(b_x)
            rows_b.append(b_const)

    zero_x = np.zeros(n_x)
    for k in range(Nu):
        for i in range(m):
            row = k * m + i
            unit = np.zeros(n_u)
            unit[row] = 1.0
            add(unit, 0.0, zero_x, spec.u_max[i])
            add(-unit, 0.0, zero_x, -spec.u_min[i])
            add(DM[row], 0.0, -T[row], spec.du_max[i])
            add(-DM[row], 0.0, T[row], -spec.du_min[i])
    for k in range(1, Nc + 1):
        for i in range(p):
            row = (k - 1) * p + i
            phi = np.concatenate([Phi[row], np.zeros(p + m)])
            add(Gu[row], -spec.V_max[i], -phi, spec.y_max[i])
            add(-Gu[row], -spec.V_min[i], phi, -spec.y_min[i])
    add(np.zeros(n_u), -1.0, zero_x, 0.0)

    prob = MpQp(Q=Q, F=F, f=f, A=np.array(rows_A), B=np.array(rows_B),
                b=np.array(rows_b), box=spec.box, Y=Y)
    log.debug("condensed MPC: {} variables, {} parameters, {} constraints"
              .format(prob.n_z, prob.n_x, prob.n_constraints))
    return prob


def mpc_saturation(spec, component=0):
    """
    Hard saturation of the first move of input ``component``.

    The bounds are ``max(u_min, u_{-1} + du_min)`` and
    ``min(u_max, u_{-1} + du_max)``, read from the ``u_{-1}`` entry of ``x``.
    """
    if not 0 <= component < spec.n_inputs:
        raise ConfigError("input component {} out of range".format(component))
    return SaturationSpec(mode='hard', y_min=spec.u_min[component],
                          y_max=spec.u_max[component],
                          rate_index=spec.n_states + spec.n_outputs + component,
                          rate_min=spec.du_min[component], rate_max=spec.du_max[component])


def mpc_gated_model(prob, inner, saturation=None, component=0, beta=1.0,
                    beta_trainable=True, minimal=True):
    """
    Surrogate of ``z*(x)[component]`` that is exact where no constraint is active.

    ``f(x) = sat(delta(x) w(x) + (1 - delta(x)) v(x; theta))`` with ``w`` the
    unconstrained law, ``delta`` the piecewise-affine indicator of ``CR0``
    and ``v`` the network described by ``inner``.

    Parameters
    ----------
    prob : `~wcreg.control.MpQp`
    inner : `~wcreg.models.ModelSpec`
        Core family over the ``n_x`` parameters.
    saturation : `~wcreg.models.SaturationSpec`, optional
        See `mpc_saturation`.
    component : int
    beta : float
        Initial gate steepness.
    beta_trainable : bool
    minimal : bool
        Gate on the minimal representation of ``CR0``.

    Returns
    -------
    `~wcreg.models.SurrogateModel`
    """
    if inner.n_inputs != prob.n_x:
        raise DimensionError("inner model over {} inputs for {} parameters"
                             .format(inner.n_inputs, prob.n_x), layer='inner')
    if not 0 <= component < prob.n_z:
        raise ConfigError("component {} out of range".format(component))
    H0, K0 = cr0(prob, minimal=minimal)
    if H0.shape[0] == 0:
        # no constraint can become active on the box: the gate is always 1
        H0, K0 = np.zeros((1, prob.n_x)), np.zeros(1)
    gate = IndicatorSpec(mode='pwa', G=H0, g_offset=-K0, beta=beta,
                         beta_trainable=beta_trainable)
    K, k = unconstrained_law(prob)
    spec = replace(inner.core(), gate=gate, w_affine=(K[component], k[component]),
                   saturation=saturation)
    log.info("gated MPC model: CR0 with {} rows, inner {} {}"
             .format(H0.shape[0], inner.family, inner.widths))
    return build_model(spec)


def _reference(reference, steps, p):
    if callable(reference):
        return np.array([_vector(reference(k), p, 'reference') for k in range(steps)])
    ref = np.asarray(reference, dtype=float)
    if ref.ndim <= 1 and ref.size in (1, p):
        return np.tile(_vector(ref, p, 'reference'), (steps, 1))
    return ref.reshape(steps, p)


def simulate_closed_loop(spec, controller, xi0, reference, steps, u_prev=None,
                         exact=None, path=None):
    """
    Run the plant in closed loop with ``u_k = controller(x_k)``.

    ``x_k = (xi_k, r_k, u_{k-1})`` is formed at every step from the plant
    state, the reference and the previous move.

    Parameters
    ----------
    spec : `MpcSpec`
    controller : callable
        ``x -> u`` returning ``n_inputs`` values.
    xi0 : array_like
    reference : array_like or callable
        Constant reference, a ``(steps, n_outputs)`` array or ``k -> r_k``.
    steps : int
    u_prev : array_like, optional
        ``u_{-1}``; zero by default.
    exact : callable, optional
        A second law evaluated at the same ``x_k`` without acting on the
        plant; recorded as ``u<i>_exact``.
    path : str, optional
        Write the table as CSV.

    Returns
    -------
    `~astropy.table.Table`
        Columns ``t``, ``xi<j>``, ``u<i>``, ``tau<i>`` and ``r<i>``; ``t`` is
        in seconds when ``spec.Ts`` is set and the step index otherwise.

    Raises
    ------
    `~wcreg.utils.exceptions.ModelEvaluationError`
        If the controller returns a non-finite input.
    """
    n, m, p = spec.n_states, spec.n_inputs, spec.n_outputs
    refs = _reference(reference, steps, p)
    xi = _vector(xi0, n, 'xi0')
    u_last = np.zeros(m) if u_prev is None else _vector(u_prev, m, 'u_prev')
    xis, us, taus, exacts = [], [], [], []
    for k in range(steps):
        x = np.concatenate([xi, refs[k], u_last])
        u_k = np.atleast_1d(np.asarray(controller(x), dtype=float)).reshape(-1)
        if u_k.size != m or not np.all(np.isfinite(u_k)):
            raise ModelEvaluationError("controller returned {} at x = {}"
                                       .format(u_k.tolist(), x.tolist()), sample=k)
        if exact is not None:
            exacts.append(np.atleast_1d(np.asarray(exact(x), dtype=float)).reshape(m))
        xis.append(xi)
        us.append(u_k)
        taus.append(spec.C @ xi)
        xi = spec.A @ xi + spec.B @ u_k
        u_last = u_k
    table = Table()
    index = np.arange(steps, dtype=float)
    table['t'] = index * spec.Ts * u.s if spec.Ts is not None else index
    for j in range(n):
        table['xi{}'.format(j + 1)] = [v[j] for v in xis]
    for i in range(m):
        table['u{}'.format(i + 1)] = [v[i] for v in us]
        if exact is not None:
            table['u{}_exact'.format(i + 1)] = [v[i] for v in exacts]
    for i in range(p):
        table['tau{}'.format(i + 1)] = [v[i] for v in taus]
        table['r{}'.format(i + 1)] = refs[:, i]
    if path is not None:
        write_table(table, path)
    return table


def zoh_plant(num, den, Ts):
    """
    Zero-order-hold discretization of a strictly proper transfer function.

    Parameters
    ----------
    num, den : array_like
        Polynomial coefficients in descending powers of ``s``.
    Ts : float or `~astropy.units.Quantity`

    Returns
    -------
    A, B, C : ndarray

    Examples
    --------
    >>> A, B, C = zoh_plant([1.0], [1.0, 1.0], 0.1)
    >>> round(float(A[0, 0]), 6)
    0.904837
    """
    if isinstance(Ts, u.Quantity):
        Ts = Ts.to_value(u.s)
    A, B, C, D = signal.tf2ss(num, den)
    if np.any(np.abs(D) > 0.0):
        raise ConfigError("the plant must be strictly proper")
    Ad, Bd, Cd, _, _ = signal.cont2discrete((A, B, C, D), float(Ts), method='zoh')
    return Ad, Bd, Cd


def nonminphase_spec(N=20, Ts=0.5 * u.s, box=None):
    """
    Tracking MPC of ``G(s) = (s - 0.5) / (s^2 + 0.4 s + 1)``.

    ``|du| <= 0.5``, ``|tau| <= 1.2`` (soft, ``V_min = V_max = 1``), ``Q_y = 1``,
    ``Q_du = 0.1``, ``rho2 = 100``, ``rho1 = 0`` and ``N = Nu = Nc``. The
    default region of interest is
    ``[-3, 3] x [-3, 3] x [-1, 1] x [-2.5, 2.5]`` over ``(xi, r, u_{-1})``.
    """
    A, B, C = zoh_plant([1.0, -0.5], [1.0, 0.4, 1.0], Ts)
    if box is None:
        box = Box([-3.0, -3.0, -1.0, -2.5], [3.0, 3.0, 1.0, 2.5])
    return MpcSpec(A=A, B=B, C=C, N=N, Q_y=1.0, Q_du=0.1, rho2=100.0, rho1=0.0,
                   du_min=-0.5, du_max=0.5, y_min=-1.2, y_max=1.2, V_min=1.0, V_max=1.0,
                   box=box, Ts=Ts)
