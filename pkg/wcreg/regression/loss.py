"""
Training objectives: smoothed worst-case error, mean squared error and the
envelope losses used to learn input-dependent error bounds.

Every objective returns ``(value, gradient)`` so it can be handed straight
to `~wcreg.optimize.minimize`. Log-sum-exp terms are evaluated with
`scipy.special.logsumexp`, which shifts by the largest exponent and never
overflows.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from ..models.box import Box
from ..models.networks import Model, build_model
from ..models.params import ParamVec
from ..models.specs import ModelSpec
from ..utils.exceptions import ConfigError, DatasetError
from ..utils.serialize import float_to_str, str_to_float

__all__ = ['TrainConfig', 'Dataset', 'smooth_linf_loss', 'mse_loss',
           'envelope_loss_sym', 'envelope_loss_asym', 'sign_transform',
           'MU_FUNCTIONS']


@dataclass
class TrainConfig:
    """
    Weights of the training objectives.

    Parameters
    ----------
    gamma : float, optional
        Smoothing parameter of the log-sum-exp maximum; defaults to
        ``wcreg.conf.gamma``.
    nu : float
        Weight of the mean squared error added to the smoothed maximum.
    l2_reg : float, optional
        Coefficient of ``||theta||**2``; defaults to ``wcreg.conf.l2_reg``.
    sign_eta : float, optional
        When set, targets and model outputs pass through
        ``tanh(sign_eta * .)`` before the errors are formed.
    """

    gamma: Optional[float] = None
    nu: float = 0.0
    l2_reg: Optional[float] = None
    sign_eta: Optional[float] = None

    def __post_init__(self):
        from .. import conf
        if self.gamma is None:
            self.gamma = conf.gamma
        if self.l2_reg is None:
            self.l2_reg = conf.l2_reg
        self.gamma = float(self.gamma)
        if not self.gamma > 0.0:
            raise ConfigError("gamma must be positive, got {}".format(self.gamma))
        if self.nu < 0.0:
            raise ConfigError("nu must be nonnegative, got {}".format(self.nu))
        if self.l2_reg < 0.0:
            raise ConfigError("l2_reg must be nonnegative, got {}".format(self.l2_reg))
        if self.sign_eta is not None and not self.sign_eta > 0.0:
            raise ConfigError("sign_eta must be positive, got {}".format(self.sign_eta))

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class Dataset:
    """
    Samples ``(x_k, y_k)`` of the target function.

    Parameters
    ----------
    xs : array_like
        Inputs, shape ``(N, n)``; a 1-D array is read as ``N`` scalar inputs.
    ys : array_like
        Finite targets, shape ``(N,)``.
    acquired : array_like of bool, optional
        Which samples were added by active learning; all ``False`` by
        default.
    box : `~wcreg.models.Box`, optional
        Domain every input must lie in.

    Raises
    ------
    `~wcreg.utils.exceptions.DatasetError`
        For empty or ragged data, non-finite values or inputs outside
        ``box``.
    """

    xs: np.ndarray
    ys: np.ndarray
    acquired: Optional[np.ndarray] = None
    box: Optional[Box] = field(default=None, repr=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.ndim != 2 or xs.shape[0] < 1:
            raise DatasetError("a data set needs at least one sample")
        if xs.shape[0] != ys.shape[0]:
            raise DatasetError("{} inputs but {} targets"
                               .format(xs.shape[0], ys.shape[0]))
        acquired = (np.zeros(ys.shape[0], dtype=bool) if self.acquired is None
                    else np.asarray(self.acquired, dtype=bool).reshape(-1))
        if acquired.shape != ys.shape:
            raise DatasetError("acquired flags do not match the number of samples")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            bad = np.flatnonzero(~(np.all(np.isfinite(xs), axis=1) & np.isfinite(ys)))
            raise DatasetError("non-finite sample(s) at index {}".format(bad.tolist()))
        if self.box is not None:
            if xs.shape[1] != self.box.dim:
                raise DatasetError("inputs of dimension {} for a box of dimension {}"
                                   .format(xs.shape[1], self.box.dim))
            outside = ~np.all((xs >= self.box.lower) & (xs <= self.box.upper), axis=1)
            if outside.any():
                raise DatasetError("sample(s) {} lie outside the box"
                                   .format(np.flatnonzero(outside).tolist()))
        self.xs, self.ys, self.acquired = xs, ys, acquired

    def __len__(self):
        return self.ys.size

    @property
    def n_inputs(self):
        return self.xs.shape[1]

    @property
    def n_initial(self):
        return int(np.sum(~self.acquired))

    def appended(self, x, y, acquired=True):
        """New data set with one more sample."""
        return Dataset(np.vstack([self.xs, np.reshape(x, (1, -1))]),
                       np.append(self.ys, y), np.append(self.acquired, acquired),
                       box=self.box)

    def subset(self, stop):
        """The first ``stop`` samples."""
        return Dataset(self.xs[:stop], self.ys[:stop], self.acquired[:stop],
                       box=self.box)

    def to_dict(self):
        return {'xs': [float_to_str(row) for row in self.xs],
                'ys': float_to_str(self.ys),
                'acquired': [bool(a) for a in self.acquired]}

    @classmethod
    def from_dict(cls, d, box=None):
        xs = np.array([str_to_float(row) for row in d['xs']])
        return cls(xs, str_to_float(d['ys']), d.get('acquired'), box=box)


def _as_model(model):
    if isinstance(model, Model):
        return model
    if isinstance(model, ModelSpec):
        return build_model(model)
    raise TypeError("expected a Model or a ModelSpec, got {!r}".format(type(model)))


def _flat(theta):
    if isinstance(theta, ParamVec):
        return theta.values
    return np.asarray(theta, dtype=float)


def _check_errors(data, errors):
    errors = np.asarray(errors, dtype=float).reshape(-1)
    if errors.size != len(data):
        raise DatasetError("{} errors for a data set of {} samples"
                           .format(errors.size, len(data)))
    if not np.all(np.isfinite(errors)):
        raise DatasetError("non-finite error at sample(s) {}"
                           .format(np.flatnonzero(~np.isfinite(errors)).tolist()))
    return errors


def sign_transform(value, eta):
    """
    Smooth sign ``tanh(eta * value)``.

    Examples
    --------
    >>> round(float(sign_transform(0.1, 10.0)), 6)
    0.761594
    """
    if not eta > 0.0:
        raise ConfigError("sign smoothing eta must be positive, got {}".format(eta))
    out = np.tanh(eta * np.asarray(value, dtype=float))
    return float(out) if out.ndim == 0 else out


def _residuals(model, theta, data, cfg):
    """Errors ``y - f_hat``, their derivative w.r.t. ``f_hat`` and the cache."""
    y_hat, cache = model.forward(theta, data.xs)
    if cfg.sign_eta is None:
        return data.ys - y_hat, -np.ones_like(y_hat), cache
    s_hat = np.tanh(cfg.sign_eta * y_hat)
    e = np.tanh(cfg.sign_eta * data.ys) - s_hat
    return e, -cfg.sign_eta * (1.0 - s_hat ** 2), cache


def _regularize(value, g_theta, vec, weight):
    if weight:
        value += weight * float(vec @ vec)
        g_theta = g_theta + 2.0 * weight * vec
    return float(value), g_theta


def smooth_linf_loss(model, theta, data, cfg=None):
    """
    Smoothed maximum absolute error plus optional MSE and l2 terms.

    .. math::

        \\ell(\\theta) = r\\|\\theta\\|^2
            + \\frac{1}{\\gamma}\\log\\sum_k \\left(e^{\\gamma e_k}
            + e^{-\\gamma e_k}\\right) + \\frac{\\nu}{N}\\sum_k e_k^2,
        \\qquad e_k = y_k - \\hat f(x_k; \\theta)

    The log-sum-exp part lies between ``max_k |e_k|`` and
    ``max_k |e_k| + log(2N) / gamma``.

    Parameters
    ----------
    model : `~wcreg.models.Model` or `~wcreg.models.ModelSpec`
    theta : `~wcreg.models.ParamVec` or array_like
    data : `Dataset`
    cfg : `TrainConfig`, optional

    Returns
    -------
    value : float
    grad : ndarray
        Exact gradient with respect to ``theta``.

    Raises
    ------
    `~wcreg.utils.exceptions.ModelEvaluationError`
        If the model output is not finite; the error names the sample.
    """
    cfg = TrainConfig() if cfg is None else cfg
    model = _as_model(model)
    e, de_dy, cache = _residuals(model, theta, data, cfg)
    gamma = cfg.gamma
    z = gamma * np.concatenate([e, -e])
    value = logsumexp(z) / gamma
    p = softmax(z)
    n = e.size
    d_e = p[:n] - p[n:]
    if cfg.nu:
        value += cfg.nu / n * float(e @ e)
        d_e = d_e + 2.0 * cfg.nu / n * e
    g_theta, _ = model.backward(cache, d_e * de_dy)
    return _regularize(value, g_theta, _flat(theta), cfg.l2_reg)


def mse_loss(model, theta, data, cfg=None):
    """
    Mean squared error plus ``l2_reg * ||theta||**2``.
    """
    cfg = TrainConfig() if cfg is None else cfg
    model = _as_model(model)
    e, de_dy, cache = _residuals(model, theta, data, cfg)
    value = float(e @ e) / e.size
    g_theta, _ = model.backward(cache, 2.0 / e.size * e * de_dy)
    return _regularize(value, g_theta, _flat(theta), cfg.l2_reg)


#: Envelope size penalties ``mu`` and their derivatives.
MU_FUNCTIONS = {
    'identity': (lambda eps: eps, lambda eps: np.ones_like(eps)),
    'square': (lambda eps: eps ** 2, lambda eps: 2.0 * eps),
}


def _mu(name):
    try:
        return MU_FUNCTIONS[name]
    except KeyError:
        raise ConfigError("unknown envelope penalty mu {!r}; choose from {}"
                          .format(name, sorted(MU_FUNCTIONS))) from None


def _soft_violation(violations):
    """
    ``log(1 + sum exp(v))`` and its gradient with respect to ``v``.
    """
    z = np.concatenate([[0.0], violations])
    return logsumexp(z), softmax(z)[1:]


def envelope_loss_sym(env_model, psi, data, errors, cfg=None, mu='identity',
                      rho_psi=0.0, penalty_weight=1.0):
    """
    Loss of a symmetric envelope ``epsilon(x; psi)`` of the errors ``e_k``.

    .. math::

        \\rho\\|\\psi\\|^2 + \\frac{1}{N}\\sum_k \\mu(\\epsilon(x_k;\\psi))
            + \\frac{w}{\\gamma}\\log\\left(1 + \\sum_k
              e^{\\gamma(|e_k| - \\epsilon(x_k;\\psi))}\\right)

    with ``w = penalty_weight``. The errors are constants here, so ``|e_k|``
    needs no smoothing.

    Returns
    -------
    value : float
    grad : ndarray
        Gradient with respect to ``psi``.
    """
    cfg = TrainConfig() if cfg is None else cfg
    env_model = _as_model(env_model)
    errors = _check_errors(data, errors)
    mu_f, mu_d = _mu(mu)
    eps, cache = env_model.forward(psi, data.xs)
    n = eps.size
    lse, p = _soft_violation(cfg.gamma * (np.abs(errors) - eps))
    value = float(np.mean(mu_f(eps))) + penalty_weight * lse / cfg.gamma
    g_eps = mu_d(eps) / n - penalty_weight * p
    g_psi, _ = env_model.backward(cache, g_eps)
    return _regularize(value, g_psi, _flat(psi), rho_psi)


def envelope_loss_asym(env_u, psi_u, env_l, psi_l, data, errors, cfg=None,
                       mu='identity', rho_psi=0.0, penalty_weight=1.0,
                       coupling='joint'):
    """
    Loss of an upper envelope ``eps_u`` and a lower envelope ``eps_l``.

    The violations are ``e_k - eps_u(x_k)`` for the upper and
    ``-e_k - eps_l(x_k)`` for the lower bound. With ``coupling='joint'``
    all of them share one log-sum-exp term; with ``'separate'`` each
    envelope has its own and the two problems decouple exactly.

    Returns
    -------
    value : float
    grads : tuple of ndarray
        Gradients with respect to ``psi_u`` and ``psi_l``.
    """
    cfg = TrainConfig() if cfg is None else cfg
    if coupling not in ('joint', 'separate'):
        raise ConfigError("coupling must be 'joint' or 'separate', got {!r}"
                          .format(coupling))
    env_u, env_l = _as_model(env_u), _as_model(env_l)
    errors = _check_errors(data, errors)
    mu_f, mu_d = _mu(mu)
    eps_u, cache_u = env_u.forward(psi_u, data.xs)
    eps_l, cache_l = env_l.forward(psi_l, data.xs)
    n = errors.size
    gamma = cfg.gamma
    v_u = gamma * (errors - eps_u)
    v_l = gamma * (-errors - eps_l)
    if coupling == 'joint':
        lse, p = _soft_violation(np.concatenate([v_u, v_l]))
        p_u, p_l = p[:n], p[n:]
    else:
        lse_u, p_u = _soft_violation(v_u)
        lse_l, p_l = _soft_violation(v_l)
        lse = lse_u + lse_l
    value = (float(np.mean(mu_f(eps_u)) + np.mean(mu_f(eps_l)))
             + penalty_weight * lse / gamma)
    g_u, _ = env_u.backward(cache_u, mu_d(eps_u) / n - penalty_weight * p_u)
    g_l, _ = env_l.backward(cache_l, mu_d(eps_l) / n - penalty_weight * p_l)
    vec_u, vec_l = _flat(psi_u), _flat(psi_l)
    if rho_psi:
        value += rho_psi * float(vec_u @ vec_u + vec_l @ vec_l)
        g_u = g_u + 2.0 * rho_psi * vec_u
        g_l = g_l + 2.0 * rho_psi * vec_l
    return float(value), (g_u, g_l)
