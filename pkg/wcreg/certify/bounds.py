"""
Certified error bounds for a trained surrogate.

Four forms are supported:

``const-sym``
    ``|f - f_hat| <= wce`` with the worst-case error ``wce``.
``const-asym``
    ``-e_min <= f - f_hat <= e_max`` with two constants.
``input-sym``
    ``|f - f_hat| <= min(wce, kappa * eps(x))`` for a trained envelope.
``input-asym``
    ``-min(wce, kappa_l * eps_l(x)) <= f - f_hat <= min(wce, kappa_u * eps_u(x))``.

Every constant is the value of a DIRECT search. The searches are kept in
the report so that each certificate can be audited; containment holds up to
the accuracy of those searches.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from astropy import log

from ..models.box import Box
from ..models.networks import Model, build_model
from ..models.params import ParamVec
from ..models.specs import ModelSpec
from ..optimize.direct import DirectConfig, maximize
from ..optimize.lbfgs import LbfgsConfig, multistart_minimize
from ..regression.loss import (Dataset, TrainConfig, envelope_loss_asym,
                               envelope_loss_sym)
from ..regression.sampling import grid_sample
from ..utils.exceptions import BoundsError, ConfigError
from ..utils.serialize import dump_json

__all__ = ['FORMS', 'EnvelopeConfig', 'BoundsReport', 'constant_asym_bounds',
           'fit_envelope_sym', 'fit_envelope_asym', 'calibrate_kappa_sym',
           'calibrate_kappa_asym', 'bound_at', 'symmetrize', 'certify']

FORMS = ('const-sym', 'const-asym', 'input-sym', 'input-asym')


@dataclass
class EnvelopeConfig:
    """
    Settings of envelope training and bound certification.

    Parameters
    ----------
    widths, activations : tuple
        Envelope network used when no envelope model is passed.
    mu : {'identity', 'square'}
        Size penalty on the envelope values.
    rho_psi : float
        Coefficient of ``||psi||**2``.
    gamma : float, optional
        Smoothing of the violation term; defaults to ``wcreg.conf.gamma``.
    penalty_weight : float, optional
        Weight of the violation term; defaults to ``gamma``.
    normalize : bool
        Train on ``e / max|e|``. The scale cancels in the ``kappa``
        calibration.
    coupling : {'joint', 'separate'}
        Violation terms of the asymmetric loss.
    lbfgs, direct :
        Training and global-search settings.
    validate_resolution : int, optional
        Points per dimension of a containment audit grid run by `certify`.
    """

    widths: tuple = (20, 10)
    activations: tuple = ('relu', 'relu')
    mu: str = 'identity'
    rho_psi: float = 1e-3
    gamma: Optional[float] = None
    penalty_weight: Optional[float] = None
    normalize: bool = True
    coupling: str = 'joint'
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    direct: DirectConfig = field(default_factory=DirectConfig)
    validate_resolution: Optional[int] = None

    def __post_init__(self):
        from .. import conf
        if self.gamma is None:
            self.gamma = conf.gamma
        if self.penalty_weight is None:
            self.penalty_weight = self.gamma
        if self.rho_psi < 0.0:
            raise ConfigError("rho_psi must be nonnegative")
        if self.penalty_weight <= 0.0:
            raise ConfigError("penalty_weight must be positive")
        if self.validate_resolution is not None and self.validate_resolution < 2:
            raise ConfigError("validate_resolution needs at least 2 points per dimension")
        # validates gamma
        self.train_config()

    def train_config(self):
        return TrainConfig(gamma=self.gamma, l2_reg=0.0)

    def envelope_spec(self, n_inputs):
        return ModelSpec('envelope-nn', n_inputs=n_inputs, widths=tuple(self.widths),
                         activations=tuple(self.activations))

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k not in ('lbfgs', 'direct')}
        d.update(widths=list(self.widths), activations=list(self.activations),
                 lbfgs=self.lbfgs.to_dict(), direct=self.direct.to_dict())
        return d


@dataclass(eq=False)
class BoundsReport:
    """
    Certified bounds of ``f - f_hat(.; theta_star)`` on ``box``.

    ``const_lower`` and ``const_upper`` are the magnitudes ``e_min`` and
    ``e_max`` (both equal to ``wce`` for the symmetric forms). Input-dependent
    forms carry their envelopes in ``env_u``/``psi_u`` (and
    ``env_l``/``psi_l``), with the scalings ``kappa_u``/``kappa_l``; the
    symmetric form uses the same envelope for both sides.
    """

    form: str
    wce: float
    const_lower: float
    const_upper: float
    box: Box
    model: Optional[Model] = None
    theta_star: Optional[ParamVec] = None
    env_u: Optional[Model] = None
    psi_u: Optional[ParamVec] = None
    kappa_u: Optional[float] = None
    env_l: Optional[Model] = None
    psi_l: Optional[ParamVec] = None
    kappa_l: Optional[float] = None
    error_scale: float = 1.0
    audits: dict = field(default_factory=dict)
    validation: Optional[dict] = None

    @property
    def psi(self):
        return self.psi_u

    @property
    def kappa(self):
        return self.kappa_u

    @property
    def evals_used(self):
        return sum(a['evals_used'] for a in self.audits.values())

    def to_dict(self):
        doc = {'form': self.form, 'wce': self.wce, 'const_lower': self.const_lower,
               'const_upper': self.const_upper, 'box': self.box.to_dict(),
               'error_scale': self.error_scale, 'audits': self.audits,
               'evals_used': self.evals_used, 'validation': self.validation}
        if self.form.startswith('input'):
            doc['kappa_u'], doc['kappa_l'] = self.kappa_u, self.kappa_l
            doc['envelope_u'] = {'model': self.env_u.spec.to_dict(),
                                 'psi': self.psi_u.to_dict()}
            if self.form == 'input-asym':
                doc['envelope_l'] = {'model': self.env_l.spec.to_dict(),
                                     'psi': self.psi_l.to_dict()}
        return doc

    @classmethod
    def from_dict(cls, doc):
        """
        Rebuild the bounds from `to_dict` output.

        The surrogate itself is not part of the document, so ``model`` and
        ``theta_star`` stay `None`; `bound_at` does not need them.
        """
        report = cls(form=doc['form'], wce=float(doc['wce']),
                     const_lower=float(doc['const_lower']),
                     const_upper=float(doc['const_upper']), box=Box.from_dict(doc['box']),
                     error_scale=float(doc.get('error_scale', 1.0)),
                     audits=doc.get('audits') or {}, validation=doc.get('validation'))
        if report.form.startswith('input'):
            upper = doc['envelope_u']
            report.env_u = build_model(ModelSpec.from_dict(upper['model']))
            report.psi_u = ParamVec.from_dict(upper['psi'])
            report.kappa_u = float(doc['kappa_u'])
            if report.form == 'input-asym':
                lower = doc['envelope_l']
                report.env_l = build_model(ModelSpec.from_dict(lower['model']))
                report.psi_l = ParamVec.from_dict(lower['psi'])
                report.kappa_l = float(doc['kappa_l'])
            else:
                report.env_l, report.psi_l = report.env_u, report.psi_u
                report.kappa_l = report.kappa_u
        return report

    def to_json(self, path=None):
        return dump_json(self.to_dict(), path)


def _as_model(model):
    return model if isinstance(model, Model) else build_model(model)


def _as_box(box):
    return box if isinstance(box, Box) else Box(*box)


def _signed_error(f, model, theta):
    def err(x):
        return float(f(x)) - model.predict(theta, x)
    return err


def _audit(name, result, audits):
    if audits is not None:
        audits[name] = result.to_dict()
    log.info("{}: {:.6g} after {} evaluations".format(name, result.value_star,
                                                      result.evals_used))
    return result


def _max_abs_error(f, model, theta_star, box, direct, audits=None):
    err = _signed_error(f, model, theta_star)
    result = maximize(lambda x: abs(err(x)), box, direct)
    return float(_audit('wce', result, audits).value_star)


def constant_asym_bounds(f, model, theta_star, box, cfg=None, audits=None):
    """
    Constant lower and upper error magnitudes.

    .. math::

        \\bar e_{min} = \\max_x \\max(\\hat f(x) - f(x), 0), \\qquad
        \\bar e_{max} = \\max_x \\max(f(x) - \\hat f(x), 0)

    Parameters
    ----------
    f : callable
    model : `~wcreg.models.Model` or `~wcreg.models.ModelSpec`
    theta_star : `~wcreg.models.ParamVec` or array_like
    box : `~wcreg.models.Box`
    cfg : `~wcreg.optimize.DirectConfig`, optional
    audits : dict, optional
        Receives the two DIRECT results under ``'e_min'`` and ``'e_max'``.

    Returns
    -------
    e_min, e_max : float
        Both nonnegative.
    """
    model, box = _as_model(model), _as_box(box)
    err = _signed_error(f, model, theta_star)
    below = maximize(lambda x: max(-err(x), 0.0), box, cfg)
    above = maximize(lambda x: max(err(x), 0.0), box, cfg)
    e_min = max(float(_audit('e_min', below, audits).value_star), 0.0)
    e_max = max(float(_audit('e_max', above, audits).value_star), 0.0)
    return e_min, e_max


def _training_errors(errors, cfg):
    errors = np.asarray(errors, dtype=float).reshape(-1)
    scale = float(np.max(np.abs(errors))) if errors.size else 0.0
    if cfg.normalize and scale > 0.0:
        return errors / scale, scale
    return errors, 1.0


def _envelope_model(env, data, cfg):
    if env is None:
        env = cfg.envelope_spec(data.n_inputs)
    env = _as_model(env)
    if env.spec.family != 'envelope-nn':
        raise ConfigError("envelopes must be strictly positive 'envelope-nn' "
                          "models, got {!r}".format(env.spec.family))
    return env


def fit_envelope_sym(data, errors, env=None, cfg=None):
    """
    Train a symmetric envelope of the errors ``e_k`` at ``data.xs``.

    Multistart L-BFGS on `~wcreg.regression.envelope_loss_sym` with the
    violation term weighted by ``cfg.penalty_weight``.

    Returns
    -------
    psi_star : `~wcreg.models.ParamVec`
    """
    cfg = EnvelopeConfig() if cfg is None else cfg
    env = _envelope_model(env, data, cfg)
    e, _ = _training_errors(errors, cfg)
    train = cfg.train_config()

    def objective(psi):
        return envelope_loss_sym(env, psi, data, e, train, mu=cfg.mu,
                                 rho_psi=cfg.rho_psi, penalty_weight=cfg.penalty_weight)

    result = multistart_minimize(objective, lambda seq: env.init_params(seq).values,
                                 cfg.lbfgs)
    log.info("symmetric envelope trained: loss {:.6g} ({})".format(result.value,
                                                                  result.status))
    return env.param_vec(result.theta)


def fit_envelope_asym(data, errors, env_u=None, env_l=None, cfg=None):
    """
    Train upper and lower envelopes of the signed errors ``e_k``.

    Returns
    -------
    psi_u_star, psi_l_star : `~wcreg.models.ParamVec`
    """
    cfg = EnvelopeConfig() if cfg is None else cfg
    env_u = _envelope_model(env_u, data, cfg)
    env_l = _envelope_model(env_l if env_l is not None else env_u.spec, data, cfg)
    e, _ = _training_errors(errors, cfg)
    train = cfg.train_config()
    n_u = env_u.layout.size

    def objective(psi):
        value, (g_u, g_l) = envelope_loss_asym(
            env_u, psi[:n_u], env_l, psi[n_u:], data, e, train, mu=cfg.mu,
            rho_psi=cfg.rho_psi, penalty_weight=cfg.penalty_weight,
            coupling=cfg.coupling)
        return value, np.concatenate([g_u, g_l])

    def sampler(seq):
        seq_u, seq_l = seq.spawn(2)
        return np.concatenate([env_u.init_params(seq_u).values,
                               env_l.init_params(seq_l).values])

    result = multistart_minimize(objective, sampler, cfg.lbfgs)
    log.info("asymmetric envelopes trained: loss {:.6g} ({})".format(result.value,
                                                                    result.status))
    return env_u.param_vec(result.theta[:n_u]), env_l.param_vec(result.theta[n_u:])


def calibrate_kappa_sym(f, model, theta_star, env, psi_star, box, cfg=None,
                        audits=None):
    """
    Smallest ``kappa`` with ``|f - f_hat| <= kappa * eps`` on the box.

    ``kappa* = max_x |f(x) - f_hat(x)| / eps(x; psi*)`` by DIRECT; the
    envelope is bounded below by its structural floor, so no guard is
    added to the denominator.
    """
    model, env, box = _as_model(model), _as_model(env), _as_box(box)
    err = _signed_error(f, model, theta_star)
    result = maximize(lambda x: abs(err(x)) / env.predict(psi_star, x), box, cfg)
    return max(float(_audit('kappa', result, audits).value_star), 0.0)


def calibrate_kappa_asym(f, model, theta_star, env_u, psi_u, env_l, psi_l, box,
                         cfg=None, audits=None):
    """
    Scalings of the upper and lower envelopes.

    ``kappa_u`` bounds ``max(f - f_hat, 0) / eps_u`` and ``kappa_l`` bounds
    ``max(f_hat - f, 0) / eps_l`` over the box.
    """
    model, box = _as_model(model), _as_box(box)
    env_u, env_l = _as_model(env_u), _as_model(env_l)
    err = _signed_error(f, model, theta_star)
    upper = maximize(lambda x: max(err(x), 0.0) / env_u.predict(psi_u, x), box, cfg)
    lower = maximize(lambda x: max(-err(x), 0.0) / env_l.predict(psi_l, x), box, cfg)
    kappa_u = max(float(_audit('kappa_u', upper, audits).value_star), 0.0)
    kappa_l = max(float(_audit('kappa_l', lower, audits).value_star), 0.0)
    return kappa_u, kappa_l


def bound_at(report, x):
    """
    Lower and upper error magnitudes at ``x``.

    The certified interval of ``f(x)`` is ``[f_hat(x) - lower, f_hat(x) + upper]``.

    Parameters
    ----------
    report : `BoundsReport`
    x : array_like
        A point or an ``(N, n)`` batch inside ``report.box``.

    Returns
    -------
    lower, upper : float or ndarray

    Raises
    ------
    `~wcreg.utils.exceptions.BoundsError`
        If a point lies outside the box the bounds were certified on.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if not report.box.contains(X):
        raise BoundsError("bounds are only certified inside {}".format(report.box))
    n = X.shape[0]
    if report.form == 'const-sym':
        lower = upper = np.full(n, report.wce)
    elif report.form == 'const-asym':
        lower, upper = np.full(n, report.const_lower), np.full(n, report.const_upper)
    elif report.form == 'input-sym':
        lower = upper = np.minimum(report.wce,
                                   report.kappa_u * report.env_u.predict(report.psi_u, X))
    else:
        upper = np.minimum(report.wce, report.kappa_u * report.env_u.predict(report.psi_u, X))
        lower = np.minimum(report.wce, report.kappa_l * report.env_l.predict(report.psi_l, X))
    if single:
        return float(lower[0]), float(upper[0])
    return lower, upper


def symmetrize(model, theta_star, report):
    """
    Centered predictor and symmetric bound from asymmetric bounds.

    ``f_s(x) = f_hat(x) + (upper(x) - lower(x)) / 2`` and
    ``e_s(x) = (upper(x) + lower(x)) / 2`` describe the same interval
    ``[f_hat - lower, f_hat + upper]``.

    Returns
    -------
    f_s, e_s : callable
    """
    if report.form not in ('input-asym', 'const-asym'):
        raise BoundsError("symmetrize needs asymmetric bounds, got form {!r}"
                          .format(report.form))
    model = _as_model(model)

    def f_s(x):
        lower, upper = bound_at(report, x)
        return model.predict(theta_star, x) + 0.5 * (np.asarray(upper) - lower)

    def e_s(x):
        lower, upper = bound_at(report, x)
        return 0.5 * (np.asarray(upper) + lower)

    return f_s, e_s


def _validate(f, report, resolution):
    X = grid_sample(report.box, resolution)
    e = np.array([float(f(x)) for x in X]) - report.model.predict(report.theta_star, X)
    lower, upper = bound_at(report, X)
    violation = np.maximum(e - upper, -e - lower)
    return {'points': int(X.shape[0]), 'resolution': int(resolution),
            'max_violation': float(max(np.max(violation), 0.0)),
            'fraction_inside': float(np.mean(violation <= 0.0))}


def certify(f, model, theta_star, box, form='input-asym', data=None, errors=None,
            cfg=None, wce=None):
    """
    Certify error bounds of the given form.

    Parameters
    ----------
    f : callable
        Target function.
    model : `~wcreg.models.Model` or `~wcreg.models.ModelSpec`
    theta_star : `~wcreg.models.ParamVec`
    box : `~wcreg.models.Box`
    form : {'const-sym', 'const-asym', 'input-sym', 'input-asym'}
    data : `~wcreg.regression.Dataset`, optional
        Samples the envelopes are trained on, typically the final data set of
        an active-learning run; required for the input-dependent forms.
    errors : array_like, optional
        ``f - f_hat`` at ``data.xs``; recomputed from ``data.ys`` by default.
    cfg : `EnvelopeConfig`, optional
    wce : float, optional
        Known worst-case error; a DIRECT search computes it otherwise.

    Returns
    -------
    `BoundsReport`
    """
    if form not in FORMS:
        raise ConfigError("unknown bound form {!r}; choose from {}".format(form, FORMS))
    cfg = EnvelopeConfig() if cfg is None else cfg
    model, box = _as_model(model), _as_box(box)
    audits = {}
    report = BoundsReport(form=form, wce=np.nan, const_lower=np.nan, const_upper=np.nan,
                          box=box, model=model, theta_star=theta_star, audits=audits)
    if form == 'const-asym':
        e_min, e_max = constant_asym_bounds(f, model, theta_star, box, cfg.direct, audits)
        report.wce = max(e_min, e_max) if wce is None else max(wce, e_min, e_max)
        report.const_lower, report.const_upper = e_min, e_max
    else:
        if wce is None:
            wce = _max_abs_error(f, model, theta_star, box, cfg.direct, audits)
        report.wce = report.const_lower = report.const_upper = float(wce)

    if form.startswith('input'):
        if data is None:
            raise ConfigError("input-dependent bounds need the training data set")
        if not isinstance(data, Dataset):
            data = Dataset(*data)
        if errors is None:
            errors = data.ys - model.predict(theta_star, data.xs)
        _, report.error_scale = _training_errors(errors, cfg)
        if form == 'input-sym':
            env = _envelope_model(None, data, cfg)
            report.env_u = report.env_l = env
            report.psi_u = report.psi_l = fit_envelope_sym(data, errors, env, cfg)
            kappa = calibrate_kappa_sym(f, model, theta_star, env, report.psi_u, box,
                                        cfg.direct, audits)
            report.kappa_u = report.kappa_l = kappa
        else:
            env = _envelope_model(None, data, cfg)
            report.env_u, report.env_l = env, env
            report.psi_u, report.psi_l = fit_envelope_asym(data, errors, env, env, cfg)
            report.kappa_u, report.kappa_l = calibrate_kappa_asym(
                f, model, theta_star, env, report.psi_u, env, report.psi_l, box,
                cfg.direct, audits)

    if cfg.validate_resolution:
        report.validation = _validate(f, report, cfg.validate_resolution)
        log.info("containment audit on {points} grid points: largest violation "
                 "{max_violation:.3g}".format(**report.validation))
    return report
