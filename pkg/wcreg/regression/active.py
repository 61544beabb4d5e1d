"""
Worst-case regression with active learning.

Each iteration trains the model on the current data set by multistart
L-BFGS on the smoothed maximum error, finds the input where the trained
model is worst with DIRECT, and adds that input to the data set. The
parameters with the smallest measured worst-case error are returned.
"""
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from astropy import log
from astropy.table import Table

from ..models.box import Box
from ..models.networks import Model, build_model
from ..models.params import ParamVec
from ..models.specs import ModelSpec
from ..optimize.direct import DirectConfig, maximize
from ..optimize.lbfgs import LbfgsConfig, multistart_minimize
from ..utils.exceptions import (ActiveLearningError, ConfigError, DatasetError,
                                ModelEvaluationError, OptimizationError)
from ..utils.serialize import dump_json, write_table
from .loss import Dataset, TrainConfig, mse_loss, sign_transform, smooth_linf_loss
from .sampling import SAMPLERS, draw_initial

__all__ = ['ActiveConfig', 'FitReport', 'fit_worst_case', 'fit_passive',
           'abs_error_objective', 'LOSSES']

LOSSES = {'linf': smooth_linf_loss, 'mse': mse_loss}


@dataclass
class ActiveConfig:
    """
    Settings of `fit_worst_case`.

    Parameters
    ----------
    n_initial : int
        Size ``N0`` of the initial design.
    max_steps : int
        Maximum number ``M`` of acquired points; ``0`` still trains and
        certifies once.
    err_threshold : float
        Stop as soon as a measured worst-case error is at most this value.
    sampler : {'lhs', 'grid', 'uniform'}
    train : `~wcreg.regression.TrainConfig`
    lbfgs : `~wcreg.optimize.LbfgsConfig`
    direct : `~wcreg.optimize.DirectConfig`
    seed : int
    loss : {'linf', 'mse'}
    recertify : bool
        Run one more DIRECT search on the selected parameters.
    """

    n_initial: int = 20
    max_steps: int = 30
    err_threshold: float = 0.0
    sampler: str = 'lhs'
    train: TrainConfig = field(default_factory=TrainConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    direct: DirectConfig = field(default_factory=DirectConfig)
    seed: int = 0
    loss: str = 'linf'
    recertify: bool = True

    def __post_init__(self):
        if self.n_initial < 1:
            raise ConfigError("n_initial must be at least 1")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be nonnegative")
        if self.err_threshold < 0.0:
            raise ConfigError("err_threshold must be nonnegative")
        if self.sampler not in SAMPLERS:
            raise ConfigError("unknown sampler {!r}; choose from {}"
                              .format(self.sampler, SAMPLERS))
        if self.loss not in LOSSES:
            raise ConfigError("unknown loss {!r}; choose from {}"
                              .format(self.loss, sorted(LOSSES)))

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items()
             if k not in ('train', 'lbfgs', 'direct')}
        d.update(train=self.train.to_dict(), lbfgs=self.lbfgs.to_dict(),
                 direct=self.direct.to_dict())
        return d


@dataclass(eq=False)
class FitReport:
    """
    Outcome of an active-learning (or passive) fit.

    ``error_history[i]`` is the worst-case error ``e_N`` measured by DIRECT
    after training in iteration ``i``; ``wce`` is its minimum, reached first
    at ``best_iter``, and ``theta_star`` the parameters trained in that
    iteration. ``wce_recertified`` is the value of an independent DIRECT run
    on ``theta_star`` when one was made.
    """

    model: Model
    theta_star: ParamVec
    wce: float
    best_iter: int
    error_history: list
    acquired_points: list
    dataset_final: Dataset
    stop_reason: str
    iterations: list = field(default_factory=list)
    wce_recertified: Optional[float] = None
    certification: Optional[dict] = None
    config: Optional[dict] = None

    @property
    def wce_certified(self):
        """The larger of the two worst-case error measurements."""
        if self.wce_recertified is None:
            return self.wce
        return max(self.wce, self.wce_recertified)

    def predict(self, x):
        return self.model.predict(self.theta_star, x)

    def best_so_far(self):
        return np.minimum.accumulate(self.error_history)

    def history_table(self):
        """
        Per-iteration record as an `~astropy.table.Table`.

        Columns ``iteration``, ``n_samples``, ``e_N``, ``wall_seconds`` and
        ``status``.
        """
        names = ('iteration', 'n_samples', 'e_N', 'wall_seconds', 'status')
        rows = [tuple(it[n] for n in names) for it in self.iterations]
        return Table(rows=rows or None, names=names,
                     dtype=(int, int, float, float, str))

    def write_history(self, path):
        return write_table(self.history_table(), path)

    def to_dict(self, timing=True):
        doc = {'family': self.model.spec.family,
               'model': self.model.spec.to_dict(),
               'theta_star': self.theta_star.to_dict(),
               'wce': self.wce,
               'wce_recertified': self.wce_recertified,
               'best_iter': self.best_iter,
               'error_history': list(self.error_history),
               'acquired_points': [[list(map(float, x)), float(y)]
                                   for x, y in self.acquired_points],
               'dataset_final': self.dataset_final.to_dict(),
               'stop_reason': self.stop_reason,
               'iterations': [{k: v for k, v in it.items() if k != 'wall_seconds'}
                              for it in self.iterations],
               'certification': self.certification,
               'config': self.config}
        if timing:
            doc['timing'] = {'wall_seconds': [it['wall_seconds']
                                              for it in self.iterations]}
        return doc

    def to_json(self, path=None, timing=True):
        return dump_json(self.to_dict(timing=timing), path)


def _resolve_model(model_factory):
    if isinstance(model_factory, Model):
        return model_factory
    if isinstance(model_factory, ModelSpec):
        return build_model(model_factory)
    if callable(model_factory):
        return _resolve_model(model_factory())
    raise TypeError("model_factory must be a Model, a ModelSpec or a callable "
                    "returning one, got {!r}".format(type(model_factory)))


def _target_values(target_f, X):
    ys = np.array([float(target_f(x)) for x in X])
    if not np.all(np.isfinite(ys)):
        raise DatasetError("target function is not finite at sample(s) {}"
                           .format(np.flatnonzero(~np.isfinite(ys)).tolist()))
    return ys


def abs_error_objective(target_f, model, theta, sign_eta=None):
    """
    ``x -> |f(x) - f_hat(x; theta)|`` for the global optimizer.

    With ``sign_eta`` both values pass through `~wcreg.regression.sign_transform`
    first.
    """

    def objective(x):
        y, y_hat = float(target_f(x)), model.predict(theta, x)
        if sign_eta is not None:
            y, y_hat = sign_transform(y, sign_eta), sign_transform(y_hat, sign_eta)
        return abs(y - y_hat)

    return objective


def _train(model, data, cfg, lbfgs_cfg, initial):
    loss = LOSSES[cfg.loss]

    def objective(theta):
        return loss(model, theta, data, cfg.train)

    def sampler(seq):
        return model.init_params(seq).values

    result = multistart_minimize(objective, sampler, lbfgs_cfg,
                                 initial=None if initial is None else initial.values)
    return model.param_vec(result.theta), result


def fit_worst_case(target_f, model_factory, box, cfg=None, data=None):
    """
    Fit a model minimizing the worst-case error over ``box``.

    Parameters
    ----------
    target_f : callable
        Deterministic ``x -> float`` that is finite on ``box``; called
        concurrently when ``cfg.direct.threads > 1``.
    model_factory : `~wcreg.models.Model`, `~wcreg.models.ModelSpec` or callable
    box : `~wcreg.models.Box`
    cfg : `ActiveConfig`, optional
    data : `~wcreg.regression.Dataset`, optional
        Initial data set used instead of drawing ``cfg.n_initial`` points.

    Returns
    -------
    `FitReport`

    Raises
    ------
    `~wcreg.utils.exceptions.ActiveLearningError`
        If training failed in every iteration.
    """
    cfg = ActiveConfig() if cfg is None else cfg
    box = box if isinstance(box, Box) else Box(*box)
    model = _resolve_model(model_factory)
    design_seq, init_seq, train_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    if data is None:
        X0 = draw_initial(cfg.sampler, box, cfg.n_initial, seed=design_seq)
        data = Dataset(X0, _target_values(target_f, X0), box=box)
    n_initial = len(data)
    train_seeds = train_seq.generate_state(max(cfg.max_steps, 1))

    theta = model.init_params(init_seq)
    thetas, errors, iterations, acquired = [], [], [], []
    n_failed = 0
    stop_reason = 'budget'
    n_iter = max(cfg.max_steps, 1)
    for i in range(n_iter):
        start = time.perf_counter()
        lbfgs_cfg = replace(cfg.lbfgs, seed=int(train_seeds[i]))
        warm = theta if i > 0 else None
        try:
            theta, result = _train(model, data, cfg, lbfgs_cfg, warm)
            status = result.status
        except (OptimizationError, ModelEvaluationError) as exc:
            n_failed += 1
            status = 'failed'
            log.warning("training failed in iteration {}; keeping the previous "
                        "parameters: {}".format(i, exc))
        objective = abs_error_objective(target_f, model, theta, cfg.train.sign_eta)
        search = maximize(objective, box, cfg.direct)
        x_new = search.x_star
        e_n = float(search.value_star)
        y_new = float(target_f(x_new))
        thetas.append(theta)
        errors.append(e_n)
        acquired.append((x_new, y_new))
        iterations.append({'iteration': i, 'n_samples': len(data), 'e_N': e_n,
                           'status': status, 'evals_used': search.evals_used,
                           'wall_seconds': time.perf_counter() - start})
        log.info("iteration {}: N = {}, worst-case error {:.6g} at {}"
                 .format(i, len(data), e_n, np.array2string(x_new, precision=4)))
        if np.isfinite(y_new):
            data = data.appended(x_new, y_new)
        if e_n <= cfg.err_threshold:
            stop_reason = 'threshold'
            break

    if n_failed == len(errors):
        raise ActiveLearningError("training failed in all {} iterations"
                                  .format(n_failed))
    best = int(np.argmin(errors))
    report = FitReport(model=model, theta_star=thetas[best], wce=errors[best],
                       best_iter=best, error_history=errors,
                       acquired_points=acquired, dataset_final=data,
                       stop_reason=stop_reason, iterations=iterations,
                       config=cfg.to_dict())
    report.config['n_initial_used'] = n_initial
    if cfg.recertify:
        _recertify(report, target_f, box, cfg)
    log.info("selected iteration {} with worst-case error {:.6g} ({})"
             .format(best, report.wce, stop_reason))
    return report


def _recertify(report, target_f, box, cfg):
    check = maximize(abs_error_objective(target_f, report.model, report.theta_star,
                                         cfg.train.sign_eta),
                     box, cfg.direct)
    report.wce_recertified = float(check.value_star)
    report.certification = check.to_dict()
    if report.wce_recertified > report.wce:
        log.info("re-certification found a larger error: {:.6g} > {:.6g}"
                 .format(report.wce_recertified, report.wce))


def fit_passive(target_f, model_factory, box, n_samples, cfg=None, loss='mse',
                sampler='uniform'):
    """
    Train once on a passive sample set and certify the result.

    The comparison baseline of `fit_worst_case`: no point is acquired, and
    the worst-case error of the trained model is measured by DIRECT.

    Parameters
    ----------
    n_samples : int
        Size of the sample set.
    loss : {'mse', 'linf'}
    sampler : {'uniform', 'lhs', 'grid'}
    """
    cfg = ActiveConfig() if cfg is None else cfg
    cfg = replace(cfg, n_initial=int(n_samples), max_steps=0, loss=loss,
                  sampler=sampler)
    box = box if isinstance(box, Box) else Box(*box)
    model = _resolve_model(model_factory)
    design_seq, _, train_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    X = draw_initial(sampler, box, cfg.n_initial, seed=design_seq)
    data = Dataset(X, _target_values(target_f, X), box=box)
    start = time.perf_counter()
    lbfgs_cfg = replace(cfg.lbfgs, seed=int(train_seq.generate_state(1)[0]))
    theta, result = _train(model, data, cfg, lbfgs_cfg, None)
    objective = abs_error_objective(target_f, model, theta, cfg.train.sign_eta)
    search = maximize(objective, box, cfg.direct)
    wce = float(search.value_star)
    log.info("passive fit on {} samples: worst-case error {:.6g}".format(len(data), wce))
    return FitReport(model=model, theta_star=theta, wce=wce, best_iter=0,
                     error_history=[wce], acquired_points=[], dataset_final=data,
                     stop_reason='passive',
                     iterations=[{'iteration': 0, 'n_samples': len(data), 'e_N': wce,
                                  'status': result.status,
                                  'evals_used': search.evals_used,
                                  'wall_seconds': time.perf_counter() - start}],
                     certification=search.to_dict(), config=cfg.to_dict())
