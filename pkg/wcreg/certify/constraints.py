"""
Conservative surrogates of constraint sets ``{x : f(x) <= 0}``.

A surrogate ``f_hat`` is trained on the smoothed signs ``tanh(eta f)`` and
then shifted by the smallest value ``delta_f`` it takes where ``f > 0``.
The certified constraint

.. math::

    \\bar f(x) = \\hat f(x; \\theta^*) - \\Delta_f + \\epsilon_f

is positive wherever ``f`` is, so ``bar_f(x) <= 0`` implies ``f(x) <= 0``
whenever ``delta_f`` is the global minimum. ``delta_f`` comes from a DIRECT
search and the guarantee holds up to the tightness of that search.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from astropy import log

from ..models.box import Box
from ..models.networks import Model
from ..models.params import ParamVec
from ..optimize.direct import maximize
from ..regression.active import ActiveConfig, _resolve_model, fit_worst_case
from ..regression.sampling import grid_sample
from ..utils.exceptions import ConfigError, UnsupportedFamilyError
from ..utils.serialize import dump_json

__all__ = ['ConstraintCert', 'fit_sign_surrogate', 'compute_delta_f',
           'certified_constraint', 'certify_constraint', 'polyhedral_form',
           'hrep_text', 'conservativeness']

DEFAULT_SIGN_ETA = 10.0


def _sign(values):
    # sign(0) = -1, so the indicator (1 + sign) / 2 only takes 0 and 1
    return np.where(np.asarray(values, dtype=float) > 0.0, 1.0, -1.0)


@dataclass(eq=False)
class ConstraintCert:
    """
    Certified inner approximation ``{x : bar_f(x) <= 0}`` of a constraint set.

    ``x_hat`` is the point where the DIRECT search found ``delta_f``;
    ``audit`` holds that search.
    """

    model: Model
    theta_star: ParamVec
    delta_f: float
    box: Box
    epsilon_f: float = 1e-6
    sign_eta: float = DEFAULT_SIGN_ETA
    x_hat: Optional[np.ndarray] = None
    audit: dict = field(default_factory=dict)
    fit: Optional[dict] = None

    def __post_init__(self):
        if not self.epsilon_f > 0.0:
            raise ConfigError("epsilon_f must be positive, got {}".format(self.epsilon_f))
        if not self.sign_eta > 0.0:
            raise ConfigError("sign_eta must be positive, got {}".format(self.sign_eta))

    @property
    def family(self):
        return self.model.spec.family

    def __call__(self, x):
        return certified_constraint(self, x)

    def to_dict(self):
        return {'family': self.model.spec.to_dict(),
                'theta_star': self.theta_star.to_dict(),
                'delta_f': self.delta_f, 'epsilon_f': self.epsilon_f,
                'sign_eta': self.sign_eta, 'box': self.box.to_dict(),
                'x_hat': None if self.x_hat is None else list(self.x_hat),
                'guarantee': 'up to global-optimization tightness',
                'audit': self.audit, 'fit': self.fit}

    def to_json(self, path=None):
        return dump_json(self.to_dict(), path)


def fit_sign_surrogate(f, family, box, cfg=None, sign_eta=None):
    """
    Train a surrogate whose sign follows the sign of ``f``.

    Worst-case regression of ``tanh(eta f)`` by ``tanh(eta f_hat)``; the
    transformation only enters the training loss and the worst-point
    searches, and the returned model is the plain ``f_hat``.

    Parameters
    ----------
    f : callable
    family : `~wcreg.models.ModelSpec`, `~wcreg.models.Model` or callable
    box : `~wcreg.models.Box`
    cfg : `~wcreg.regression.ActiveConfig`, optional
        ``cfg.train.sign_eta`` is used when set.
    sign_eta : float, optional
        Overrides ``cfg.train.sign_eta``; 10 when neither is given.

    Returns
    -------
    `~wcreg.regression.FitReport`
        ``theta_star`` are the trained parameters; the worst-case errors
        are measured between the transformed signs.
    """
    cfg = ActiveConfig() if cfg is None else cfg
    if sign_eta is None:
        sign_eta = cfg.train.sign_eta or DEFAULT_SIGN_ETA
    cfg = replace(cfg, train=replace(cfg.train, sign_eta=float(sign_eta)))
    return fit_worst_case(f, family, box, cfg)


def compute_delta_f(f, model, theta_star, box, cfg=None, audits=None):
    """
    Smallest surrogate value on the set where ``f > 0``.

    ``delta_f = min_x (1 + sign f(x)) / 2 * f_hat(x)`` by DIRECT on the
    negated objective. Points with ``f(x) <= 0`` contribute 0, so
    ``delta_f <= 0`` as soon as one exists.

    Parameters
    ----------
    audits : dict, optional
        Receives the DIRECT result under ``'delta_f'``.
    """
    model = _resolve_model(model)
    box = box if isinstance(box, Box) else Box(*box)

    def objective(x):
        indicator = 0.5 * (1.0 + float(_sign(f(x))))
        return -indicator * model.predict(theta_star, x)

    result = maximize(objective, box, cfg)
    if audits is not None:
        audits['delta_f'] = result.to_dict()
    # + 0.0 turns -0.0 into 0.0
    delta_f = -float(result.value_star) + 0.0
    log.info("delta_f = {:.6g} at {} after {} evaluations".format(
        delta_f, np.array2string(result.x_star, precision=4), result.evals_used))
    return delta_f


def certified_constraint(cert, x):
    """
    ``bar_f(x) = f_hat(x; theta*) - delta_f + epsilon_f`` at a point or batch.
    """
    return cert.model.predict(cert.theta_star, x) - cert.delta_f + cert.epsilon_f


def certify_constraint(f, model, theta_star, box, cfg=None, epsilon_f=1e-6,
                       sign_eta=DEFAULT_SIGN_ETA, fit=None):
    """
    Compute ``delta_f`` and assemble the `ConstraintCert`.

    Parameters
    ----------
    cfg : `~wcreg.optimize.DirectConfig`, optional
    fit : `~wcreg.regression.FitReport`, optional
        Summarized into the certificate when given.
    """
    model = _resolve_model(model)
    box = box if isinstance(box, Box) else Box(*box)
    if not isinstance(theta_star, ParamVec):
        theta_star = model.param_vec(np.asarray(theta_star, dtype=float))
    audits = {}
    delta_f = compute_delta_f(f, model, theta_star, box, cfg, audits)
    summary = None
    if fit is not None:
        summary = {'wce': fit.wce, 'best_iter': fit.best_iter,
                   'stop_reason': fit.stop_reason, 'n_samples': len(fit.dataset_final)}
    return ConstraintCert(model=model, theta_star=theta_star, delta_f=delta_f, box=box,
                          epsilon_f=epsilon_f, sign_eta=sign_eta,
                          x_hat=np.asarray(audits['delta_f']['x_star'], dtype=float),
                          audit=audits['delta_f'], fit=summary)


def polyhedral_form(cert):
    """
    Explicit form of the certified set.

    For a max-affine surrogate ``max_i (A_i x - b_i)`` the set
    ``bar_f(x) <= 0`` is the polyhedron ``A x <= b + delta_f - epsilon_f``.

    Returns
    -------
    A, b_shifted : ndarray
        For max-affine surrogates.
    dict
        For input-convex networks: the convex constraint
        ``f_hat(x) <= level`` with ``level = delta_f - epsilon_f``.

    Raises
    ------
    `~wcreg.utils.exceptions.UnsupportedFamilyError`
        For any other family, including gated or saturated models.
    """
    spec = cert.model.spec
    level = cert.delta_f - cert.epsilon_f
    if spec.is_composite or spec.family not in ('max-affine', 'input-convex-nn'):
        raise UnsupportedFamilyError(
            "no explicit convex form for {!r} surrogates".format(cert.model.family))
    if spec.family == 'input-convex-nn':
        return {'family': spec.family, 'kind': 'convex-sublevel-set',
                'constraint': 'f_hat(x; theta_star) <= level', 'level': level,
                'model': spec.to_dict(), 'theta_star': cert.theta_star.to_dict()}
    blocks = cert.model.layout.unpack(cert.theta_star.values)
    A = np.array(blocks['A'], dtype=float)
    return A, np.asarray(blocks['b'], dtype=float) + level


def hrep_text(A, b):
    """
    Plain-text H-representation, one row ``a_1 ... a_n | b`` per halfspace.

    >>> print(hrep_text([[1.0, -2.0]], [0.5]))
    1.0 -2.0 | 0.5
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    return "\n".join(" ".join(repr(float(a)) for a in row) + " | " + repr(float(bi))
                     for row, bi in zip(A, b))


def conservativeness(cert, f, box=None, resolution=200):
    """
    Grid audit of a certificate.

    Returns
    -------
    dict
        ``false_infeasible_fraction`` is the share of points with
        ``f <= 0`` that the certificate declares infeasible; ``unsafe`` counts
        points with ``f > 0`` declared feasible (zero when ``delta_f`` is
        exact); ``sign_agreement`` compares the signs of ``f`` and ``f_hat``.
    """
    box = cert.box if box is None else box
    X = grid_sample(box, resolution)
    fv = np.array([float(f(x)) for x in X])
    f_hat = cert.model.predict(cert.theta_star, X)
    declared = certified_constraint(cert, X) <= 0.0
    feasible = fv <= 0.0
    n_feasible = int(feasible.sum())
    report = {'points': int(X.shape[0]), 'resolution': resolution,
              'feasible': n_feasible, 'declared_feasible': int(declared.sum()),
              'false_infeasible_fraction':
                  float(np.mean(~declared[feasible])) if n_feasible else 0.0,
              'unsafe': int(np.sum(declared & ~feasible)),
              'sign_agreement': float(np.mean(_sign(fv) == _sign(f_hat)))}
    if report['unsafe']:
        log.warning("{unsafe} grid points violate the certified constraint"
                    .format(**report))
    return report
