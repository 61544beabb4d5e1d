"""
Limited-memory BFGS with a strong-Wolfe line search and deterministic
multistart.

Objectives are callables ``theta -> (value, gradient)`` on flat float
vectors.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from astropy import log

from ..utils.exceptions import ConfigError, OptimizationError, WcregError
from ..utils.parallel import map_ordered

__all__ = ['LbfgsConfig', 'LbfgsResult', 'LineSearchStep', 'minimize',
           'multistart_minimize', 'line_search_wolfe', 'two_loop_direction']

CONVERGED = 'converged'
MAX_ITERS = 'max_iters'
LINE_SEARCH_FAILED = 'line_search_failed'


@dataclass
class LbfgsConfig:
    """
    Settings of `minimize` and `multistart_minimize`.

    ``max_iters`` and ``n_starts`` default to ``wcreg.conf.lbfgs_max_iters``
    and ``wcreg.conf.lbfgs_starts``. ``ftol`` stops on a relative decrease
    below it; 0 disables the test.
    """

    memory: int = 10
    max_iters: Optional[int] = None
    grad_tol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 30
    n_starts: Optional[int] = None
    seed: int = 0
    ftol: float = 0.0

    def __post_init__(self):
        from .. import conf
        if self.max_iters is None:
            self.max_iters = conf.lbfgs_max_iters
        if self.n_starts is None:
            self.n_starts = conf.lbfgs_starts
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ConfigError("Wolfe constants must satisfy 0 < c1 < c2 < 1, got "
                              "c1={}, c2={}".format(self.c1, self.c2))
        if self.memory < 1:
            raise ConfigError("L-BFGS memory must be >= 1")
        if self.max_iters < 0 or self.max_line_search < 1:
            raise ConfigError("iteration limits must be positive")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be >= 1")
        if self.grad_tol < 0.0 or self.ftol < 0.0:
            raise ConfigError("tolerances must be nonnegative")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class LbfgsResult:
    """
    Outcome of one L-BFGS run.

    ``history`` holds the objective value of every accepted iterate,
    starting with the initial point. ``start`` is the multistart index of
    the run and ``starts`` summarizes all runs of a multistart as
    ``(index, value or None, status or error message)``.
    """

    theta: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    status: str
    n_evals: int
    history: list = field(default_factory=list)
    start: int = 0
    starts: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.theta, self.value, self.iterations, self.status))

    @property
    def converged(self):
        return self.status == CONVERGED


@dataclass
class LineSearchStep:
    alpha: float
    theta: np.ndarray
    value: float
    grad: np.ndarray
    n_evals: int


class _Counted:
    """Objective wrapper counting calls and mapping failures to +inf."""

    def __init__(self, objective):
        self.objective = objective
        self.n_evals = 0

    def __call__(self, theta):
        self.n_evals += 1
        try:
            value, grad = self.objective(theta)
        except ArithmeticError as exc:
            log.debug("objective failed during line search: {}".format(exc))
            return np.inf, None
        value = float(value)
        grad = np.asarray(grad, dtype=float)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return np.inf, None
        return value, grad


def two_loop_direction(grad, pairs):
    """
    L-BFGS search direction ``-H grad`` from stored ``(s, y, 1/yᵀs)`` pairs.

    The initial inverse Hessian is ``sᵀy / yᵀy`` times the identity for the
    newest pair, and the identity when no pair is stored.
    """
    q = np.array(grad, dtype=float)
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _interpolate(lo, hi, f_lo, f_hi, d_lo, d_hi):
    """Safeguarded cubic (or quadratic) minimizer inside ``(lo, hi)``."""
    a, b = min(lo, hi), max(lo, hi)
    span = b - a
    trial = None
    if d_hi is not None and np.isfinite(f_hi):
        d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (lo - hi)
        rad = d1 * d1 - d_lo * d_hi
        if rad >= 0.0:
            d2 = np.copysign(np.sqrt(rad), hi - lo)
            denom = d_hi - d_lo + 2.0 * d2
            if denom != 0.0:
                trial = hi - (hi - lo) * (d_hi + d2 - d1) / denom
    elif np.isfinite(f_hi):
        denom = 2.0 * (f_hi - f_lo - d_lo * (hi - lo))
        if denom > 0.0:
            trial = lo - d_lo * (hi - lo) ** 2 / denom
    if trial is None or not np.isfinite(trial) or not a + 0.1 * span <= trial <= b - 0.1 * span:
        trial = 0.5 * (lo + hi)
    return trial


def line_search_wolfe(objective, theta, value, grad, direction, alpha0=1.0,
                      c1=1e-4, c2=0.9, max_evals=30):
    """
    Step length satisfying the strong Wolfe conditions.

    Brackets an acceptable step by doubling, then zooms in with safeguarded
    cubic interpolation. Non-finite trial values count as "too far".

    Returns
    -------
    step : `LineSearchStep` or None
        None when no acceptable step was found within ``max_evals``.
    """
    obj = objective if isinstance(objective, _Counted) else _Counted(objective)
    start = obj.n_evals
    slope0 = float(np.dot(grad, direction))
    if not slope0 < 0.0:
        return None

    def phi(alpha):
        trial = theta + alpha * direction
        f, g = obj(trial)
        return trial, f, g, (None if g is None else float(np.dot(g, direction)))

    def accept(alpha, trial, f, g):
        return LineSearchStep(alpha, trial, f, g, obj.n_evals - start)

    def zoom(lo, hi, f_lo, d_lo, f_hi, d_hi):
        while obj.n_evals - start < max_evals:
            alpha = _interpolate(lo, hi, f_lo, f_hi, d_lo, d_hi)
            trial, f, g, d = phi(alpha)
            if not np.isfinite(f) or f > value + c1 * alpha * slope0 or f >= f_lo:
                hi, f_hi, d_hi = alpha, f, d
            else:
                if abs(d) <= -c2 * slope0:
                    return accept(alpha, trial, f, g)
                if d * (hi - lo) >= 0.0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = alpha, f, d
            if abs(hi - lo) <= 1e-16 * max(abs(lo), abs(hi), 1.0):
                break
        return None

    alpha_prev, f_prev, d_prev = 0.0, value, slope0
    alpha = float(alpha0)
    first = True
    while obj.n_evals - start < max_evals:
        trial, f, g, d = phi(alpha)
        if not np.isfinite(f) or f > value + c1 * alpha * slope0 or (not first and f >= f_prev):
            return zoom(alpha_prev, alpha, f_prev, d_prev, f, d)
        if abs(d) <= -c2 * slope0:
            return accept(alpha, trial, f, g)
        if d >= 0.0:
            return zoom(alpha, alpha_prev, f, d, f_prev, d_prev)
        alpha_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
        first = False
    return None


def minimize(objective, theta0, cfg=None):
    """
    Minimize a smooth function with L-BFGS.

    Parameters
    ----------
    objective : callable
        ``theta -> (value, gradient)``.
    theta0 : array_like
        Starting point; the objective must be finite there.
    cfg : `LbfgsConfig`, optional

    Returns
    -------
    `LbfgsResult`
        Unpacks as ``(theta, value, iterations, status)`` with ``status``
        one of ``'converged'``, ``'max_iters'`` or ``'line_search_failed'``.

    Raises
    ------
    `~wcreg.utils.exceptions.OptimizationError`
        If the objective is not finite at ``theta0``.
    """
    cfg = LbfgsConfig() if cfg is None else cfg
    obj = _Counted(objective)
    theta = np.array(theta0, dtype=float).ravel()
    value, grad = obj(theta)
    if grad is None:
        raise OptimizationError("objective is not finite at the starting point")
    pairs = deque(maxlen=cfg.memory)
    history = [value]
    status = MAX_ITERS
    iteration = 0
    while True:
        if np.max(np.abs(grad), initial=0.0) <= cfg.grad_tol:
            status = CONVERGED
            break
        if iteration >= cfg.max_iters:
            break
        direction = two_loop_direction(grad, list(pairs))
        if not np.dot(direction, grad) < 0.0:
            pairs.clear()
            direction = -grad
        alpha0 = 1.0 if pairs else min(1.0, 1.0 / np.max(np.abs(grad)))
        step = line_search_wolfe(obj, theta, value, grad, direction, alpha0,
                                 cfg.c1, cfg.c2, cfg.max_line_search)
        if step is None and pairs:
            log.debug("line search failed at iteration {}; restarting from "
                      "steepest descent".format(iteration))
            pairs.clear()
            direction = -grad
            step = line_search_wolfe(obj, theta, value, grad, direction,
                                     min(1.0, 1.0 / np.max(np.abs(grad))),
                                     cfg.c1, cfg.c2, cfg.max_line_search)
        if step is None:
            status = LINE_SEARCH_FAILED
            break
        iteration += 1
        s = step.theta - theta
        y = step.grad - grad
        sy = float(np.dot(s, y))
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        else:
            log.debug("skipping curvature pair with s'y = {:g}".format(sy))
        decrease = value - step.value
        theta, value, grad = step.theta, step.value, step.grad
        history.append(value)
        if cfg.ftol > 0.0 and decrease <= cfg.ftol * max(abs(value), 1.0):
            status = CONVERGED
            break
    return LbfgsResult(theta=theta, value=value, grad=grad, iterations=iteration,
                       status=status, n_evals=obj.n_evals, history=history)


def multistart_minimize(objective, init_sampler, cfg=None, initial=None,
                        threads=None):
    """
    Best of ``cfg.n_starts`` L-BFGS runs.

    Parameters
    ----------
    objective : callable
        ``theta -> (value, gradient)``; must be reentrant when
        ``threads > 1``.
    init_sampler : callable
        ``SeedSequence -> theta0``. Start ``i`` draws from the ``i``-th child
        of ``SeedSequence(cfg.seed)``.
    cfg : `LbfgsConfig`, optional
    initial : array_like, optional
        Warm start used as start 0 in place of a random draw.
    threads : int, optional
        Worker threads; defaults to ``wcreg.conf.threads``.

    Returns
    -------
    `LbfgsResult`
        The run with the smallest final value, ties going to the smallest
        start index. The outcome does not depend on ``threads``.

    Raises
    ------
    `~wcreg.utils.exceptions.OptimizationError`
        If every start fails.
    """
    cfg = LbfgsConfig() if cfg is None else cfg
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_starts)

    def run(index):
        if index == 0 and initial is not None:
            theta0 = np.array(initial, dtype=float)
        else:
            theta0 = init_sampler(children[index])
        return minimize(objective, theta0, cfg)

    outcomes = map_ordered(run, range(cfg.n_starts), threads=threads)
    best = None
    summary = []
    failures = []
    for index, (ok, result) in enumerate(outcomes):
        if not ok:
            if not isinstance(result, (WcregError, ArithmeticError)):
                raise result
            failures.append((index, str(result)))
            summary.append((index, None, str(result)))
            continue
        result.start = index
        summary.append((index, result.value, result.status))
        if best is None or result.value < best.value:
            best = result
    if best is None:
        raise OptimizationError("all {} starts failed".format(cfg.n_starts),
                                failures=failures)
    for index, reason in failures:
        log.debug("start {} failed: {}".format(index, reason))
    best.starts = summary
    return best
