"""
DIRECT (DIviding RECTangles) global maximization over a box.

The box is mapped to the unit cube and the negated objective is minimized.
Each rectangle is stored by its center, its value there and one integer
level per dimension (side length ``3**-level``).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from astropy import log

from ..models.box import Box
from ..utils.exceptions import ConfigError
from ..utils.parallel import map_ordered, resolve_threads

__all__ = ['DirectConfig', 'GlobalResult', 'maximize', 'MAX_LEVEL']

#: Rectangles whose shortest side would drop below 3**-MAX_LEVEL are not divided.
MAX_LEVEL = 30


@dataclass
class DirectConfig:
    """
    Settings of `maximize`.

    Parameters
    ----------
    max_evals : int, optional
        Evaluation budget including the local polish; defaults to
        ``wcreg.conf.direct_evals_per_dim`` times the number of non-frozen
        dimensions.
    max_iters : int, optional
        Cap on division rounds; unlimited by default.
    epsilon : float, optional
        Potential-optimality slack; defaults to ``wcreg.conf.direct_epsilon``.
    local_polish : bool
        Finish with a shrinking coordinate search around the incumbent.
    polish_steps : int
    vectorized : bool
        The objective accepts an ``(N, n)`` batch and returns ``N`` values.
    threads : int, optional
        Evaluate the probes of one round on this many threads.
    """

    max_evals: Optional[int] = None
    max_iters: Optional[int] = None
    epsilon: Optional[float] = None
    local_polish: bool = True
    polish_steps: int = 50
    vectorized: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        from .. import conf
        if self.epsilon is None:
            self.epsilon = conf.direct_epsilon
        if self.max_evals is not None and self.max_evals < 1:
            raise ConfigError("DIRECT needs max_evals >= 1")
        if self.max_iters is not None and self.max_iters < 0:
            raise ConfigError("DIRECT max_iters must be nonnegative")
        if self.epsilon < 0.0:
            raise ConfigError("DIRECT epsilon must be nonnegative")
        if self.polish_steps < 0:
            raise ConfigError("polish_steps must be nonnegative")

    def budget(self, n_active):
        if self.max_evals is not None:
            return int(self.max_evals)
        from .. import conf
        return int(conf.direct_evals_per_dim) * max(int(n_active), 1)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class GlobalResult:
    """
    Incumbent of a DIRECT run.

    ``history`` lists ``(evals, value)`` each time the incumbent improved;
    ``n_nonfinite`` counts probes where the objective was not finite.
    """

    x_star: np.ndarray
    value_star: float
    evals_used: int
    history: list = field(default_factory=list)
    iterations: int = 0
    n_nonfinite: int = 0
    max_evals: int = 0

    def to_dict(self):
        return {'x_star': [float(v) for v in self.x_star],
                'value_star': float(self.value_star),
                'evals_used': int(self.evals_used),
                'max_evals': int(self.max_evals),
                'iterations': int(self.iterations),
                'n_nonfinite': int(self.n_nonfinite),
                'history': [[int(e), float(v)] for e, v in self.history]}


class _Problem:
    """Unit-cube view of ``-objective`` over the non-frozen dimensions."""

    def __init__(self, objective, box, cfg):
        self.objective = objective
        self.box = box
        self.active = np.flatnonzero(~box.frozen)
        self.cfg = cfg
        self.threads = resolve_threads(cfg.threads)
        self.n_evals = 0
        self.n_nonfinite = 0
        self.best_s = None
        self.best_value = np.inf
        self.history = []

    def to_box(self, S):
        X = np.tile(self.box.lower, (S.shape[0], 1))
        X[:, self.active] = (self.box.lower[self.active]
                             + S * self.box.width[self.active])
        return np.clip(X, self.box.lower, self.box.upper)

    def __call__(self, S):
        """Negated objective at the unit-cube points ``S``, ``(N, k)``."""
        X = self.to_box(S)
        if self.cfg.vectorized:
            values = np.asarray(self.objective(X), dtype=float).reshape(len(X))
        elif self.threads > 1 and len(X) > 1:
            values = []
            for ok, out in map_ordered(self.objective, list(X), threads=self.threads):
                if not ok:
                    raise out
                values.append(out)
            values = np.asarray(values, dtype=float)
        else:
            values = np.array([float(self.objective(x)) for x in X])
        neg = -values
        bad = ~np.isfinite(neg)
        if bad.any():
            self.n_nonfinite += int(bad.sum())
            log.warning("objective not finite at {} probe(s); treated as the "
                        "worst value".format(int(bad.sum())))
            neg = np.where(bad, np.inf, neg)
        for k in range(len(neg)):
            self.n_evals += 1
            if neg[k] < self.best_value:
                self.best_value = neg[k]
                self.best_s = S[k].copy()
                self.history.append((self.n_evals, -neg[k]))
        return neg


def _sizes(levels):
    return 0.5 * np.sqrt(np.sum(3.0 ** (-2.0 * levels), axis=1))


def _potentially_optimal(values, levels, eligible, epsilon):
    """
    Indices of potentially optimal rectangles, largest size first.

    One candidate per size class: its lowest value, earliest created on
    ties. A candidate is selected when some rate of change ``K > 0`` puts
    it on the lower-right convex hull and promises an improvement of at
    least ``epsilon * |f_min|``.
    """
    idx = np.flatnonzero(eligible)
    if idx.size == 0:
        return []
    finite = np.isfinite(values)
    fill = (np.max(values[finite]) + 1.0) if finite.any() else 0.0
    f = np.where(finite, values, fill)
    f_min = np.min(f)
    groups = {}
    for i in idx:
        key = tuple(np.sort(levels[i]))
        j = groups.get(key)
        if j is None or f[i] < f[j]:
            groups[key] = i
    cand = np.array(list(groups.values()))
    d = _sizes(levels[cand])
    order = np.argsort(-d, kind='stable')
    cand, d = cand[order], d[order]
    fc = f[cand]
    selected = []
    for k in range(cand.size):
        larger = slice(0, k)
        smaller = slice(k + 1, cand.size)
        k_low = np.max((fc[k] - fc[smaller]) / (d[k] - d[smaller]), initial=-np.inf)
        k_high = np.min((fc[larger] - fc[k]) / (d[larger] - d[k]), initial=np.inf)
        if k_high <= 0.0 or k_low > k_high:
            continue
        if np.isfinite(k_high) and \
                fc[k] - k_high * d[k] > f_min - epsilon * abs(f_min):
            continue
        selected.append(int(cand[k]))
    return selected


def maximize(objective, box, cfg=None):
    """
    Globally maximize ``objective`` over ``box`` with DIRECT.

    Parameters
    ----------
    objective : callable
        ``x -> float`` (or ``(N, n) -> (N,)`` with ``cfg.vectorized``);
        must be reentrant when ``cfg.threads > 1``.
    box : `~wcreg.models.Box`
        Frozen dimensions stay at their single value.
    cfg : `DirectConfig`, optional

    Returns
    -------
    `GlobalResult`

    Examples
    --------
    >>> res = maximize(lambda x: -(x[0] - 0.3) ** 2, Box([0.0], [1.0]),
    ...                DirectConfig(max_evals=200))
    >>> abs(res.x_star[0] - 0.3) < 1e-3
    True
    """
    cfg = DirectConfig() if cfg is None else cfg
    if not isinstance(box, Box):
        box = Box(*box)
    prob = _Problem(objective, box, cfg)
    k = prob.active.size
    budget = cfg.budget(k)
    if k == 0:
        log.warning("all box dimensions are frozen; evaluating the single point")
        prob(np.zeros((1, 0)))
        return _result(prob, 0, budget)
    if box.frozen.any():
        log.info("DIRECT runs over {} of {} dimensions ({} frozen)"
                 .format(k, box.dim, box.dim - k))

    reserve = 0
    if cfg.local_polish and cfg.polish_steps > 0:
        reserve = min(budget // 10, 2 * k * cfg.polish_steps)
    search_budget = budget - reserve

    centers = [np.full(k, 0.5)]
    levels = [np.zeros(k, dtype=int)]
    values = list(prob(np.full((1, k), 0.5)))
    iteration = 0
    while cfg.max_iters is None or iteration < cfg.max_iters:
        lv = np.array(levels)
        eligible = lv.min(axis=1) < MAX_LEVEL
        chosen = _potentially_optimal(np.array(values), lv, eligible, cfg.epsilon)
        plan = []
        used = prob.n_evals
        for i in chosen:
            dims = np.flatnonzero(levels[i] == levels[i].min())
            if used + 2 * dims.size > search_budget:
                break
            used += 2 * dims.size
            plan.append((i, dims))
        if not plan:
            break
        probes = []
        for i, dims in plan:
            delta = 3.0 ** -(levels[i].min() + 1)
            for dim in dims:
                for sign in (1.0, -1.0):
                    s = centers[i].copy()
                    s[dim] += sign * delta
                    probes.append(s)
        probe_values = prob(np.array(probes))
        pos = 0
        for i, dims in plan:
            delta = 3.0 ** -(levels[i].min() + 1)
            f_pair = probe_values[pos:pos + 2 * dims.size].reshape(-1, 2)
            pts = probes[pos:pos + 2 * dims.size]
            pos += 2 * dims.size
            order = np.argsort(np.min(f_pair, axis=1), kind='stable')
            for o in order:
                levels[i][dims[o]] += 1
                for side in (0, 1):
                    centers.append(pts[2 * o + side])
                    levels.append(levels[i].copy())
                    values.append(f_pair[o, side])
        iteration += 1
        log.debug("DIRECT round {}: {} rectangles divided, {} evaluations, "
                  "incumbent {:.6g}".format(iteration, len(plan), prob.n_evals,
                                            -prob.best_value))

    if cfg.local_polish and cfg.polish_steps > 0 and prob.best_s is not None:
        i_best = int(np.argmin(values))
        _polish(prob, budget, cfg.polish_steps, 0.5 * 3.0 ** -levels[i_best].min())
    return _result(prob, iteration, budget)


def _polish(prob, budget, steps, h):
    """Shrinking coordinate search around the incumbent in unit coordinates."""
    k = prob.best_s.size
    for _ in range(steps):
        improved = False
        for dim in range(k):
            for sign in (1.0, -1.0):
                if prob.n_evals >= budget:
                    return
                s = prob.best_s.copy()
                s[dim] = np.clip(s[dim] + sign * h, 0.0, 1.0)
                if s[dim] == prob.best_s[dim]:
                    continue
                before = prob.best_value
                prob(s[None, :])
                if prob.best_value < before:
                    improved = True
        if not improved:
            h *= 0.5


def _result(prob, iterations, budget):
    if prob.best_s is None:
        # every probe was non-finite
        s = np.full(prob.active.size, 0.5)
        value = -np.inf
    else:
        s, value = prob.best_s, -prob.best_value
    x = prob.to_box(s[None, :])[0]
    return GlobalResult(x_star=x, value_star=float(value), evals_used=prob.n_evals,
                        history=list(prob.history), iterations=iterations,
                        n_nonfinite=prob.n_nonfinite, max_evals=budget)
