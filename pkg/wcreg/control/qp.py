"""
Multiparametric quadratic programs

    z*(x) = argmin_z 1/2 z' Q z + (F x + f)' z   s.t.  A z <= B x + b

with a dense dual active-set solver, the unconstrained law ``w(x)`` and the
polyhedron ``CR0`` of parameters where no constraint is active.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from astropy import log
from scipy import linalg
from scipy.optimize import linprog

from ..models.box import Box
from ..utils.exceptions import DimensionError, QpError
from ..utils.serialize import dump_json, float_to_str, str_to_float

__all__ = ['MpQp', 'QpSolution', 'solve_qp', 'unconstrained_law',
           'unconstrained_row', 'cr0', 'random_mpqp', 'mpc_controller']


def _encode(mat):
    mat = np.asarray(mat, dtype=float)
    return {'shape': list(mat.shape), 'values': float_to_str(mat)}


def _decode(doc):
    return str_to_float(doc['values'], tuple(doc['shape']))


@dataclass(eq=False)
class MpQp:
    """
    Dense mpQP with parameter box ``box``.

    ``Y`` optionally holds the parameter-only part ``1/2 x' Y x`` of the
    cost; it does not change ``z*(x)`` and is only used by `cost`.
    """

    Q: np.ndarray
    F: np.ndarray
    f: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    box: Optional[Box] = None
    Y: Optional[np.ndarray] = None
    _chol: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n_z = self.Q.shape[0]
        self.F = np.asarray(self.F, dtype=float).reshape(n_z, -1)
        n_x = self.F.shape[1]
        self.f = np.asarray(self.f, dtype=float).reshape(n_z)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n_z)
        m = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(m, n_x)
        self.b = np.asarray(self.b, dtype=float).reshape(m)
        if self.Q.shape != (n_z, n_z):
            raise DimensionError("Q must be square, got shape {}".format(self.Q.shape),
                                 layer='Q')
        if not np.allclose(self.Q, self.Q.T, rtol=1e-12, atol=1e-12):
            raise QpError("Q must be symmetric")
        try:
            self._chol = linalg.cho_factor(self.Q)
        except linalg.LinAlgError:
            raise QpError("Q is not positive definite")
        if self.box is not None and self.box.dim != n_x:
            raise DimensionError("parameter box of dimension {} for {} parameters"
                                 .format(self.box.dim, n_x), layer='box')
        if self.Y is not None:
            self.Y = np.asarray(self.Y, dtype=float).reshape(n_x, n_x)

    @property
    def n_z(self):
        return self.Q.shape[0]

    @property
    def n_x(self):
        return self.F.shape[1]

    @property
    def n_constraints(self):
        return self.A.shape[0]

    def solve_Q(self, rhs):
        """``Q^{-1} rhs`` through the cached Cholesky factor."""
        return linalg.cho_solve(self._chol, rhs)

    def cost(self, z, x):
        x = np.asarray(x, dtype=float)
        value = 0.5 * z @ self.Q @ z + (self.F @ x + self.f) @ z
        if self.Y is not None:
            value += 0.5 * x @ self.Y @ x
        return float(value)

    def to_dict(self):
        doc = {name: _encode(getattr(self, name)) for name in 'QFfABb'}
        doc['box'] = None if self.box is None else self.box.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc):
        box = None if doc.get('box') is None else Box.from_dict(doc['box'])
        return cls(*(_decode(doc[name]) for name in 'QFfABb'), box=box)

    def to_json(self, path=None):
        return dump_json(self.to_dict(), path)


@dataclass
class QpSolution:
    """
    Result of `solve_qp`.

    ``multipliers`` has one entry per constraint (zero for inactive ones);
    ``active`` lists the constraints in the final working set.
    """

    z_star: np.ndarray
    active: list
    multipliers: np.ndarray
    kkt_residual: float
    status: str
    iterations: int

    @property
    def optimal(self):
        return self.status == 'optimal'


def _kkt_residual(Q, c, A, beta, z, lam):
    stationarity = np.max(np.abs(Q @ z + c + A.T @ lam), initial=0.0)
    slack = beta - A @ z
    primal = max(np.max(-slack, initial=0.0), 0.0)
    complementarity = np.max(np.abs(lam * slack), initial=0.0)
    dual = max(np.max(-lam, initial=0.0), 0.0)
    scale = 1.0 + max(np.max(np.abs(c), initial=0.0), np.max(np.abs(beta), initial=0.0),
                      np.max(np.abs(Q @ z), initial=0.0))
    return max(stationarity, primal, complementarity, dual) / scale


def _dual_active_set(prob, c, beta, tol, max_iter):
    """
    Goldfarb-Idnani iterations from the unconstrained minimizer.

    The most violated constraint enters the working set; a constraint whose
    multiplier would turn negative leaves it (lowest index on ties).
    """
    A = prob.A
    m = A.shape[0]
    z = -prob.solve_Q(c)
    working, lam = [], np.zeros(m)
    iteration = 0
    while True:
        violation = A @ z - beta
        if m == 0 or np.max(violation) <= tol:
            return z, working, lam, 'optimal', iteration
        p = int(np.argmax(violation))
        lam_p = 0.0
        while True:
            iteration += 1
            if iteration > max_iter:
                raise QpError("active-set solver did not terminate in {} iterations"
                              .format(max_iter))
            a_p = A[p]
            if working:
                N = A[working].T
                QiN = prob.solve_Q(N)
                r = np.linalg.solve(N.T @ QiN, QiN.T @ a_p)
                g = a_p - N @ r
            else:
                r = np.zeros(0)
                g = a_p
            d = -prob.solve_Q(g)
            curvature = -(a_p @ d)
            scale = a_p @ prob.solve_Q(a_p)
            t2 = np.inf
            if curvature > 1e-12 * max(scale, 1e-300):
                t2 = (a_p @ z - beta[p]) / curvature
            t1, k = np.inf, None
            for j, (r_j, idx) in enumerate(zip(r, working)):
                if r_j > 1e-14:
                    ratio = lam[idx] / r_j
                    if ratio < t1 or (ratio == t1 and idx < working[k]):
                        t1, k = ratio, j
            if np.isinf(t1) and np.isinf(t2):
                lam[p] = lam_p
                return z, working, lam, 'infeasible', iteration
            t = min(t1, t2)
            if np.isfinite(t2):
                z = z + t * d
            for j, idx in enumerate(working):
                lam[idx] -= t * r[j]
            lam_p += t
            if t2 <= t1:
                working.append(p)
                lam[p] = lam_p
                break
            dropped = working.pop(k)
            lam[dropped] = 0.0


def solve_qp(prob, x, tol=1e-9, max_iter=None):
    """
    Solve the QP of parameter ``x``.

    Parameters
    ----------
    prob : `MpQp`
    x : array_like
    tol : float
        Largest accepted constraint violation.
    max_iter : int, optional
        Cycling guard; ``10 (m + n_z) + 100`` by default.

    Returns
    -------
    `QpSolution`
        ``status`` is ``'optimal'`` or ``'infeasible'``.

    Raises
    ------
    `~wcreg.utils.exceptions.QpError`
        If the iteration guard is exceeded.

    Examples
    --------
    >>> prob = MpQp(Q=[[1.0]], F=[[0.0]], f=[-1.0], A=[[1.0]], B=[[0.0]], b=[0.5])
    >>> sol = solve_qp(prob, [0.0])
    >>> float(sol.z_star[0]), float(sol.multipliers[0])
    (0.5, 0.5)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (prob.n_x,):
        raise DimensionError("parameter of dimension {} for an mpQP over {}"
                             .format(x.size, prob.n_x), layer='parameter')
    c = prob.F @ x + prob.f
    beta = prob.B @ x + prob.b
    if max_iter is None:
        max_iter = 10 * (prob.n_constraints + prob.n_z) + 100
    z, working, lam, status, iterations = _dual_active_set(prob, c, beta, tol, max_iter)
    if status == 'infeasible':
        log.debug("QP infeasible at x = {}".format(x))
    residual = _kkt_residual(prob.Q, c, prob.A, beta, z, lam)
    return QpSolution(z_star=z, active=sorted(working), multipliers=lam,
                      kkt_residual=float(residual), status=status, iterations=iterations)


def unconstrained_law(prob):
    """
    Gain and offset of the unconstrained minimizer ``z(x) = K x + k``.
    """
    K = -prob.solve_Q(prob.F)
    k = -prob.solve_Q(prob.f)
    return K, k


def unconstrained_row(prob, x, component=0):
    """
    ``w(x) = -e_i' Q^{-1} (F x + f)`` for component ``i``.
    """
    K, k = unconstrained_law(prob)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(K[component] @ x + k[component])
    return x @ K[component] + k[component]


def _redundant(H, K, i, keep, bounds, tol):
    others = [j for j in keep if j != i]
    if not others and bounds is None:
        return False
    res = linprog(-H[i], A_ub=H[others] if others else None,
                  b_ub=K[others] if others else None,
                  bounds=bounds if bounds is not None else (None, None),
                  method='highs')
    if res.status in (2, 3):
        # infeasible or unbounded: the row cannot be implied by the others
        return False
    if res.status != 0:
        raise QpError("redundancy check of CR0 row {} failed: {}".format(i, res.message))
    return -res.fun <= K[i] + tol * (1.0 + abs(K[i]))


def cr0(prob, minimal=True, box=None, tol=1e-9):
    """
    Parameters for which the unconstrained minimizer is feasible.

    ``CR0 = {x : H0 x <= K0}`` with ``H0 = -A Q^{-1} F - B`` and
    ``K0 = b + A Q^{-1} f``.

    Parameters
    ----------
    minimal : bool
        Drop redundant rows. Row ``i`` is redundant when the largest value
        of ``H0_i x`` subject to the remaining rows (and the parameter box)
        does not exceed ``K0_i``; each check is a linear program.
    box : `~wcreg.models.Box`, optional
        Defaults to ``prob.box``.

    Returns
    -------
    H0, K0 : ndarray
        Rows normalized to unit length when ``minimal``.
    """
    H0 = -prob.A @ prob.solve_Q(prob.F) - prob.B
    K0 = prob.b + prob.A @ prob.solve_Q(prob.f)
    if not minimal:
        return H0, K0
    box = prob.box if box is None else box
    norms = np.linalg.norm(H0, axis=1)
    zero = norms <= 1e-12
    if np.any(zero & (K0 < -tol)):
        log.warning("CR0 is empty: a constant row is violated")
    H = H0[~zero] / norms[~zero, None]
    K = K0[~zero] / norms[~zero]
    bounds = None if box is None else list(zip(box.lower, box.upper))
    keep = list(range(H.shape[0]))
    for i in range(H.shape[0]):
        if _redundant(H, K, i, keep, bounds, tol):
            keep.remove(i)
    log.debug("CR0: {} of {} rows kept".format(len(keep), H0.shape[0]))
    return H[keep], K[keep]


def random_mpqp(seed=0, n_x=2, n_z=10, n_ineq=30, z_bound=1.0, box=None):
    """
    Seeded random mpQP, feasible on its whole parameter box.

    ``Q = M M' / n_z + I``, ``f = 0``, random ``F``, ``A`` and ``B``, and
    ``b`` large enough that ``z = 0`` is feasible for every ``x`` in the
    box; the bounds ``-z_bound <= z_i <= z_bound`` are appended as the last
    ``2 n_z`` rows.
    """
    rng = np.random.default_rng(seed)
    box = Box(-np.ones(n_x), np.ones(n_x)) if box is None else box
    M = rng.standard_normal((n_z, n_z))
    Q = M @ M.T / n_z + np.eye(n_z)
    Q = 0.5 * (Q + Q.T)
    F = rng.standard_normal((n_z, n_x))
    A = rng.standard_normal((n_ineq, n_z))
    B = rng.standard_normal((n_ineq, n_x))
    radius = np.maximum(np.abs(box.lower), np.abs(box.upper))
    b = 0.2 + rng.uniform(0.0, 0.5, n_ineq) + np.abs(B) @ radius
    A = np.vstack([A, np.eye(n_z), -np.eye(n_z)])
    B = np.vstack([B, np.zeros((2 * n_z, n_x))])
    b = np.concatenate([b, np.full(2 * n_z, float(z_bound))])
    return MpQp(Q=Q, F=F, f=np.zeros(n_z), A=A, B=B, b=b, box=box)


def mpc_controller(prob, component=0, tol=1e-9):
    """
    Exact control law ``x -> z*(x)[component]``.

    Raises `~wcreg.utils.exceptions.QpError` where the QP is infeasible.
    """
    def controller(x):
        sol = solve_qp(prob, x, tol=tol)
        if not sol.optimal:
            raise QpError("QP infeasible at x = {}".format(np.asarray(x).tolist()))
        return float(sol.z_star[component])
    return controller
