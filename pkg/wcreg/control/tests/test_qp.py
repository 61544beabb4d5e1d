"""Tests for the dense QP solver and the region CR0."""

import itertools

import numpy as np
import pytest

from wcreg.control import (MpQp, cr0, mpc_controller, random_mpqp, solve_qp,
                           unconstrained_law, unconstrained_row)
from wcreg.models import Box
from wcreg.utils.exceptions import DimensionError, QpError
from wcreg.utils.serialize import load_json


def enumerate_active_sets(Q, c, A, beta):
    """Optimum of a small strictly convex QP by trying every active set."""
    n, m = Q.shape[0], A.shape[0]
    best, best_cost = None, np.inf
    for size in range(min(n, m) + 1):
        for S in itertools.combinations(range(m), size):
            S = list(S)
            K = np.block([[Q, A[S].T], [A[S], np.zeros((size, size))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-c, beta[S]]))
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:n], sol[n:]
            if np.any(lam < -1e-10) or np.any(A @ z - beta > 1e-9):
                continue
            cost = 0.5 * z @ Q @ z + c @ z
            if cost < best_cost:
                best, best_cost = z, cost
    return best


def random_qp(rng, n_z, m):
    M = rng.standard_normal((n_z, n_z))
    Q = M @ M.T + 0.5 * np.eye(n_z)
    A = rng.standard_normal((m, n_z))
    z_feasible = rng.standard_normal(n_z)
    b = A @ z_feasible + rng.uniform(0.0, 1.0, m)
    return MpQp(Q=0.5 * (Q + Q.T), F=np.zeros((n_z, 1)), f=rng.standard_normal(n_z) * 3,
                A=A, B=np.zeros((m, 1)), b=b)


class Test_MpQp(object):
    def test_not_positive_definite(self):
        with pytest.raises(QpError):
            MpQp(Q=[[1.0, 0.0], [0.0, -1.0]], F=np.zeros((2, 1)), f=[0.0, 0.0],
                 A=np.zeros((0, 2)), B=np.zeros((0, 1)), b=[])

    def test_not_symmetric(self):
        with pytest.raises(QpError):
            MpQp(Q=[[2.0, 1.0], [0.0, 2.0]], F=np.zeros((2, 1)), f=[0.0, 0.0],
                 A=np.zeros((0, 2)), B=np.zeros((0, 1)), b=[])

    def test_json(self):
        prob = random_mpqp(seed=4, n_z=3, n_ineq=4)
        back = MpQp.from_dict(load_json(prob.to_json()))
        assert np.array_equal(back.A, prob.A) and np.array_equal(back.Q, prob.Q)
        assert np.array_equal(back.box.upper, prob.box.upper)


class Test_solve_qp(object):
    def test_single_bound(self):
        prob = MpQp(Q=[[1.0]], F=[[0.0]], f=[-1.0], A=[[1.0]], B=[[0.0]], b=[0.5])
        sol = solve_qp(prob, [0.0])
        assert sol.optimal and sol.active == [0]
        assert sol.z_star[0] == 0.5 and sol.multipliers[0] == 0.5

    def test_unconstrained_optimum(self):
        prob = MpQp(Q=np.eye(2), F=np.eye(2), f=[0.0, 0.0], A=[[1.0, 0.0]], B=[[0.0, 0.0]],
                    b=[10.0])
        sol = solve_qp(prob, [1.0, 2.0])
        assert sol.active == [] and np.allclose(sol.z_star, [-1.0, -2.0], atol=1e-15)
        assert sol.kkt_residual <= 1e-14

    def test_infeasible(self):
        prob = MpQp(Q=[[1.0]], F=[[0.0]], f=[0.0], A=[[1.0], [-1.0]], B=[[0.0], [0.0]],
                    b=[-1.0, -1.0])
        sol = solve_qp(prob, [0.0])
        assert sol.status == 'infeasible' and not sol.optimal
        with pytest.raises(QpError):
            mpc_controller(prob)([0.0])

    def test_parameter_dimension(self):
        with pytest.raises(DimensionError):
            solve_qp(random_mpqp(seed=1), [0.0, 0.0, 0.0])

    def test_matches_enumeration(self, rng):
        for trial in range(500):
            n_z = int(rng.integers(1, 7))
            m = int(rng.integers(1, 9))
            prob = random_qp(rng, n_z, m)
            sol = solve_qp(prob, [0.0])
            oracle = enumerate_active_sets(prob.Q, prob.f, prob.A, prob.b)
            errStr = (f"Trial {trial} (n_z={n_z}, m={m}): solver {sol.z_star}, "
                      f"enumeration {oracle}.")
            assert sol.optimal, errStr
            assert np.allclose(sol.z_star, oracle, rtol=1e-7, atol=1e-7), errStr
            assert sol.kkt_residual <= 1e-8, errStr

    def test_kkt_on_random_mpqp(self, rng):
        prob = random_mpqp(seed=0)
        for x in rng.uniform(-1.0, 1.0, size=(200, 2)):
            sol = solve_qp(prob, x)
            assert sol.optimal, f"Random mpQP infeasible at {x}."
            assert sol.kkt_residual <= 1e-8, f"KKT residual {sol.kkt_residual} at {x}."
            assert np.all(sol.multipliers >= -1e-12)
            inactive = np.setdiff1d(np.arange(prob.n_constraints), sol.active)
            assert np.all(sol.multipliers[inactive] == 0.0)


class Test_unconstrained_law(object):
    def test_row_matches_law(self, rng):
        prob = random_mpqp(seed=2)
        K, k = unconstrained_law(prob)
        x = rng.uniform(-1.0, 1.0, size=2)
        z = -np.linalg.solve(prob.Q, prob.F @ x + prob.f)
        assert np.allclose(K @ x + k, z, atol=1e-12)
        assert np.isclose(unconstrained_row(prob, x, 3), z[3], atol=1e-12)
        batch = unconstrained_row(prob, np.vstack([x, x]))
        assert batch.shape == (2,) and np.isclose(batch[0], z[0], atol=1e-12)

    def test_origin(self):
        prob = random_mpqp(seed=5)
        H0, K0 = cr0(prob, minimal=False)
        assert unconstrained_row(prob, [0.0, 0.0]) == 0.0
        assert np.all(K0 >= 0.0) and np.all(H0 @ np.zeros(2) <= K0)


class Test_cr0(object):
    def setup_method(self):
        self.prob = random_mpqp(seed=0, z_bound=0.5)

    def test_exactness(self, rng):
        H0, K0 = cr0(self.prob, minimal=False)
        K, k = unconstrained_law(self.prob)
        inside = outside = 0
        for x in rng.uniform(-1.0, 1.0, size=(1000, 2)):
            margin = np.max(H0 @ x - K0)
            if abs(margin) <= 1e-7:
                continue
            sol = solve_qp(self.prob, x)
            if margin < 0.0:
                inside += 1
                assert sol.active == [], f"Constraints {sol.active} active inside CR0 at {x}."
                assert abs(sol.z_star[0] - (K[0] @ x + k[0])) <= 1e-8
            else:
                outside += 1
                z_unc = K @ x + k
                assert np.any(self.prob.A @ z_unc > self.prob.B @ x + self.prob.b)
                assert sol.active, f"No active constraint outside CR0 at {x}."
        errStr = f"Samples inside CR0: {inside}, outside: {outside}."
        assert inside > 0 and outside > 0, errStr

    def test_minimal_representation(self, rng):
        H_full, K_full = cr0(self.prob, minimal=False)
        H, K = cr0(self.prob)
        assert H.shape[0] <= H_full.shape[0]
        assert np.allclose(np.linalg.norm(H, axis=1), 1.0)
        X = rng.uniform(-1.0, 1.0, size=(1000, 2))
        full = np.all(X @ H_full.T <= K_full, axis=1)
        minimal = np.all(X @ H.T <= K, axis=1)
        assert np.array_equal(full, minimal)

    def test_unbounded_box_keeps_rows(self):
        prob = MpQp(Q=[[1.0]], F=[[1.0]], f=[0.0], A=[[1.0], [-1.0]], B=[[0.0], [0.0]],
                    b=[1.0, 1.0])
        H, K = cr0(prob)
        assert H.shape == (2, 1) and np.allclose(np.sort(K), [1.0, 1.0])
        bounded = MpQp(Q=[[1.0]], F=[[1.0]], f=[0.0], A=[[1.0], [-1.0]], B=[[0.0], [0.0]],
                       b=[1.0, 1.0], box=Box([-0.5], [0.5]))
        H, K = cr0(bounded)
        assert H.shape == (0, 1)


class Test_random_mpqp(object):
    def test_shape_and_seed(self):
        a, b = random_mpqp(seed=7), random_mpqp(seed=7)
        assert a.n_z == 10 and a.n_x == 2 and a.n_constraints == 50
        assert np.array_equal(a.F, b.F)

    def test_feasible_at_corners(self):
        prob = random_mpqp(seed=3)
        for corner in itertools.product([-1.0, 1.0], repeat=2):
            assert solve_qp(prob, corner).optimal
            assert np.isfinite(mpc_controller(prob)(corner))
