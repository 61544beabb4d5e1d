"""Tests for the training objectives."""

import mpmath
import numpy as np
import pytest

from wcreg.models import Box, ModelSpec, build_model
from wcreg.models.tests.test_networks import central_diff, rel_err
from wcreg.regression import (Dataset, TrainConfig, envelope_loss_asym,
                              envelope_loss_sym, mse_loss, sign_transform,
                              smooth_linf_loss)
from wcreg.utils.exceptions import ConfigError, DatasetError, ModelEvaluationError


def zero_model(n_inputs=1):
    """Affine model with all parameters zero, so the errors equal the targets."""
    model = build_model(ModelSpec('mlp', n_inputs=n_inputs))
    return model, np.zeros(model.layout.size)


def constant_envelope(c, n_inputs=1):
    """Envelope parameters giving ``eps(x) == c`` on every input."""
    env = build_model(ModelSpec('envelope-nn', n_inputs=n_inputs, widths=(3, 2)))
    raw = float(np.log(np.expm1(c - 1e-8)))
    return env, env.layout.pack({'b3': [raw]})


class Test_TrainConfig(object):
    def test_defaults_from_conf(self):
        from wcreg import conf
        with conf.set_temp('gamma', 25.0):
            cfg = TrainConfig()
        assert cfg.gamma == 25.0 and cfg.nu == 0.0

    @pytest.mark.parametrize('kwargs', [{'gamma': 0.0}, {'gamma': -1.0}, {'nu': -0.1},
                                        {'l2_reg': -1e-3}, {'sign_eta': 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class Test_Dataset(object):
    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((0, 2)), [])

    def test_ragged_rejected(self):
        with pytest.raises(DatasetError):
            Dataset([[0.0], [1.0]], [1.0])

    def test_outside_box_rejected(self):
        with pytest.raises(DatasetError) as exc:
            Dataset([[0.5], [1.5]], [0.0, 0.0], box=Box([0.0], [1.0]))
        assert "[1]" in str(exc.value)

    def test_appended(self):
        data = Dataset([[0.1, 0.2]], [3.0], box=Box([0, 0], [1, 1]))
        more = data.appended([0.5, 0.5], -1.0)
        assert len(data) == 1 and len(more) == 2
        assert more.acquired.tolist() == [False, True]
        assert more.n_initial == 1

    def test_round_trip(self, rng):
        data = Dataset(rng.uniform(size=(5, 2)), rng.normal(size=5), [0, 0, 0, 1, 1])
        back = Dataset.from_dict(data.to_dict())
        assert np.array_equal(back.xs, data.xs) and np.array_equal(back.ys, data.ys)
        assert np.array_equal(back.acquired, data.acquired)


class Test_smooth_linf_loss(object):
    def setup_method(self):
        self.model, self.theta = zero_model()
        self.cfg = TrainConfig(gamma=10.0, nu=0.0, l2_reg=0.0)

    def value(self, errors, cfg=None):
        errors = np.asarray(errors, dtype=float)
        data = Dataset(np.zeros((errors.size, 1)), errors)
        return smooth_linf_loss(self.model, self.theta, data, cfg or self.cfg)[0]

    def test_single_zero_error(self):
        value = self.value([0.0])
        errStr = f"One zero error should give log(2)/10, not {value}."
        assert np.isclose(value, np.log(2) / 10, rtol=1e-15, atol=0.0), errStr

    def test_two_errors(self):
        mpmath.mp.dps = 30
        expected = mpmath.log(sum(mpmath.exp(10 * s * e) for e in (mpmath.mpf('0.5'),
                                                                   mpmath.mpf('-0.2'))
                                  for s in (1, -1))) / 10
        value = self.value([0.5, -0.2])
        errStr = f"Smoothed maximum should be {expected}, not {value}."
        assert np.isclose(value, float(expected), rtol=1e-14, atol=0.0), errStr
        assert abs(value - 0.50494) <= 1e-5

    def test_sandwich(self, rng):
        for trial in range(1000):
            n = int(rng.integers(1, 201))
            e = rng.normal(0, 10 ** rng.uniform(-3, 1), size=n)
            gamma = [1.0, 10.0, 100.0, 1000.0][trial % 4]
            value = self.value(e, TrainConfig(gamma=gamma, l2_reg=0.0))
            m = np.max(np.abs(e))
            tol = 1e-12 * (1.0 + m)
            errStr = f"Sandwich violated for N={n}, gamma={gamma}: {value} vs max {m}."
            assert m - tol <= value <= m + np.log(2 * n) / gamma + tol, errStr

    def test_non_increasing_in_gamma(self, rng):
        e = rng.normal(size=30)
        values = [self.value(e, TrainConfig(gamma=g, l2_reg=0.0))
                  for g in (1.0, 10.0, 100.0, 1000.0)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_no_overflow(self):
        value = self.value([1e3, -2e3, 5.0], TrainConfig(gamma=1e3, l2_reg=0.0))
        assert np.isfinite(value) and value >= 2e3

    def test_mse_and_regularization_terms(self, rng):
        e = rng.normal(size=12)
        base = self.value(e)
        value = self.value(e, TrainConfig(gamma=10.0, nu=0.3, l2_reg=0.0))
        assert np.isclose(value, base + 0.3 * np.mean(e ** 2), rtol=1e-13)
        model = build_model(ModelSpec('mlp', n_inputs=1, widths=(2,)))
        theta = model.init_params(0).values
        data = Dataset(rng.uniform(size=(6, 1)), rng.normal(size=6))
        plain, _ = smooth_linf_loss(model, theta, data, TrainConfig(l2_reg=0.0))
        reg, _ = smooth_linf_loss(model, theta, data, TrainConfig(l2_reg=1e-2))
        assert np.isclose(reg - plain, 1e-2 * theta @ theta, rtol=1e-10)

    @pytest.mark.parametrize('cfg', [TrainConfig(gamma=10.0, nu=0.0, l2_reg=0.0),
                                     TrainConfig(gamma=3.0, nu=0.5, l2_reg=1e-3),
                                     TrainConfig(gamma=10.0, l2_reg=1e-4, sign_eta=2.0)])
    def test_gradient(self, cfg, rng):
        model = build_model(ModelSpec('mlp', n_inputs=2, widths=(4,)))
        for trial in range(100):
            data = Dataset(rng.uniform(-1, 1, size=(8, 2)), rng.normal(size=8))
            theta = model.init_params(trial).values + rng.normal(0, 0.2, model.layout.size)
            _, grad = smooth_linf_loss(model, theta, data, cfg)
            fd = central_diff(lambda t: smooth_linf_loss(model, t, data, cfg)[0], theta)
            errStr = f"Loss gradient mismatch at trial {trial}."
            assert rel_err(grad, fd) <= 1e-5, errStr

    def test_non_finite_output_names_sample(self):
        model, _ = zero_model()
        theta = model.layout.pack({'W_out': [[1e308]]})
        data = Dataset([[0.0], [10.0]], [0.0, 0.0])
        with pytest.raises(ModelEvaluationError) as exc:
            smooth_linf_loss(model, theta, data, self.cfg)
        assert exc.value.sample == 1


class Test_mse_loss(object):
    def test_value(self, rng):
        model, theta = zero_model()
        e = rng.normal(size=10)
        data = Dataset(np.zeros((10, 1)), e)
        value, _ = mse_loss(model, theta, data, TrainConfig(l2_reg=0.0))
        assert np.isclose(value, np.mean(e ** 2), rtol=1e-14)

    def test_gradient(self, rng):
        model = build_model(ModelSpec('max-affine', n_inputs=2, widths=(3,)))
        cfg = TrainConfig(l2_reg=1e-3)
        for trial in range(100):
            data = Dataset(rng.uniform(-1, 1, size=(10, 2)), rng.normal(size=10))
            theta = model.init_params(trial).values
            _, grad = mse_loss(model, theta, data, cfg)
            fd = central_diff(lambda t: mse_loss(model, t, data, cfg)[0], theta)
            assert rel_err(grad, fd) <= 1e-5, f"MSE gradient mismatch at trial {trial}."


class Test_envelope_loss_sym(object):
    def setup_method(self):
        self.cfg = TrainConfig(gamma=10.0, l2_reg=0.0)

    def test_zero_errors_constant_envelope(self):
        c, n = 0.4, 7
        env, psi = constant_envelope(c)
        data = Dataset(np.linspace(0, 1, n), np.zeros(n))
        value, _ = envelope_loss_sym(env, psi, data, np.zeros(n), self.cfg)
        eps = env.predict(psi, [0.3])
        expected = eps + np.log1p(n * np.exp(-10.0 * eps)) / 10.0
        errStr = f"Constant-envelope loss should be {expected}, not {value}."
        assert np.isclose(value, expected, rtol=1e-13, atol=0.0), errStr

    def test_single_sample_on_envelope(self):
        env, psi = constant_envelope(0.25)
        eps = env.predict(psi, [0.0])
        data = Dataset([[0.0]], [0.0])
        value, _ = envelope_loss_sym(env, psi, data, [-eps], self.cfg)
        assert np.isclose(value, eps + np.log(2) / 10.0, rtol=1e-13)

    def test_square_penalty(self):
        env, psi = constant_envelope(0.5)
        eps = env.predict(psi, [0.0])
        data = Dataset([[0.0]], [0.0])
        value, _ = envelope_loss_sym(env, psi, data, [eps], self.cfg, mu='square')
        assert np.isclose(value, eps ** 2 + np.log(2) / 10.0, rtol=1e-13)

    def test_penalty_approaches_max_violation(self, rng):
        env = build_model(ModelSpec('envelope-nn', n_inputs=1, widths=(4, 3)))
        psi = env.init_params(5)
        n = 40
        X = rng.uniform(-1, 1, size=(n, 1))
        data = Dataset(X, np.zeros(n))
        errors = rng.normal(0, 1, size=n)
        gamma = 1e3
        value, _ = envelope_loss_sym(env, psi, data, errors, TrainConfig(gamma=gamma))
        eps = env.predict(psi, X)
        penalty = value - np.mean(eps)
        target = max(np.max(np.abs(errors) - eps), 0.0)
        errStr = f"Penalty {penalty} should approach the maximum violation {target}."
        assert target - 1e-12 <= penalty <= target + np.log(1 + n) / gamma + 1e-12, errStr

    def test_penalty_nonnegative(self, rng):
        env, psi = constant_envelope(5.0)
        data = Dataset(np.zeros((4, 1)), np.zeros(4))
        value, _ = envelope_loss_sym(env, psi, data, np.full(4, 1e-3), self.cfg)
        assert value >= env.predict(psi, [0.0])

    def test_misaligned_errors(self):
        env, psi = constant_envelope(1.0)
        with pytest.raises(DatasetError):
            envelope_loss_sym(env, psi, Dataset([[0.0]], [0.0]), [0.1, 0.2], self.cfg)

    @pytest.mark.parametrize('mu', ['identity', 'square'])
    def test_gradient(self, mu, rng):
        env = build_model(ModelSpec('envelope-nn', n_inputs=2, widths=(4, 3)))
        for trial in range(100):
            data = Dataset(rng.uniform(-1, 1, size=(9, 2)), np.zeros(9))
            errors = rng.normal(0, 0.5, size=9)
            psi = env.init_params(trial).values + rng.normal(0, 0.2, env.layout.size)

            def value(p):
                return envelope_loss_sym(env, p, data, errors, self.cfg, mu=mu,
                                         rho_psi=1e-3, penalty_weight=4.0)[0]

            _, grad = envelope_loss_sym(env, psi, data, errors, self.cfg, mu=mu,
                                        rho_psi=1e-3, penalty_weight=4.0)
            errStr = f"Envelope gradient mismatch at trial {trial}."
            assert rel_err(grad, central_diff(value, psi)) <= 1e-5, errStr


class Test_envelope_loss_asym(object):
    def setup_method(self):
        self.cfg = TrainConfig(gamma=10.0, l2_reg=0.0)
        self.env = build_model(ModelSpec('envelope-nn', n_inputs=1, widths=(3, 3)))
        self.data = Dataset(np.linspace(-1, 1, 11), np.zeros(11))

    def test_mirror_image(self, rng):
        psi_a = self.env.init_params(1)
        psi_b = self.env.init_params(2)
        e = rng.normal(size=11)
        v1, (ga1, gb1) = envelope_loss_asym(self.env, psi_a, self.env, psi_b,
                                            self.data, e, self.cfg)
        v2, (gb2, ga2) = envelope_loss_asym(self.env, psi_b, self.env, psi_a,
                                            self.data, -e, self.cfg)
        assert np.isclose(v1, v2, rtol=1e-13)
        assert np.allclose(ga1, ga2, rtol=1e-12, atol=1e-14)
        assert np.allclose(gb1, gb2, rtol=1e-12, atol=1e-14)

    def test_upper_terms_vanish(self, rng):
        env_u, psi_u = constant_envelope(50.0)
        env_l, psi_l = constant_envelope(0.2)
        e = -rng.uniform(0, 1, size=11)
        value, _ = envelope_loss_asym(env_u, psi_u, env_l, psi_l, self.data, e, self.cfg)
        eps_u, eps_l = env_u.predict(psi_u, [0.0]), env_l.predict(psi_l, [0.0])
        lower_only = eps_u + eps_l + np.log1p(np.sum(np.exp(10 * (-e - eps_l)))) / 10
        assert np.isclose(value, lower_only, rtol=1e-12)

    def test_summation_oracle(self, rng):
        psi_u = self.env.init_params(3)
        psi_l = self.env.init_params(4)
        e = rng.normal(0, 0.5, size=11)
        value, _ = envelope_loss_asym(self.env, psi_u, self.env, psi_l, self.data, e,
                                      self.cfg, mu='square', rho_psi=1e-2,
                                      penalty_weight=3.0)
        eu = self.env.predict(psi_u, self.data.xs)
        el = self.env.predict(psi_l, self.data.xs)
        mpmath.mp.dps = 40
        terms = [mpmath.exp(10 * (mpmath.mpf(e[k]) - mpmath.mpf(eu[k]))) for k in range(11)]
        terms += [mpmath.exp(10 * (-mpmath.mpf(e[k]) - mpmath.mpf(el[k]))) for k in range(11)]
        expected = (sum(mpmath.mpf(v) ** 2 for v in eu) / 11
                    + sum(mpmath.mpf(v) ** 2 for v in el) / 11
                    + 3 * mpmath.log(1 + sum(terms)) / 10
                    + mpmath.mpf(1e-2) * (sum(mpmath.mpf(v) ** 2 for v in psi_u.values)
                                          + sum(mpmath.mpf(v) ** 2 for v in psi_l.values)))
        errStr = f"Asymmetric envelope loss {value} differs from the oracle {expected}."
        assert np.isclose(value, float(expected), rtol=1e-12, atol=0.0), errStr

    def test_separate_coupling_decouples(self, rng):
        psi_u = self.env.init_params(5)
        e = rng.normal(size=11)
        grads = [envelope_loss_asym(self.env, psi_u, self.env, self.env.init_params(s),
                                    self.data, e, self.cfg, coupling='separate')[1][0]
                 for s in (6, 7)]
        assert np.array_equal(grads[0], grads[1])
        joint = [envelope_loss_asym(self.env, psi_u, self.env, self.env.init_params(s),
                                    self.data, e, self.cfg)[1][0] for s in (6, 7)]
        assert not np.array_equal(joint[0], joint[1])

    @pytest.mark.parametrize('coupling', ['joint', 'separate'])
    def test_gradient(self, coupling, rng):
        env_l = build_model(ModelSpec('envelope-nn', n_inputs=1, widths=(2, 4)))
        for trial in range(100):
            e = rng.normal(0, 0.5, size=11)
            pu = self.env.init_params(trial).values + rng.normal(0, 0.2, self.env.layout.size)
            pl = env_l.init_params(trial).values + rng.normal(0, 0.2, env_l.layout.size)

            def value(p_u, p_l):
                return envelope_loss_asym(self.env, p_u, env_l, p_l, self.data, e,
                                          self.cfg, rho_psi=1e-3, coupling=coupling)[0]

            _, (gu, gl) = envelope_loss_asym(self.env, pu, env_l, pl, self.data, e,
                                             self.cfg, rho_psi=1e-3, coupling=coupling)
            assert rel_err(gu, central_diff(lambda p: value(p, pl), pu)) <= 1e-5
            assert rel_err(gl, central_diff(lambda p: value(pu, p), pl)) <= 1e-5

    def test_unknown_coupling(self):
        psi = self.env.init_params(0)
        with pytest.raises(ConfigError):
            envelope_loss_asym(self.env, psi, self.env, psi, self.data, np.zeros(11),
                               self.cfg, coupling='loose')


class Test_sign_transform(object):
    def test_zero(self):
        assert sign_transform(0.0, 10.0) == 0.0

    def test_saturates(self):
        assert abs(sign_transform(10.0, 10.0) - 1.0) <= 1e-12

    def test_value(self):
        assert np.isclose(sign_transform(0.1, 10.0), 0.761594, atol=1e-6)

    def test_array(self):
        out = sign_transform(np.array([-1.0, 0.0, 1.0]), 0.5)
        assert np.allclose(out, np.tanh([-0.5, 0.0, 0.5]))

    def test_invalid_eta(self):
        with pytest.raises(ConfigError):
            sign_transform(1.0, 0.0)
