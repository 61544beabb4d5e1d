"""Tests for certified error bounds and envelope training."""

import numpy as np
import pytest

from wcreg.certify import (BoundsReport, EnvelopeConfig, bound_at,
                           calibrate_kappa_asym, calibrate_kappa_sym,
                           constant_asym_bounds, certify, fit_envelope_asym,
                           fit_envelope_sym, symmetrize)
from wcreg.models import Box, ModelSpec, build_model
from wcreg.optimize import DirectConfig, LbfgsConfig
from wcreg.regression import Dataset
from wcreg.regression.tests.test_loss import constant_envelope, zero_model
from wcreg.utils.exceptions import BoundsError, ConfigError
from wcreg.utils.serialize import load_json


def identity_target(x):
    return float(x[0])


def small_envelope_config(**kwargs):
    defaults = dict(widths=(4, 3), rho_psi=0.0, gamma=10.0,
                    lbfgs=LbfgsConfig(n_starts=2, max_iters=500),
                    direct=DirectConfig(max_evals=400))
    defaults.update(kwargs)
    return EnvelopeConfig(**defaults)


def line_data(n=20, lower=0.0, upper=1.0):
    xs = np.linspace(lower, upper, n)[:, None]
    return Dataset(xs, np.zeros(n))


class Test_EnvelopeConfig(object):
    def test_penalty_weight_defaults_to_gamma(self):
        cfg = EnvelopeConfig(gamma=7.0)
        assert cfg.penalty_weight == 7.0

    @pytest.mark.parametrize('kwargs', [{'rho_psi': -1.0}, {'penalty_weight': 0.0},
                                        {'gamma': 0.0}, {'validate_resolution': 1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            EnvelopeConfig(**kwargs)

    def test_to_dict(self):
        d = small_envelope_config().to_dict()
        assert d['widths'] == [4, 3] and d['direct']['max_evals'] == 400


class Test_constant_asym_bounds(object):
    def setup_method(self):
        self.box = Box([-1.0], [2.0])
        self.model, self.theta = zero_model()
        self.direct = DirectConfig(max_evals=400)

    def test_identity_against_zero(self):
        audits = {}
        e_min, e_max = constant_asym_bounds(identity_target, self.model, self.theta,
                                            self.box, self.direct, audits)
        errStr = f"Expected bounds (1, 2), got ({e_min}, {e_max})."
        assert np.isclose(e_min, 1.0, atol=1e-6), errStr
        assert np.isclose(e_max, 2.0, atol=1e-6), errStr
        assert set(audits) == {'e_min', 'e_max'}

    def test_exact_surrogate(self):
        def target(x):
            return self.model.predict(self.theta, x)

        e_min, e_max = constant_asym_bounds(target, self.model, self.theta, self.box,
                                            self.direct)
        assert e_min == 0.0 and e_max == 0.0


class Test_calibrate_kappa(object):
    def setup_method(self):
        self.box = Box([-1.0], [2.0])
        self.model, self.theta = zero_model()
        self.direct = DirectConfig(max_evals=400)

    def test_unit_envelope_gives_wce(self):
        env, psi = constant_envelope(1.0)
        kappa = calibrate_kappa_sym(identity_target, self.model, self.theta, env, psi,
                                    self.box, self.direct)
        errStr = f"kappa with a unit envelope should be the WCE 2, got {kappa}."
        assert np.isclose(kappa, 2.0, atol=1e-6), errStr

    def test_exact_surrogate_gives_zero(self):
        env, psi = constant_envelope(0.5)

        def target(x):
            return self.model.predict(self.theta, x)

        kappa = calibrate_kappa_sym(target, self.model, self.theta, env, psi, self.box,
                                    self.direct)
        assert kappa == 0.0

    def test_asymmetric(self):
        env_u, psi_u = constant_envelope(2.0)
        env_l, psi_l = constant_envelope(1.0)
        audits = {}
        kappa_u, kappa_l = calibrate_kappa_asym(identity_target, self.model, self.theta,
                                                env_u, psi_u, env_l, psi_l, self.box,
                                                self.direct, audits)
        errStr = f"Expected (1, 1), got ({kappa_u}, {kappa_l})."
        assert np.isclose(kappa_u, 1.0, atol=1e-6), errStr
        assert np.isclose(kappa_l, 1.0, atol=1e-6), errStr
        assert set(audits) == {'kappa_u', 'kappa_l'}


class Test_fit_envelope_sym(object):
    def setup_method(self):
        self.data = line_data()
        self.spec = ModelSpec('envelope-nn', n_inputs=1, widths=(4, 3))

    def test_constant_errors(self):
        gamma, n = 10.0, len(self.data)
        cfg = small_envelope_config(normalize=False, penalty_weight=gamma)
        env = build_model(self.spec)
        psi = fit_envelope_sym(self.data, np.full(n, 0.3), env, cfg)
        eps = env.predict(psi, self.data.xs)
        # stationarity of  c + (w / gamma) log(1 + N exp(gamma (0.3 - c)))
        expected = 0.3 + np.log(n * (gamma - 1.0)) / gamma
        errStr = f"Mean envelope {eps.mean()} should be near {expected}."
        assert np.isclose(eps.mean(), expected, atol=0.05), errStr
        assert np.all(eps >= 0.3)

    def test_zero_errors_shrink_to_floor(self):
        cfg = small_envelope_config(normalize=False, penalty_weight=1.0)
        env = build_model(self.spec)
        psi = fit_envelope_sym(self.data, np.zeros(len(self.data)), env, cfg)
        eps = env.predict(psi, self.data.xs)
        assert np.all(eps > 0.0)
        assert eps.mean() < 0.1, f"Envelope {eps.mean()} did not shrink."

    def test_rejects_non_envelope_family(self):
        with pytest.raises(ConfigError):
            fit_envelope_sym(self.data, np.ones(len(self.data)),
                             ModelSpec('mlp', n_inputs=1, widths=(3,)),
                             small_envelope_config())


class Test_fit_envelope_asym(object):
    def test_one_sided_errors(self):
        data = line_data()
        cfg = small_envelope_config(normalize=False, coupling='separate')
        env = build_model(ModelSpec('envelope-nn', n_inputs=1, widths=(4, 3)))
        psi_u, psi_l = fit_envelope_asym(data, np.full(len(data), 0.4), env, env, cfg)
        eps_u = env.predict(psi_u, data.xs)
        eps_l = env.predict(psi_l, data.xs)
        errStr = (f"Upper envelope {eps_u.mean()} should sit well above the lower "
                  f"one {eps_l.mean()} when every error is positive.")
        assert eps_u.mean() > eps_l.mean() + 0.5, errStr
        assert np.all(eps_u >= 0.4)


class Test_bound_at(object):
    def setup_method(self):
        self.box = Box([-1.0], [2.0])
        env_u, psi_u = constant_envelope(1.0)
        env_l, psi_l = constant_envelope(0.25)
        self.input_asym = BoundsReport(form='input-asym', wce=1.5, const_lower=1.5,
                                       const_upper=1.5, box=self.box, env_u=env_u,
                                       psi_u=env_u.param_vec(psi_u), kappa_u=2.0,
                                       env_l=env_l, psi_l=env_l.param_vec(psi_l),
                                       kappa_l=2.0)
        self.const_asym = BoundsReport(form='const-asym', wce=2.0, const_lower=1.0,
                                       const_upper=2.0, box=self.box)

    def test_clamped_by_wce(self):
        lower, upper = bound_at(self.input_asym, [0.5])
        errStr = f"Expected (0.5, 1.5), got ({lower}, {upper})."
        assert np.isclose(lower, 0.5) and np.isclose(upper, 1.5), errStr
        assert isinstance(lower, float)

    def test_batch(self):
        lower, upper = bound_at(self.const_asym, [[-1.0], [0.0], [2.0]])
        assert np.array_equal(lower, [1.0] * 3) and np.array_equal(upper, [2.0] * 3)

    def test_outside_box(self):
        with pytest.raises(BoundsError):
            bound_at(self.const_asym, [2.5])

    @pytest.mark.parametrize('which', ['input_asym', 'const_asym'])
    def test_rebuilt_from_json(self, which):
        report = getattr(self, which)
        back = BoundsReport.from_dict(load_json(report.to_json()))
        X = np.linspace(-1.0, 2.0, 7)[:, None]
        for a, b in zip(bound_at(report, X), bound_at(back, X)):
            assert np.array_equal(a, b), f"Rebuilt {which} bounds differ: {a} vs {b}."
        assert back.model is None and back.form == report.form


class Test_symmetrize(object):
    def test_interval_preserved(self):
        model, theta = zero_model()
        box = Box([-1.0], [2.0])
        report = BoundsReport(form='const-asym', wce=2.0, const_lower=1.0,
                              const_upper=2.0, box=box)
        f_s, e_s = symmetrize(model, theta, report)
        for x in ([-1.0], [0.3], [2.0]):
            f_hat = model.predict(theta, x)
            assert np.isclose(f_s(x) - e_s(x), f_hat - 1.0)
            assert np.isclose(f_s(x) + e_s(x), f_hat + 2.0)

    def test_symmetric_form_rejected(self):
        model, theta = zero_model()
        report = BoundsReport(form='const-sym', wce=1.0, const_lower=1.0,
                              const_upper=1.0, box=Box([0.0], [1.0]))
        with pytest.raises(BoundsError):
            symmetrize(model, theta, report)


class Test_certify(object):
    def setup_method(self):
        self.box = Box([-1.0], [1.0])
        self.model, self.theta = zero_model()

    @staticmethod
    def target(x):
        return np.sin(3.0 * x[0]) + 0.2 * x[0]

    def test_unknown_form(self):
        with pytest.raises(ConfigError):
            certify(self.target, self.model, self.theta, self.box, form='quadratic')

    def test_input_form_needs_data(self):
        with pytest.raises(ConfigError):
            certify(self.target, self.model, self.theta, self.box, form='input-sym',
                    cfg=small_envelope_config())

    def test_const_asym(self):
        report = certify(identity_target, self.model, self.theta, Box([-1.0], [2.0]),
                         form='const-asym', cfg=small_envelope_config())
        assert np.isclose(report.const_lower, 1.0, atol=1e-6)
        assert np.isclose(report.const_upper, 2.0, atol=1e-6)
        assert report.wce == report.const_upper

    def test_input_asym_contains_errors(self):
        xs = np.linspace(-1.0, 1.0, 15)[:, None]
        data = Dataset(xs, [self.target(x) for x in xs])
        cfg = small_envelope_config(validate_resolution=201)
        report = certify(self.target, self.model, self.theta, self.box,
                         form='input-asym', data=data, cfg=cfg)
        assert set(report.audits) == {'wce', 'kappa_u', 'kappa_l'}
        assert report.kappa_u >= 0.0 and report.kappa_l >= 0.0
        assert report.evals_used == sum(a['evals_used'] for a in report.audits.values())
        errStr = f"Containment audit failed: {report.validation}."
        assert report.validation['max_violation'] <= 1e-4, errStr
        lower, upper = bound_at(report, xs)
        assert np.all(lower <= report.wce) and np.all(upper <= report.wce)
        doc = load_json(report.to_json())
        assert doc['form'] == 'input-asym' and 'envelope_l' in doc

    def test_input_sym_shares_envelope(self):
        xs = np.linspace(-1.0, 1.0, 15)[:, None]
        data = Dataset(xs, [self.target(x) for x in xs])
        report = certify(self.target, self.model, self.theta, self.box,
                         form='input-sym', data=data, cfg=small_envelope_config())
        lower, upper = bound_at(report, xs)
        assert np.array_equal(lower, upper)
        assert report.kappa == report.kappa_l
