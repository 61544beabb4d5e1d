"""Tests for the active-learning loop and the passive baseline."""

import numpy as np
import pytest
from astropy.table import Table

from wcreg.models import Box, ModelSpec, build_model
from wcreg.optimize import DirectConfig, LbfgsConfig
from wcreg.regression import (ActiveConfig, TrainConfig, fit_passive,
                              fit_worst_case)
from wcreg.regression import active
from wcreg.utils.exceptions import ActiveLearningError, ConfigError


def linear_target(x):
    return 2.0 * x[0] - 0.5 * x[1] + 0.3


def bumpy_target(x):
    return np.sin(3 * x[0]) + 0.5 * np.cos(2 * x[1])


def example_one(x):
    x = x[0]
    return (np.sin(x - x * x / 10) + (x / 10) ** 3 - 4 * x / 10) * np.exp(-x) / (1 + np.exp(-x))


def small_config(**kwargs):
    defaults = dict(n_initial=8, max_steps=3, seed=1,
                    train=TrainConfig(gamma=10.0, l2_reg=1e-8),
                    lbfgs=LbfgsConfig(n_starts=2, max_iters=300),
                    direct=DirectConfig(max_evals=300))
    defaults.update(kwargs)
    return ActiveConfig(**defaults)


class Test_ActiveConfig(object):
    @pytest.mark.parametrize('kwargs', [{'n_initial': 0}, {'max_steps': -1},
                                        {'err_threshold': -1.0}, {'sampler': 'sobol'},
                                        {'loss': 'huber'}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ActiveConfig(**kwargs)

    def test_to_dict_nests_sub_configs(self):
        d = small_config().to_dict()
        assert d['direct']['max_evals'] == 300 and d['train']['gamma'] == 10.0


class Test_fit_worst_case(object):
    def setup_method(self):
        self.box = Box([-1.0, -1.0], [1.0, 1.0])
        self.mlp = ModelSpec('mlp', n_inputs=2, widths=(4,))

    def test_linear_target_in_family(self):
        cfg = small_config(err_threshold=1e-6, train=TrainConfig(gamma=10.0, l2_reg=0.0),
                           lbfgs=LbfgsConfig(n_starts=2, grad_tol=1e-12, max_iters=2000))
        report = fit_worst_case(linear_target, ModelSpec('mlp', n_inputs=2), self.box, cfg)
        errStr = f"A linear target should be fitted exactly, WCE was {report.wce}."
        assert report.wce <= 1e-6, errStr
        assert report.stop_reason == 'threshold' and len(report.error_history) == 1

    def test_bookkeeping(self):
        cfg = small_config()
        report = fit_worst_case(bumpy_target, self.mlp, self.box, cfg)
        n_iter = len(report.error_history)
        assert n_iter == 3 and report.stop_reason == 'budget'
        assert report.wce == min(report.error_history)
        assert report.best_iter == int(np.argmin(report.error_history))
        assert np.all(np.diff(report.best_so_far()) <= 0.0)
        assert len(report.dataset_final) == cfg.n_initial + n_iter
        assert report.dataset_final.acquired.sum() == n_iter
        for x, y in report.acquired_points:
            assert self.box.contains(x)
            assert y == bumpy_target(x)

    def test_selected_parameters_reproduce_wce(self):
        report = fit_worst_case(bumpy_target, self.mlp, self.box, small_config())
        errStr = (f"Re-certified WCE {report.wce_recertified} should equal the "
                  f"selected iteration's {report.wce}.")
        assert report.wce_recertified == report.wce, errStr
        x = report.acquired_points[report.best_iter][0]
        assert abs(bumpy_target(x) - report.predict(x)) == report.wce

    def test_zero_steps_runs_once(self):
        report = fit_worst_case(bumpy_target, self.mlp, self.box, small_config(max_steps=0))
        assert len(report.error_history) == 1 and report.stop_reason == 'budget'

    def test_threshold_has_priority(self):
        cfg = small_config(max_steps=1, err_threshold=1e6)
        report = fit_worst_case(bumpy_target, self.mlp, self.box, cfg)
        assert report.stop_reason == 'threshold'

    def test_deterministic(self):
        a = fit_worst_case(bumpy_target, self.mlp, self.box, small_config())
        b = fit_worst_case(bumpy_target, lambda: build_model(self.mlp), self.box,
                           small_config())
        assert a.error_history == b.error_history
        assert np.array_equal(a.theta_star.values, b.theta_star.values)

    def test_failed_iterations_keep_parameters(self, monkeypatch):
        original = active.LOSSES['linf']
        n_initial = 8

        def flaky(model, theta, data, cfg):
            if len(data) > n_initial:
                return np.nan, np.zeros(model.layout.size)
            return original(model, theta, data, cfg)

        monkeypatch.setitem(active.LOSSES, 'linf', flaky)
        report = fit_worst_case(bumpy_target, self.mlp, self.box,
                                small_config(n_initial=n_initial, recertify=False))
        statuses = [it['status'] for it in report.iterations]
        assert statuses[0] != 'failed' and statuses[1:] == ['failed', 'failed']
        # unchanged parameters give the same worst-case search
        assert report.error_history[1] == report.error_history[0]

    def test_all_iterations_failed(self, monkeypatch):
        monkeypatch.setitem(active.LOSSES, 'linf',
                            lambda model, theta, data, cfg: (np.inf, np.zeros_like(theta)))
        with pytest.raises(ActiveLearningError):
            fit_worst_case(bumpy_target, self.mlp, self.box, small_config(max_steps=2))

    def test_report_serialization(self, tmp_path):
        report = fit_worst_case(bumpy_target, self.mlp, self.box, small_config())
        doc = report.to_dict()
        assert doc['wce'] == report.wce and doc['stop_reason'] == 'budget'
        assert len(doc['timing']['wall_seconds']) == 3
        assert 'timing' not in report.to_dict(timing=False)
        path = report.write_history(str(tmp_path / 'history.csv'))
        table = Table.read(path, format='ascii.csv')
        assert list(table['iteration']) == [0, 1, 2]
        assert np.allclose(table['e_N'], report.error_history, rtol=1e-12, atol=0.0)

    @pytest.mark.slow
    def test_scalar_example_improves(self):
        box = Box([-10.0], [10.0])
        spec = ModelSpec('mlp', n_inputs=1, widths=(2, 1))
        improved = 0
        for seed in range(5):
            cfg = ActiveConfig(n_initial=20, max_steps=30, err_threshold=1e-3, seed=seed,
                               train=TrainConfig(gamma=10.0, nu=0.0, l2_reg=1e-8),
                               lbfgs=LbfgsConfig(n_starts=3, max_iters=500),
                               direct=DirectConfig(max_evals=400))
            report = fit_worst_case(example_one, spec, box, cfg)
            assert np.all(np.diff(report.best_so_far()) <= 0.0)
            improved += report.wce < report.error_history[0]
        assert improved >= 3, f"Only {improved} of 5 seeds improved on the initial fit."


class Test_fit_passive(object):
    def test_passive_report(self):
        box = Box([-1.0, -1.0], [1.0, 1.0])
        report = fit_passive(bumpy_target, ModelSpec('mlp', n_inputs=2, widths=(4,)), box,
                             25, small_config())
        assert report.stop_reason == 'passive' and len(report.dataset_final) == 25
        assert report.acquired_points == [] and report.error_history == [report.wce]
        assert report.certification['evals_used'] <= 300

    def test_linf_passive_is_deterministic(self):
        box = Box([-1.0, -1.0], [1.0, 1.0])
        spec = ModelSpec('mlp', n_inputs=2, widths=(3,))
        a = fit_passive(bumpy_target, spec, box, 20, small_config(), loss='linf')
        b = fit_passive(bumpy_target, spec, box, 20, small_config(), loss='linf')
        assert a.wce == b.wce
