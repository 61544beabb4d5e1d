"""Smoke tests of the command line at tiny budgets."""

import os

import numpy as np
import pytest
from astropy import log
from astropy.table import Table

from wcreg.cli import RunConfig, main
from wcreg.cli.main import EXIT_ERROR, EXIT_OK, EXIT_THRESHOLD, THREADS_ENV
from wcreg.control import cr0, random_mpqp
from wcreg.utils.exceptions import ConfigError
from wcreg.utils.serialize import dump_json, load_json

TINY = ['--n-initial', '5', '--max-steps', '1', '--budget-global', '100',
        '--lbfgs-starts', '1', '--lbfgs-max-iters', '50', '--resolution', '5']


def invoke(command, problem, out, *extra):
    return main([command, '--problem', problem, '--out', str(out)] + TINY + list(extra))


@pytest.fixture(autouse=True)
def no_thread_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


class Test_RunConfig(object):
    def test_registry_defaults(self, tmp_path):
        config = RunConfig(mode='bounds', problem='gaussian', out=str(tmp_path))
        active = config.active_config()
        assert active.n_initial == 100 and active.max_steps == 50
        assert active.train.l2_reg == 1e-4 and active.train.sign_eta is None
        assert config.envelope_config().widths == (20, 10)

    def test_sign_eta_in_set_mode(self, tmp_path):
        config = RunConfig(mode='certify-set', problem='nonconvex-set', out=str(tmp_path))
        assert config.active_config().train.sign_eta == 10.0

    def test_layering(self, tmp_path):
        path = str(tmp_path / 'run.json')
        dump_json({'problem': 'gaussian', 'n_initial': 7, 'threads': 3, 'gamma': 5.0}, path)
        env = {THREADS_ENV: '5'}
        config = RunConfig.from_sources('fit', {'n_initial': 9, 'out': str(tmp_path),
                                                'gamma': None}, path, env)
        assert config.n_initial == 9 and config.threads == 3 and config.gamma == 5.0
        dump_json({'problem': 'gaussian'}, path)
        config = RunConfig.from_sources('fit', {'out': str(tmp_path)}, path, env)
        assert config.threads == 5
        config = RunConfig.from_sources('fit', {'out': str(tmp_path), 'threads': 2},
                                        path, env)
        assert config.threads == 2

    @pytest.mark.parametrize(('mode', 'extra'), [
        ('sysid', {'problem': 'gaussian'}),
        ('fit', {'problem': 'gaussian', 'family': 'icnn'}),
        ('fit', {'problem': 'gaussian', 'resolution': 1}),
        ('fit', {'problem': 'gaussian', 'form': 'quadratic'}),
        ('fit', {}),
        ('plot', {'problem': 'gaussian'})])
    def test_invalid(self, mode, extra, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_sources(mode, dict(extra, out=str(tmp_path)), environ={})

    def test_unknown_file_key(self, tmp_path):
        path = str(tmp_path / 'run.json')
        dump_json({'problem': 'gaussian', 'budget': 10}, path)
        with pytest.raises(ConfigError):
            RunConfig.from_sources('fit', {'out': str(tmp_path)}, path, {})

    def test_bad_thread_variable(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_sources('fit', {'problem': 'gaussian', 'out': str(tmp_path)},
                                   environ={THREADS_ENV: 'many'})


class Test_main(object):
    def test_list_problems(self, capsys):
        assert main(['list-problems']) == EXIT_OK
        printed = capsys.readouterr().out
        assert 'mpc-nonminphase' in printed and 'certify-set' in printed

    def test_fit_threshold_exceeded(self, tmp_path):
        status = invoke('fit', 'scalar-example', tmp_path)
        assert status == EXIT_THRESHOLD
        report = load_json(str(tmp_path / 'report.json'))
        manifest = load_json(str(tmp_path / 'manifest.json'))
        assert report['wce'] > 1e-3 and 'timing' not in report
        assert manifest['exit_status'] == EXIT_THRESHOLD
        assert manifest['run']['n_initial'] == 5 and manifest['active']['max_steps'] == 1
        assert set(manifest['outputs']) == {'report.json', 'history.csv', 'grid.csv',
                                            'manifest.json'}
        history = Table.read(str(tmp_path / 'history.csv'), format='ascii.csv')
        assert len(history) == 1 and history['n_samples'][0] == 5
        grid = Table.read(str(tmp_path / 'grid.csv'), format='ascii.csv')
        assert len(grid) == 5

    def test_reports_are_reproducible(self, tmp_path):
        texts = []
        for name in ('a', 'b'):
            assert invoke('fit', 'gaussian', tmp_path / name, '--seed', '3') == EXIT_OK
            with open(str(tmp_path / name / 'report.json'), encoding='utf-8') as fh:
                texts.append(fh.read())
        assert texts[0] == texts[1]

    def test_user_problem(self, tmp_path):
        status = invoke('fit', 'wcreg.cli.tests.test_problems.tiny_problem', tmp_path)
        assert status == EXIT_OK
        assert load_json(str(tmp_path / 'report.json'))['family'] == 'mlp'

    def test_passive_fit(self, tmp_path):
        assert invoke('fit', 'gaussian', tmp_path, '--passive-samples', '20') == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['stop_reason'] == 'passive'
        assert len(report['dataset_final']['ys']) == 20

    def test_bounds_and_export(self, tmp_path):
        assert invoke('bounds', 'gaussian', tmp_path, '--form', 'const-asym') == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['form'] == 'const-asym' and 'fit' in report
        grid = Table.read(str(tmp_path / 'grid.csv'), format='ascii.csv')
        assert np.all(grid['lower'] <= grid['f_hat']) and np.all(grid['f_hat'] <= grid['upper'])
        path = str(tmp_path / 'again.csv')
        status = main(['export-grid', str(tmp_path / 'report.json'), '--problem', 'gaussian',
                       '--resolution', '5', '--out', path])
        assert status == EXIT_OK
        again = Table.read(path, format='ascii.csv')
        assert np.allclose(again['upper'], grid['upper'], rtol=1e-12, atol=0.0)

    def test_export_fit_report(self, tmp_path):
        invoke('fit', 'scalar-example', tmp_path)
        path = str(tmp_path / 'line.csv')
        status = main(['export-grid', str(tmp_path / 'report.json'), '--problem',
                       'scalar-example', '--resolution', '7', '--out', path])
        assert status == EXIT_OK
        grid = Table.read(path, format='ascii.csv')
        wce = load_json(str(tmp_path / 'report.json'))['wce']
        assert len(grid) == 7 and np.all(grid['upper'] - grid['lower'] >= 2 * wce - 1e-12)

    @pytest.mark.parametrize(('family', 'key'), [('max-affine', 'polyhedron'),
                                                 ('input-convex-nn', 'convex_form')])
    def test_certify_set(self, tmp_path, family, key):
        status = invoke('certify-set', 'nonconvex-set', tmp_path, '--family', family)
        assert status == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['delta_f'] <= 0.0 and key in report
        assert report['conservativeness']['points'] == 25
        grid = Table.read(str(tmp_path / 'grid.csv'), format='ascii.csv')
        assert 'f_bar' in grid.colnames
        assert os.path.exists(str(tmp_path / 'polyhedron.txt')) == (family == 'max-affine')

    def test_sysid(self, tmp_path):
        status = invoke('sysid', 'pendulum', tmp_path, '--steps', '3', '--budget-global', '60')
        assert status == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['Ts'] == 0.1 and len(report['states']) == 2
        rollout = Table.read(str(tmp_path / 'rollout.csv'), format='ascii.csv')
        history = Table.read(str(tmp_path / 'history.csv'), format='ascii.csv')
        assert len(rollout) == 3 and list(history['component']) == ['xi1', 'xi2']

    def test_sysid_user_system(self, tmp_path):
        status = invoke('sysid', 'wcreg.cli.tests.test_problems.decay_problem', tmp_path,
                        '--steps', '4')
        assert status == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['n_states'] == 1 and len(report['states']) == 1
        assert report['method'] == 'rk4' and report['states'][0]['model']['n_inputs'] == 2
        rollout = Table.read(str(tmp_path / 'rollout.csv'), format='ascii.csv')
        assert len(rollout) == 4 and 'xi2' not in rollout.colnames
        assert np.all(rollout['xi1_lower'] <= rollout['xi1_upper'])
        assert np.all(np.abs(rollout['xi1']) <= 1.0)

    def test_mpqp(self, tmp_path):
        assert invoke('mpqp', 'random-mpqp', tmp_path, '--form', 'const-asym') == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['cr0_rows'] == cr0(random_mpqp(seed=0))[0].shape[0]
        assert report['mpqp']['Q']

    def test_mpc(self, tmp_path):
        status = invoke('mpc', 'mpc-nonminphase', tmp_path, '--form', 'const-asym',
                        '--horizon', '4', '--steps', '5')
        assert status == EXIT_OK
        report = load_json(str(tmp_path / 'report.json'))
        assert report['mpc']['N'] == 4 and report['closed_loop']['steps'] == 5
        trajectory = Table.read(str(tmp_path / 'trajectory.csv'), format='ascii.csv')
        assert 'u1_exact' in trajectory.colnames and len(trajectory) == 5
        assert not os.path.exists(str(tmp_path / 'grid.csv'))

    @pytest.mark.parametrize('argv', [['fit', '--problem', 'no-such-problem'],
                                      ['sysid', '--problem', 'gaussian']])
    def test_errors_exit_one(self, argv, tmp_path, capsys):
        assert main(argv + ['--out', str(tmp_path)]) == EXIT_ERROR
        message = capsys.readouterr().err
        assert message.startswith('wcreg: error:') and message.count('\n') == 1

    def test_verbosity_is_restored(self):
        level = log.level
        main(['--quiet', 'list-problems'])
        assert log.level == level
