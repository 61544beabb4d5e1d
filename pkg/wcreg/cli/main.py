"""
The ``wcreg`` command.

Every subcommand but ``list-problems`` and ``export-grid`` runs one
benchmark problem and writes into the output directory:

``report.json``
    The fit, bounds, constraint certificate or uncertain model.
``history.csv``
    Worst-case error of every active-learning iteration.
``grid.csv``
    Plot data on a tensor grid (problems with at most two inputs).
``manifest.json``
    Resolved settings and tool version; re-running with them reproduces
    ``report.json``.

Exit status is 0 on success, 1 on a `~wcreg.utils.exceptions.WcregError`
and 2 when the certified worst-case error exceeds a positive
``err_threshold``.
"""
import argparse
import os
import sys
from dataclasses import asdict, dataclass, fields
from typing import Optional

import astropy.units as u
import numpy as np
from astropy import log
from astropy.table import Table, vstack

from .. import __version__, conf
from ..certify.bounds import FORMS, BoundsReport, EnvelopeConfig, certify
from ..certify.constraints import (certify_constraint, conservativeness,
                                   fit_sign_surrogate, hrep_text, polyhedral_form)
from ..control.dynamics import learn_uncertain_model, rollout_table
from ..control.mpc import (condense_mpc, mpc_gated_model, mpc_saturation,
                           nonminphase_spec, simulate_closed_loop)
from ..control.qp import cr0, mpc_controller, random_mpqp
from ..models.networks import build_model
from ..models.params import ParamVec
from ..models.specs import ModelSpec, SaturationSpec
from ..optimize.direct import DirectConfig
from ..optimize.lbfgs import LbfgsConfig
from ..regression.active import LOSSES, ActiveConfig, fit_passive, fit_worst_case
from ..regression.loss import TrainConfig
from ..utils.exceptions import ConfigError, WcregError
from ..utils.parallel import resolve_threads
from ..utils.serialize import dump_json, load_json, write_table
from .export import export_grid
from .problems import MODES, PROBLEMS, get_problem

__all__ = ['RunConfig', 'run', 'main', 'EXIT_OK', 'EXIT_ERROR', 'EXIT_THRESHOLD',
           'THREADS_ENV']

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THRESHOLD = 2
THREADS_ENV = 'WCREG_THREADS'


@dataclass
class RunConfig:
    """
    Resolved settings of one run.

    Settings left at `None` take the problem's registry value, and the
    optimizer settings then fall back to ``wcreg.conf``.

    Parameters
    ----------
    mode : str
        One of ``fit``, ``bounds``, ``certify-set``, ``sysid``, ``mpqp`` and
        ``mpc``.
    problem : str
        Registry key or dotted name of a `~wcreg.cli.problems.Problem`.
    seed : int
    out : str
        Output directory, created when missing.
    threads : int, optional
    family : str, optional
        Model family by its registry name.
    n_initial, max_steps : int, optional
    err_threshold, gamma, nu, l2_reg : float, optional
    budget_global : int, optional
        DIRECT evaluation budget of every global search.
    lbfgs_starts, lbfgs_max_iters : int, optional
    form : str
        Bound form of ``bounds``, ``mpqp`` and ``mpc``.
    resolution : int
        Grid points per dimension of ``grid.csv`` and of set audits.
    passive_samples : int, optional
        Train once on this many uniform samples instead of active learning.
    loss : {'mse', 'linf'}
        Training loss of a passive fit.
    steps : int, optional
        Length of the closed-loop or rollout simulation.
    horizon : int, optional
        MPC prediction horizon.
    epsilon_f : float
        Margin of a constraint certificate.
    """

    mode: str
    problem: str
    seed: int = 0
    out: str = '.'
    threads: Optional[int] = None
    family: Optional[str] = None
    n_initial: Optional[int] = None
    max_steps: Optional[int] = None
    err_threshold: Optional[float] = None
    gamma: Optional[float] = None
    nu: Optional[float] = None
    l2_reg: Optional[float] = None
    budget_global: Optional[int] = None
    lbfgs_starts: Optional[int] = None
    lbfgs_max_iters: Optional[int] = None
    form: str = 'input-asym'
    resolution: int = 50
    passive_samples: Optional[int] = None
    loss: str = 'mse'
    steps: Optional[int] = None
    horizon: Optional[int] = None
    epsilon_f: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("unknown mode {!r}; choose from {}".format(self.mode, MODES))
        entry = self.entry
        if self.mode not in entry.modes:
            raise ConfigError("problem {!r} supports {}, not {!r}"
                              .format(entry.name, list(entry.modes), self.mode))
        entry.family(self.family)
        if self.form not in FORMS:
            raise ConfigError("unknown bound form {!r}; choose from {}"
                              .format(self.form, FORMS))
        if self.loss not in LOSSES:
            raise ConfigError("unknown loss {!r}; choose from {}"
                              .format(self.loss, sorted(LOSSES)))
        if int(self.resolution) < 2:
            raise ConfigError("resolution must be at least 2")
        if self.passive_samples is not None and self.passive_samples < 1:
            raise ConfigError("passive_samples must be positive")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.budget_global is not None and self.budget_global < 1:
            raise ConfigError("budget_global must be positive")
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise ConfigError("cannot create output directory {!r}: {}"
                              .format(self.out, exc)) from None
        if not os.access(self.out, os.W_OK):
            raise ConfigError("output directory {!r} is not writable".format(self.out))

    @property
    def entry(self):
        return get_problem(self.problem)

    @staticmethod
    def _pick(value, default):
        return default if value is None else value

    def active_config(self):
        p = self.entry
        train = TrainConfig(gamma=self._pick(self.gamma, p.gamma),
                            nu=self._pick(self.nu, p.nu),
                            l2_reg=self._pick(self.l2_reg, p.l2_reg),
                            sign_eta=p.sign_eta if self.mode == 'certify-set' else None)
        return ActiveConfig(n_initial=self._pick(self.n_initial, p.n_initial),
                            max_steps=self._pick(self.max_steps, p.max_steps),
                            err_threshold=self._pick(self.err_threshold, p.err_threshold),
                            train=train,
                            lbfgs=LbfgsConfig(n_starts=self.lbfgs_starts,
                                              max_iters=self.lbfgs_max_iters),
                            direct=DirectConfig(max_evals=self.budget_global),
                            seed=int(self.seed))

    def envelope_config(self):
        active = self.active_config()
        return EnvelopeConfig(gamma=active.train.gamma, lbfgs=active.lbfgs,
                              direct=active.direct, **self.entry.envelope)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_sources(cls, mode, flags=None, config_file=None, environ=None):
        """
        Layer the settings: flag > config file > environment > defaults.

        Parameters
        ----------
        mode : str
        flags : dict, optional
            Command-line values; `None` entries are ignored.
        config_file : str, optional
            JSON object with `RunConfig` field names as keys.
        environ : mapping, optional
            ``THREADS_ENV`` provides the thread count; `os.environ` by default.
        """
        environ = os.environ if environ is None else environ
        names = {f.name for f in fields(cls)} - {'mode'}
        values = {}
        if config_file is not None:
            try:
                doc = load_json(config_file)
            except (OSError, ValueError) as exc:
                raise ConfigError("cannot read config file {!r}: {}"
                                  .format(config_file, exc)) from None
            if not isinstance(doc, dict):
                raise ConfigError("config file must hold a JSON object")
            unknown = sorted(set(doc) - names)
            if unknown:
                raise ConfigError("unknown config key(s) {}".format(unknown))
            values.update(doc)
        if 'threads' not in values and environ.get(THREADS_ENV):
            try:
                values['threads'] = int(environ[THREADS_ENV])
            except ValueError:
                raise ConfigError("{} must be an integer, got {!r}"
                                  .format(THREADS_ENV, environ[THREADS_ENV])) from None
        values.update({k: v for k, v in (flags or {}).items()
                       if v is not None and k in names})
        if 'problem' not in values:
            raise ConfigError("no problem given; use --problem or the config file")
        return cls(mode=mode, **values)


class _Outputs:
    """Paths of the files a run writes, in the order they were written."""

    def __init__(self, directory):
        self.directory = directory
        self.written = []

    def __call__(self, name):
        path = os.path.join(self.directory, name)
        self.written.append(name)
        return path


def _surrogate_fit(run, target, family, box, cfg):
    if run.passive_samples:
        return fit_passive(target, family, box, run.passive_samples, cfg, loss=run.loss)
    return fit_worst_case(target, family, box, cfg)


def _grid(run, source, target, box, out, bounds=None):
    if box.dim > 2:
        log.info("no grid.csv for {} inputs".format(box.dim))
        return None
    return export_grid(source, target, box, run.resolution, bounds, path=out('grid.csv'))


def _with_fit(doc, fit):
    doc['fit'] = fit.to_dict(timing=False)
    return doc


def _run_fit(run, out):
    p = run.entry
    cfg = run.active_config()
    fit = _surrogate_fit(run, p.target, p.family(run.family), p.box, cfg)
    fit.to_json(out('report.json'), timing=False)
    fit.write_history(out('history.csv'))
    _grid(run, fit, p.target, p.box, out)
    return fit.wce_certified, cfg


def _run_bounds(run, out):
    p = run.entry
    cfg = run.active_config()
    fit = _surrogate_fit(run, p.target, p.family(run.family), p.box, cfg)
    bounds = certify(p.target, fit.model, fit.theta_star, p.box, form=run.form,
                     data=fit.dataset_final, cfg=run.envelope_config(),
                     wce=fit.wce_certified)
    dump_json(_with_fit(bounds.to_dict(), fit), out('report.json'))
    fit.write_history(out('history.csv'))
    _grid(run, fit, p.target, p.box, out, bounds)
    return fit.wce_certified, cfg


def _run_certify_set(run, out):
    p = run.entry
    cfg = run.active_config()
    fit = fit_sign_surrogate(p.target, p.family(run.family), p.box, cfg)
    cert = certify_constraint(p.target, fit.model, fit.theta_star, p.box, cfg.direct,
                              epsilon_f=run.epsilon_f,
                              sign_eta=fit.config['train']['sign_eta'], fit=fit)
    doc = cert.to_dict()
    doc['conservativeness'] = conservativeness(cert, p.target, resolution=run.resolution)
    form = polyhedral_form(cert) if cert.family in ('max-affine', 'input-convex-nn') else None
    if isinstance(form, tuple):
        doc['polyhedron'] = {'A': form[0].tolist(), 'b': form[1].tolist()}
        with open(out('polyhedron.txt'), 'w', encoding='utf-8') as fh:
            fh.write(hrep_text(*form) + "\n")
    elif form is not None:
        doc['convex_form'] = form
    dump_json(doc, out('report.json'))
    fit.write_history(out('history.csv'))
    table = export_grid((cert.model, cert.theta_star), p.target, p.box, run.resolution)
    table['f_bar'] = table['f_hat'] - cert.delta_f + cert.epsilon_f
    write_table(table, out('grid.csv'))
    return fit.wce_certified, cfg


def _stacked_history(fits, names):
    tables = []
    for fit, name in zip(fits, names):
        table = fit.history_table()
        table.add_column([name] * len(table), name='component', index=0)
        tables.append(table)
    return vstack(tables)


def _run_sysid(run, out):
    p = run.entry
    cfg = run.active_config()
    ode = p.ode()
    Ts = p.settings['Ts'] * u.s
    family = p.family(run.family)
    model = learn_uncertain_model(ode, p.box, Ts, family, cfg,
                                  output_families=family if ode.n_outputs else None,
                                  method=p.settings.get('method', 'heun'))
    model.to_json(out('report.json'))
    names = ['xi{}'.format(j + 1) for j in range(model.n_states)]
    write_table(_stacked_history(model.state_fits, names), out('history.csv'))
    # inputs inside the box, starting at rest
    rng = np.random.default_rng(run.seed)
    steps = run._pick(run.steps, 50)
    lo, hi = p.box.lower[ode.n_states:], p.box.upper[ode.n_states:]
    inputs = rng.uniform(lo, hi, size=(steps, ode.n_inputs))
    rollout_table(model, ode, np.zeros(ode.n_states), inputs, path=out('rollout.csv'))
    return max(fit.wce_certified for fit in model.state_fits), cfg


def _run_mpqp(run, out):
    p = run.entry
    cfg = run.active_config()
    s = p.settings
    prob = random_mpqp(seed=s['instance_seed'], n_x=p.box.dim, n_z=s['n_z'],
                       n_ineq=s['n_ineq'], z_bound=s['z_bound'], box=p.box)
    exact = mpc_controller(prob)
    saturation = SaturationSpec(mode='hard', y_min=-s['z_bound'], y_max=s['z_bound'])
    model = mpc_gated_model(prob, p.family(run.family), saturation)
    fit = _surrogate_fit(run, exact, model, p.box, cfg)
    bounds = certify(exact, fit.model, fit.theta_star, p.box, form=run.form,
                     data=fit.dataset_final, cfg=run.envelope_config(),
                     wce=fit.wce_certified)
    doc = _with_fit(bounds.to_dict(), fit)
    doc['mpqp'] = prob.to_dict()
    doc['cr0_rows'] = int(cr0(prob)[0].shape[0])
    dump_json(doc, out('report.json'))
    fit.write_history(out('history.csv'))
    _grid(run, fit, exact, p.box, out, bounds)
    return fit.wce_certified, cfg


def _run_mpc(run, out):
    p = run.entry
    cfg = run.active_config()
    s = p.settings
    spec = nonminphase_spec(N=run._pick(run.horizon, s['N']), Ts=s['Ts'] * u.s, box=p.box)
    prob = condense_mpc(spec)
    exact = mpc_controller(prob)
    model = mpc_gated_model(prob, p.family(run.family), mpc_saturation(spec))
    fit = _surrogate_fit(run, exact, model, p.box, cfg)
    bounds = certify(exact, fit.model, fit.theta_star, p.box, form=run.form,
                     data=fit.dataset_final, cfg=run.envelope_config(),
                     wce=fit.wce_certified)
    steps = run._pick(run.steps, s['steps'])
    trajectory = simulate_closed_loop(spec, fit.predict, np.zeros(spec.n_states),
                                      s['reference'], steps, exact=exact,
                                      path=out('trajectory.csv'))
    gap = np.abs(np.asarray(trajectory['u1']) - np.asarray(trajectory['u1_exact']))
    doc = _with_fit(bounds.to_dict(), fit)
    doc['mpc'] = spec.to_dict()
    doc['closed_loop'] = {'steps': steps, 'reference': s['reference'],
                          'max_input_gap': float(np.max(gap)),
                          'within_wce': bool(np.all(gap <= fit.wce_certified))}
    dump_json(doc, out('report.json'))
    fit.write_history(out('history.csv'))
    return fit.wce_certified, cfg


RUNNERS = {'fit': _run_fit, 'bounds': _run_bounds, 'certify-set': _run_certify_set,
           'sysid': _run_sysid, 'mpqp': _run_mpqp, 'mpc': _run_mpc}


def run(config):
    """
    Execute one run and write its artifacts.

    Parameters
    ----------
    config : `RunConfig`

    Returns
    -------
    int
        `EXIT_OK`, or `EXIT_THRESHOLD` when the certified worst-case error
        exceeds a positive ``err_threshold``.
    """
    out = _Outputs(config.out)
    threads = resolve_threads(config.threads)
    with conf.set_temp('threads', threads):
        wce, cfg = RUNNERS[config.mode](config, out)
    status = EXIT_OK
    if cfg.err_threshold > 0.0 and wce > cfg.err_threshold:
        log.warning("certified worst-case error {:.6g} exceeds the threshold {:.6g}"
                    .format(wce, cfg.err_threshold))
        status = EXIT_THRESHOLD
    manifest = {'tool': 'wcreg', 'version': __version__, 'mode': config.mode,
                'run': config.to_dict(), 'threads': threads,
                'problem': config.entry.to_dict(), 'active': cfg.to_dict(),
                'wce_certified': wce, 'exit_status': status,
                'outputs': out.written + ['manifest.json']}
    if config.mode in ('bounds', 'mpqp', 'mpc'):
        manifest['envelope'] = config.envelope_config().to_dict()
    dump_json(manifest, out('manifest.json'))
    return status


def export_report_grid(report_path, problem, resolution=50, path='grid.csv'):
    """
    Grid data of a saved ``fit`` or ``bounds`` report.

    The target and box come from ``problem``; bounds are rebuilt when the
    report holds them.
    """
    p = get_problem(problem)
    if p.target is None:
        raise ConfigError("problem {!r} has no closed-form target".format(p.name))
    doc = load_json(report_path)
    bounds = None
    if 'form' in doc:
        bounds = BoundsReport.from_dict(doc)
        doc = doc['fit']
    model = build_model(ModelSpec.from_dict(doc['model']))
    theta = ParamVec.from_dict(doc['theta_star'])
    if bounds is None:
        wce = max(w for w in (doc['wce'], doc.get('wce_recertified')) if w is not None)
        bounds = BoundsReport(form='const-sym', wce=wce, const_lower=wce,
                              const_upper=wce, box=p.box)
    return export_grid((model, theta), p.target, p.box, resolution, bounds, path=path)


def _list_problems():
    table = Table(rows=[(p.name, ', '.join(p.modes), p.description)
                        for p in PROBLEMS.values()],
                  names=('problem', 'modes', 'description'))
    table.pprint(max_lines=-1, max_width=-1)


def _parser():
    parser = argparse.ArgumentParser(
        prog='wcreg', description="Worst-case regression with certified error bounds.")
    parser.add_argument('--version', action='version', version=__version__ or 'unknown')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help="Log optimizer internals.")
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help="Only log warnings and errors.")
    sub = parser.add_subparsers(dest='command', required=True)

    for mode in MODES:
        cmd = sub.add_parser(mode, help="Run a problem in {} mode.".format(mode))
        cmd.add_argument('--problem', help="Registry key or dotted name.")
        cmd.add_argument('--config', help="JSON file of run settings.")
        cmd.add_argument('--seed', type=int)
        cmd.add_argument('--out', help="Output directory (default: current).")
        cmd.add_argument('--threads', type=int,
                         help="Worker threads; defaults to ${}.".format(THREADS_ENV))
        cmd.add_argument('--family')
        cmd.add_argument('--n-initial', type=int, dest='n_initial')
        cmd.add_argument('--max-steps', type=int, dest='max_steps')
        cmd.add_argument('--err-threshold', type=float, dest='err_threshold')
        cmd.add_argument('--gamma', type=float)
        cmd.add_argument('--nu', type=float)
        cmd.add_argument('--l2-reg', type=float, dest='l2_reg')
        cmd.add_argument('--budget-global', type=int, dest='budget_global',
                         help="DIRECT evaluations per global search.")
        cmd.add_argument('--lbfgs-starts', type=int, dest='lbfgs_starts')
        cmd.add_argument('--lbfgs-max-iters', type=int, dest='lbfgs_max_iters')
        cmd.add_argument('--form', choices=FORMS)
        cmd.add_argument('--resolution', type=int)
        cmd.add_argument('--passive-samples', type=int, dest='passive_samples')
        cmd.add_argument('--loss', choices=sorted(LOSSES))
        cmd.add_argument('--steps', type=int)
        cmd.add_argument('--horizon', type=int)
        cmd.add_argument('--epsilon-f', type=float, dest='epsilon_f')

    grid = sub.add_parser('export-grid', help="Grid data of a saved report.")
    grid.add_argument('report', help="report.json of a fit or bounds run.")
    grid.add_argument('--problem', required=True)
    grid.add_argument('--resolution', type=int, default=50)
    grid.add_argument('--out', default='grid.csv', help="CSV file to write.")

    sub.add_parser('list-problems', help="Show the benchmark registry.")
    return parser


def _flags(args):
    skip = {'command', 'config', 'verbose', 'quiet'}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(args=None):
    """
    Entry point of the ``wcreg`` command; returns the exit status.
    """
    args = _parser().parse_args(args)
    level = log.level
    if args.verbose:
        log.setLevel('DEBUG')
    elif args.quiet:
        log.setLevel('WARNING')
    try:
        if args.command == 'list-problems':
            _list_problems()
            return EXIT_OK
        if args.command == 'export-grid':
            export_report_grid(args.report, args.problem, args.resolution, args.out)
            return EXIT_OK
        config = RunConfig.from_sources(args.command, _flags(args), args.config)
        return run(config)
    except WcregError as exc:
        print("wcreg: error: {}".format(exc).splitlines()[0], file=sys.stderr)
        return EXIT_ERROR
    finally:
        log.setLevel(level)


if __name__ == '__main__':
    sys.exit(main())
