# Licensed under a 3-clause BSD style license - see LICENSE.md

__all__ = ['__version__', 'test']

try:
    from .version import version as __version__
except ImportError:
    try:
        from importlib.metadata import version as _dist_version
        __version__ = _dist_version(__package__)
    except Exception:
        __version__ = ''


# set up the test command
def _get_test_runner():
    import os
    from astropy.tests.runner import TestRunner
    return TestRunner(os.path.dirname(__file__))


def test(package=None, test_path=None, args=None, plugins=None,
         verbose=False, pastebin=None, pdb=False, coverage=False,
         open_files=False, **kwargs):
    """
    Run the tests using `py.test <https://docs.pytest.org>`__. A proper set
    of arguments is constructed and passed to ``pytest.main``.

    Parameters
    ----------
    package : str, optional
        The name of a specific package to test, e.g. 'models' or
        'optimize'. If nothing is specified all default tests are run.

    test_path : str, optional
        Specify location to test by path. May be a single file or
        directory. Must be specified absolutely or relative to the
        calling directory.

    args : str, optional
        Additional arguments to be passed to ``pytest.main`` in the
        ``args`` keyword argument, e.g. ``'-m "not slow"'``.

    plugins : list, optional
        Plugins to be passed to ``pytest.main`` in the ``plugins`` keyword
        argument.

    verbose : bool, optional
        Convenience option to turn on verbose output from py.test. Passing
        True is the same as specifying ``'-v'`` in ``args``.

    pastebin : {'failed','all',None}, optional
        Convenience option for turning on py.test pastebin output.

    pdb : bool, optional
        Turn on PDB post-mortem analysis for failing tests.

    coverage : bool, optional
        Generate a test coverage report.

    open_files : bool, optional
        Fail when any tests leave files open.

    kwargs
        Any additional keywords passed into this function will be passed
        on to the astropy test runner.

    """
    test_runner = _get_test_runner()
    return test_runner.run_tests(
        package=package, test_path=test_path, args=args,
        plugins=plugins, verbose=verbose, pastebin=pastebin,
        pdb=pdb, coverage=coverage, open_files=open_files, **kwargs)
