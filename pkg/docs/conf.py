# -*- coding: utf-8 -*-
#
# wcreg documentation build configuration file
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from wcreg import __version__  # noqa: E402

# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.mathjax',
              'sphinx.ext.napoleon', 'sphinx.ext.intersphinx',
              'sphinx_automodapi.automodapi',
              'sphinx_automodapi.smart_resolver']

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'astropy': ('https://docs.astropy.org/en/stable/', None)}

source_suffix = '.rst'
master_doc = 'index'

project = 'wcreg'
copyright = '2026, wcreg Developers'
author = 'wcreg Developers'

# The short X.Y version and the full version, including alpha/beta/rc tags.
release = __version__
version = '.'.join(release.split('.')[:2])

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'
todo_include_todos = False

# `name` in docstrings links to the API
default_role = 'obj'

automodapi_toctreedirnm = 'api'

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
htmlhelp_basename = 'wcregdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    (master_doc, 'wcreg.tex', 'wcreg Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'wcreg', 'wcreg Documentation', [author], 1)
]
