# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Certificates for trained surrogates: error bounds and inner approximations
of constraint sets.
"""
from .bounds import (FORMS, BoundsReport, EnvelopeConfig, bound_at,
                     calibrate_kappa_asym, calibrate_kappa_sym,
                     constant_asym_bounds, certify, fit_envelope_asym,
                     fit_envelope_sym, symmetrize)
from .constraints import (ConstraintCert, certified_constraint,
                          certify_constraint, compute_delta_f, conservativeness,
                          fit_sign_surrogate, hrep_text, polyhedral_form)
