# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Training objectives, initial designs and the active-learning loop.
"""
from .active import (ActiveConfig, FitReport, abs_error_objective, fit_passive,
                     fit_worst_case)
from .loss import (Dataset, TrainConfig, envelope_loss_asym, envelope_loss_sym,
                   mse_loss, sign_transform, smooth_linf_loss)
from .sampling import grid_sample, lhs_sample, uniform_sample
