# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Uncertain discrete-time models, multiparametric QPs and approximate MPC.
"""
from .dynamics import (METHODS, OdeModel, UncertainModel, integrate_step,
                       learn_uncertain_model, pendulum, rollout_table)
from .mpc import (MpcSpec, condense_mpc, mpc_gated_model, mpc_saturation,
                  nonminphase_spec, simulate_closed_loop, zoh_plant)
from .qp import (MpQp, QpSolution, cr0, mpc_controller, random_mpqp, solve_qp,
                 unconstrained_law, unconstrained_row)
