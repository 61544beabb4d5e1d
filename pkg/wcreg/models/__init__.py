# Licensed under a 3-clause BSD style license - see LICENSE.md
"""
Model families, their parameter vectors and the gate/saturation wrappers.
"""
from .activations import get_activation
from .box import Box
from .gating import (SurrogateModel, gated_eval, indicator_eval, sat_hard,
                     sat_smooth)
from .networks import (ENVELOPE_FLOOR, EnvelopeNN, InputConvexNN, MaxAffine,
                       MLP, Model, build_model, envelope_nn_eval, icnn_eval,
                       max_affine_eval, mlp_eval, model_grad)
from .params import ParamLayout, ParamVec
from .specs import IndicatorSpec, ModelSpec, SaturationSpec
