"""
Exceptions and warnings raised by `wcreg`.
"""
from astropy.utils.exceptions import AstropyUserWarning

__all__ = ['WcregError', 'ConfigError', 'DimensionError',
           'ModelEvaluationError', 'DatasetError', 'OptimizationError',
           'ActiveLearningError', 'BoundsError', 'IntegrationError',
           'QpError', 'UnsupportedFamilyError', 'WcregWarning']


class WcregError(Exception):
    """Base class of every error raised on purpose by `wcreg`."""


class ConfigError(WcregError, ValueError):
    """A configuration value violates its documented invariant."""


class DimensionError(WcregError, ValueError):
    """
    An array does not have the shape a model or solver expects.

    Parameters
    ----------
    message : str
        Human readable description.

    layer : str or int, optional
        The layer (or block) whose shape check failed.
    """

    def __init__(self, message, layer=None):
        if layer is not None:
            message = "{} (layer {})".format(message, layer)
        super().__init__(message)
        self.layer = layer


class ModelEvaluationError(WcregError, ArithmeticError):
    """
    A forward or reverse pass produced a non-finite intermediate.

    ``layer`` is the index of the layer where it first appeared and
    ``sample`` the offending row of a batch, when known.
    """

    def __init__(self, message, layer=None, sample=None):
        where = []
        if layer is not None:
            where.append("layer {}".format(layer))
        if sample is not None:
            where.append("sample {}".format(sample))
        if where:
            message = "{} ({})".format(message, ", ".join(where))
        super().__init__(message)
        self.layer = layer
        self.sample = sample


class DatasetError(WcregError, ValueError):
    """A data set is empty, ragged or leaves its box."""


class OptimizationError(WcregError, RuntimeError):
    """
    A local optimization could not produce a usable result.

    ``failures`` collects ``(start_index, reason)`` pairs when the error
    aggregates several multistart runs.
    """

    def __init__(self, message, failures=()):
        self.failures = list(failures)
        if self.failures:
            details = "; ".join("start {}: {}".format(i, r)
                                for i, r in self.failures)
            message = "{} [{}]".format(message, details)
        super().__init__(message)


class ActiveLearningError(WcregError, RuntimeError):
    """Every iteration of an active-learning run failed."""


class BoundsError(WcregError, ValueError):
    """An error bound was requested where it is not certified."""


class IntegrationError(WcregError, ArithmeticError):
    """
    A vector field returned a non-finite derivative.

    ``stage`` is the integrator stage (1-based) that failed.
    """

    def __init__(self, message, stage=None):
        if stage is not None:
            message = "{} (stage {})".format(message, stage)
        super().__init__(message)
        self.stage = stage


class QpError(WcregError, RuntimeError):
    """A quadratic program is malformed or the solver did not terminate."""


class UnsupportedFamilyError(WcregError, TypeError):
    """The operation is not defined for the given model family."""


class WcregWarning(AstropyUserWarning):
    """Non-fatal numerical condition reported by `wcreg`."""
