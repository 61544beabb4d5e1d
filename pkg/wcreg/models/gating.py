"""
Indicator gates, output saturation and the composite surrogate model

    f(x; θ) = sat((1 - δ(x; β)) v(x; θ) + δ(x; β) w(x); y_min, y_max)

that forces a network ``v`` to an affine law ``w`` on a polyhedral set and
keeps its output inside given bounds.
"""
import numpy as np

from ..utils.exceptions import ConfigError, DimensionError
from .activations import (positive_from_raw, raw_from_positive, sigmoid,
                          softplus)
from .networks import Model, build_model
from .specs import IndicatorSpec  # noqa: F401

__all__ = ['indicator_eval', 'sat_hard', 'sat_smooth', 'gated_eval',
           'SurrogateModel']


def _indicator(spec, X, beta):
    """
    Batched gate value with its derivatives.

    Returns ``(delta, d_delta/d_beta, d_delta/d_X)``.
    """
    N = X.shape[0]
    rows, cols = [], []
    if spec.G is not None:
        rows.append(spec.G)
        cols.append(X @ spec.G.T + spec.g_offset)
    if spec.H is not None:
        h = X @ spec.H.T + spec.h_offset
        rows += [spec.H, -spec.H]
        cols += [h, -h]
    if spec.mode == 'pwa':
        R = np.vstack(rows + [np.zeros((1, X.shape[1]))])
        C = np.hstack(cols + [np.zeros((N, 1))])
        idx = np.argmax(C, axis=1)
        v = C[np.arange(N), idx]
        raw = 1.0 - beta * v
        delta = np.maximum(raw, 0.0)
        active = raw > 0.0
        d_beta = np.where(active, -v, 0.0)
        d_X = np.where(active[:, None], -beta * R[idx], 0.0)
        return delta, d_beta, d_X
    violation = np.zeros(N)
    slope = np.zeros_like(X)
    if spec.G is not None:
        g = cols[0]
        violation += np.maximum(g, 0.0).sum(axis=1)
        slope += (g > 0.0).astype(float) @ spec.G
    if spec.H is not None:
        h = cols[-2]
        violation += np.abs(h).sum(axis=1)
        slope += np.sign(h) @ spec.H
    delta = np.exp(-beta * violation)
    return delta, -violation * delta, -beta * delta[:, None] * slope


def indicator_eval(spec, x, beta=None):
    """
    Approximate indicator of the set described by ``spec``.

    Equals 1 exactly where all inequalities hold and all equalities vanish.

    Parameters
    ----------
    spec : `~wcreg.models.specs.IndicatorSpec`
    x : array_like
        A point or an ``(N, n)`` batch.
    beta : float, optional
        Overrides ``spec.beta``.

    Examples
    --------
    >>> spec = IndicatorSpec(mode='pwa', G=[[1.0]], g_offset=[-1.0])
    >>> float(indicator_eval(spec, [1.5]))
    0.5
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.n_inputs:
        raise DimensionError("point of dimension {} for a gate over {} inputs"
                             .format(X.shape[1], spec.n_inputs), layer='gate')
    beta = spec.beta if beta is None else float(beta)
    if not beta > 0.0:
        raise ConfigError("indicator beta must be positive")
    delta = _indicator(spec, X, beta)[0]
    return float(delta[0]) if single else delta


def _check_bounds(y_min, y_max, strict=False):
    y_min = np.asarray(y_min, dtype=float)
    y_max = np.asarray(y_max, dtype=float)
    bad = y_min >= y_max if strict else y_min > y_max
    if np.any(bad):
        raise ConfigError("saturation bounds must satisfy y_min {} y_max"
                          .format('<' if strict else '<='))
    return y_min, y_max


def sat_hard(y, y_min, y_max):
    """Component-wise clamp ``min(max(y, y_min), y_max)``."""
    y_min, y_max = _check_bounds(y_min, y_max)
    return np.minimum(np.maximum(np.asarray(y, dtype=float), y_min), y_max)


def _sat_smooth_parts(y, y_min, y_max, eta):
    a = eta * (y_min - y)
    b = eta * (y_max - y)
    upper_half = y >= 0.5 * (y_min + y_max)
    # shift to the nearer asymptote so that the softplus difference is small
    sigma = np.where(upper_half,
                     y_max + (softplus(a) - softplus(b)) / eta,
                     y_min + (softplus(-a) - softplus(-b)) / eta)
    sigma = np.clip(sigma, y_min, y_max)
    sa, sb = sigmoid(a), sigmoid(b)
    d_y = sb - sa
    d_eta = (-(softplus(a) - softplus(b)) / eta ** 2
             + (sa * (y_min - y) - sb * (y_max - y)) / eta)
    return sigma, d_y, d_eta


def sat_smooth(y, y_min, y_max, eta):
    """
    Smooth saturation

    .. math::

        σ_η(y) = y_{max} + \\frac{1}{η}
        \\log\\frac{1 + e^{-η(y - y_{min})}}{1 + e^{-η(y - y_{max})}}

    evaluated as a difference of softplus terms shifted to the nearer
    asymptote, so that it neither overflows nor loses the midpoint.
    The result is increasing in ``y``, lies in ``[y_min, y_max]`` and maps
    the midpoint of the interval to itself.
    """
    y_min, y_max = _check_bounds(y_min, y_max, strict=True)
    if not (np.all(np.isfinite(y_min)) and np.all(np.isfinite(y_max))):
        raise ConfigError("smooth saturation needs finite bounds")
    eta = float(eta)
    if not eta > 0.0:
        raise ConfigError("saturation eta must be positive, got {}".format(eta))
    sigma = _sat_smooth_parts(np.asarray(y, dtype=float), y_min, y_max, eta)[0]
    return sigma if sigma.ndim else float(sigma)


def gated_eval(gate, w_affine, inner, theta, x):
    """
    ``δ(x) w(x) + (1 - δ(x)) v(x; θ)`` for a core model ``inner``.

    On the gate's set ``δ = 1`` and the result is ``w(x)`` bit for bit.
    """
    if not isinstance(inner, Model):
        inner = build_model(inner)
    X, single = inner._inputs(x)
    c, d = w_affine
    c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
    v = inner.forward(theta, X)[0]
    delta = _indicator(gate, X, gate.beta)[0]
    out = delta * (X @ c + float(d)) + (1.0 - delta) * v
    return float(out[0]) if single else out


class SurrogateModel(Model):
    """
    Core family wrapped with an optional gate and an optional saturation.

    Parameters of the core are stored under ``core.``; a trainable gate
    steepness adds ``gate.beta_raw`` and a trainable smooth-saturation
    sharpness adds ``sat.eta_raw``, both mapped through
    `~wcreg.models.activations.positive_from_raw`.
    """

    family = 'surrogate'

    def __init__(self, spec):
        self.core = build_model(spec.core())
        self.gate = spec.gate
        self.saturation = spec.saturation
        super().__init__(spec)
        if self.gate is not None:
            c, d = spec.w_affine
            self.w_c = np.asarray(c, dtype=float)
            self.w_d = float(d)

    @property
    def beta_trainable(self):
        return self.gate is not None and self.gate.beta_trainable

    @property
    def eta_trainable(self):
        return (self.saturation is not None and self.saturation.mode == 'smooth'
                and self.saturation.eta_trainable)

    def _blocks(self):
        blocks = self.core.layout.prefixed('core.')
        if self.beta_trainable:
            blocks.append(('gate.beta_raw', (1,)))
        if self.eta_trainable:
            blocks.append(('sat.eta_raw', (1,)))
        return blocks

    def init_params(self, seed=None):
        core = self.core.init_params(seed)
        blocks = {'core.' + k: v for k, v in core.blocks().items()}
        if self.beta_trainable:
            blocks['gate.beta_raw'] = raw_from_positive(self.gate.beta)
        if self.eta_trainable:
            blocks['sat.eta_raw'] = raw_from_positive(self.saturation.eta)
        return self.param_vec(self.layout.pack(blocks))

    def core_params(self, theta):
        """The ``core.`` slice of θ as a parameter vector of the core model."""
        values = self._values(theta)
        entries = [e for e in self.layout if e.name.startswith('core.')]
        stop = entries[-1].offset + self.layout.block_size(entries[-1].name)
        return self.core.param_vec(values[:stop])

    def beta(self, theta):
        if self.gate is None:
            return None
        if self.beta_trainable:
            raw = self.layout.unpack(self._values(theta))['gate.beta_raw'][0]
            return float(positive_from_raw(raw))
        return self.gate.beta

    def eta(self, theta):
        if self.saturation is None or self.saturation.mode != 'smooth':
            return None
        if self.eta_trainable:
            raw = self.layout.unpack(self._values(theta))['sat.eta_raw'][0]
            return float(positive_from_raw(raw))
        return self.saturation.eta

    def output_bounds(self, X):
        """Per-row saturation bounds, including input-rate limits."""
        sat = self.saturation
        lo = np.full(X.shape[0], sat.y_min)
        hi = np.full(X.shape[0], sat.y_max)
        from_rate_lo = np.zeros(X.shape[0], dtype=bool)
        from_rate_hi = np.zeros(X.shape[0], dtype=bool)
        if sat.rate_index is not None:
            ref = X[:, sat.rate_index]
            from_rate_lo = ref + sat.rate_min > lo
            from_rate_hi = ref + sat.rate_max < hi
            lo = np.where(from_rate_lo, ref + sat.rate_min, lo)
            hi = np.where(from_rate_hi, ref + sat.rate_max, hi)
        return lo, hi, from_rate_lo, from_rate_hi

    def _forward(self, p, X):
        core_p = {k[len('core.'):]: v for k, v in p.items() if k.startswith('core.')}
        v, core_cache = self.core._forward(core_p, X)
        cache = {'core': (core_p, core_cache), 'v': v}
        u = v
        if self.gate is not None:
            if self.beta_trainable:
                beta = float(positive_from_raw(p['gate.beta_raw'][0]))
            else:
                beta = self.gate.beta
            delta, d_beta, d_X = _indicator(self.gate, X, beta)
            w = X @ self.w_c + self.w_d
            u = delta * w + (1.0 - delta) * v
            cache.update(delta=delta, d_beta=d_beta, d_X=d_X, w=w)
        if self.saturation is None:
            return u, cache
        if self.saturation.mode == 'hard':
            lo, hi, rate_lo, rate_hi = self.output_bounds(X)
            low = np.maximum(u, lo)
            y = np.minimum(low, hi)
            at_hi = low > hi
            at_lo = ~at_hi & (u < lo)
            cache.update(d_u=(~at_hi & ~at_lo).astype(float),
                         d_ref=(at_hi & rate_hi) | (at_lo & rate_lo))
        else:
            sat = self.saturation
            eta = (float(positive_from_raw(p['sat.eta_raw'][0]))
                   if self.eta_trainable else sat.eta)
            y, d_u, d_eta = _sat_smooth_parts(u, sat.y_min, sat.y_max, eta)
            cache.update(d_u=d_u, d_eta=d_eta)
        return y, cache

    def _backward(self, p, X, cache, g):
        grads = {}
        g_X = np.zeros_like(X)
        g_u = g
        if self.saturation is not None:
            g_u = g * cache['d_u']
            if self.saturation.mode == 'hard':
                if self.saturation.rate_index is not None:
                    g_X[:, self.saturation.rate_index] += g * cache['d_ref']
            elif self.eta_trainable:
                grads['sat.eta_raw'] = np.array(
                    [np.sum(g * cache['d_eta']) * sigmoid(p['sat.eta_raw'][0])])
        g_v = g_u
        if self.gate is not None:
            delta = cache['delta']
            g_v = g_u * (1.0 - delta)
            g_delta = g_u * (cache['w'] - cache['v'])
            g_X += (g_u * delta)[:, None] * self.w_c + g_delta[:, None] * cache['d_X']
            if self.beta_trainable:
                grads['gate.beta_raw'] = np.array(
                    [np.sum(g_delta * cache['d_beta']) * sigmoid(p['gate.beta_raw'][0])])
        core_p, core_cache = cache['core']
        core_grads, core_g_X = self.core._backward(core_p, X, core_cache, g_v)
        grads.update({'core.' + k: v for k, v in core_grads.items()})
        return grads, g_X + core_g_X
