"""
Parametric model families with batched forward passes and reverse-mode
gradients.

Every model maps an ``(N, n)`` batch of inputs to ``N`` scalar outputs. The
reverse pass takes one seed per sample and returns the gradient of
``sum_k seed_k * y_k`` with respect to the flat parameter vector and to each
input row, which is all a sum-of-sample-terms training loss needs.
"""
import numpy as np

from ..utils.exceptions import DimensionError, ModelEvaluationError
from .activations import get_activation, softplus, sigmoid
from .params import ParamLayout, ParamVec, glorot_uniform
from .specs import ModelSpec

__all__ = ['Model', 'MLP', 'MaxAffine', 'InputConvexNN', 'EnvelopeNN',
           'build_model', 'mlp_eval', 'model_grad', 'max_affine_eval',
           'icnn_eval', 'envelope_nn_eval', 'ENVELOPE_FLOOR']

#: Structural lower bound added to every envelope output.
ENVELOPE_FLOOR = 1e-8


def _check_finite(arr, layer):
    bad = ~np.isfinite(arr)
    if bad.any():
        sample = int(np.argwhere(bad)[0][0])
        raise ModelEvaluationError("non-finite intermediate value",
                                   layer=layer, sample=sample)


class Model:
    """
    Base class of the model families.

    Subclasses declare their parameter blocks in ``_blocks`` and implement
    ``_forward(p, X) -> (y, cache)`` and ``_backward(p, cache, g) ->
    (grads, g_X)`` on unpacked parameter blocks ``p``.
    """

    family = None

    def __init__(self, spec):
        if not isinstance(spec, ModelSpec):
            raise TypeError("expected a ModelSpec, got {!r}".format(type(spec)))
        self.spec = spec
        self.n_inputs = spec.n_inputs
        self.layout = ParamLayout(self._blocks())

    def __repr__(self):
        return "<{} n_inputs={} n_params={}>".format(
            type(self).__name__, self.n_inputs, self.layout.size)

    def _blocks(self):
        raise NotImplementedError

    def _init_block(self, rng, name, shape):
        if len(shape) == 2:
            return glorot_uniform(rng, shape)
        return np.zeros(shape)

    def init_params(self, seed=None):
        """
        Glorot-uniform weights and zero biases drawn from ``seed``.

        ``seed`` may be an integer, a `~numpy.random.SeedSequence` or a
        `~numpy.random.Generator`.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        blocks = {e.name: self._init_block(rng, e.name, e.shape) for e in self.layout}
        return ParamVec(self.layout.pack(blocks), self.layout)

    def param_vec(self, values):
        return ParamVec(values, self.layout)

    def _values(self, theta):
        if isinstance(theta, ParamVec):
            if theta.layout != self.layout:
                raise DimensionError("parameter layout does not belong to this "
                                     "model", layer='parameters')
            return theta.values
        return np.asarray(theta, dtype=float)

    def _inputs(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise DimensionError("input of shape {} for a model with {} inputs"
                                 .format(np.shape(x), self.n_inputs), layer='input')
        return X, single

    def forward(self, theta, X):
        """
        Outputs for the rows of ``X`` and the cache `backward` needs.
        """
        X, _ = self._inputs(X)
        p = self.layout.unpack(self._values(theta))
        y, cache = self._forward(p, X)
        return y, (p, X, cache)

    def backward(self, cache, seed):
        """
        Gradients of ``sum(seed * y)`` with respect to θ and to the inputs.
        """
        p, X, inner = cache
        g = np.broadcast_to(np.asarray(seed, dtype=float), (X.shape[0],))
        grads, g_X = self._backward(p, X, inner, g)
        g_theta = self.layout.pack(grads)
        _check_finite(g_theta[None, :], layer='gradient')
        return g_theta, g_X

    def predict(self, theta, x):
        """Model output at a point (scalar) or at each row of a batch."""
        X, single = self._inputs(x)
        y, _ = self.forward(theta, X)
        return float(y[0]) if single else y

    def grad(self, theta, x, seed_gradient=1.0):
        """
        Reverse-mode derivatives of ``seed_gradient * f(x; θ)``.

        Returns
        -------
        g_theta : ndarray
        g_x : ndarray
            Shape of ``x``.
        """
        X, single = self._inputs(x)
        _, cache = self.forward(theta, X)
        g_theta, g_X = self.backward(cache, seed_gradient)
        return g_theta, (g_X[0] if single else g_X)


class MLP(Model):
    """
    Fully connected network with a linear output layer.

    Hidden layer ``i`` computes ``h_i = a_i(h_{i-1} W_iᵀ + b_i)`` and the
    output is ``h_L W_outᵀ + b_out``, plus ``X_B Vᵀ`` over the bypass columns
    ``B`` when the linear bypass is on. Without hidden layers the model is affine.
    """

    family = 'mlp'

    def __init__(self, spec):
        super().__init__(spec)
        self.acts = [get_activation(a) for a in spec.activations]

    def _blocks(self):
        blocks = []
        prev = self.spec.n_inputs
        for i, width in enumerate(self.spec.widths, start=1):
            blocks += [('W{}'.format(i), (width, prev)), ('b{}'.format(i), (width,))]
            prev = width
        blocks += [('W_out', (1, prev)), ('b_out', (1,))]
        cols = self.spec.bypass_columns
        if cols:
            blocks.append(('V', (1, len(cols))))
        return blocks

    def _forward(self, p, X):
        hs = [X]
        zs = []
        h = X
        for i, act in enumerate(self.acts, start=1):
            z = h @ p['W{}'.format(i)].T + p['b{}'.format(i)]
            h = act.func(z)
            _check_finite(h, layer=i)
            zs.append(z)
            hs.append(h)
        y = (h @ p['W_out'].T)[:, 0] + p['b_out'][0]
        cols = self.spec.bypass_columns
        if cols:
            y = y + (X[:, list(cols)] @ p['V'].T)[:, 0]
        _check_finite(y, layer=len(self.acts) + 1)
        return y, (zs, hs)

    def _backward(self, p, X, cache, g):
        zs, hs = cache
        grads = {}
        g_col = g[:, None]
        grads['W_out'] = g_col.T @ hs[-1]
        grads['b_out'] = np.array([g.sum()])
        g_h = g_col @ p['W_out']
        for i in range(len(self.acts), 0, -1):
            g_z = g_h * self.acts[i - 1].deriv(zs[i - 1])
            _check_finite(g_z, layer=i)
            grads['W{}'.format(i)] = g_z.T @ hs[i - 1]
            grads['b{}'.format(i)] = g_z.sum(axis=0)
            g_h = g_z @ p['W{}'.format(i)]
        g_X = g_h
        cols = self.spec.bypass_columns
        if cols:
            grads['V'] = g_col.T @ X[:, list(cols)]
            g_X = g_X.copy()
            g_X[:, list(cols)] += g_col @ p['V']
        return grads, g_X


class MaxAffine(Model):
    """
    Convex piecewise-affine model ``max_i (A_i x - b_i)``.

    The subgradient is the one of the first attaining row.
    """

    family = 'max-affine'

    def _blocks(self):
        n_f = self.spec.widths[0]
        return [('A', (n_f, self.spec.n_inputs)), ('b', (n_f,))]

    def _init_block(self, rng, name, shape):
        # distinct random hyperplanes; all-zero pieces would tie everywhere
        if name == 'A':
            return rng.uniform(-1.0, 1.0, size=shape)
        return rng.uniform(-0.1, 0.1, size=shape)

    def _forward(self, p, X):
        pieces = X @ p['A'].T - p['b']
        _check_finite(pieces, layer=1)
        idx = np.argmax(pieces, axis=1)
        return pieces[np.arange(X.shape[0]), idx], idx

    def _backward(self, p, X, idx, g):
        gA = np.zeros_like(p['A'])
        gb = np.zeros_like(p['b'])
        np.add.at(gA, idx, g[:, None] * X)
        np.add.at(gb, idx, -g)
        return {'A': gA, 'b': gb}, g[:, None] * p['A'][idx]


class InputConvexNN(Model):
    """
    Input-convex network.

    ``z_1 = softplus(X V_1ᵀ + b_1)``,
    ``z_k = softplus(z_{k-1} (W_k∘W_k)ᵀ + X V_kᵀ + b_k)`` and
    ``y = z_L (W_out∘W_out)ᵀ + X V_outᵀ + b_out``. Squaring the stored
    hidden-to-hidden weights keeps them nonnegative, so ``y`` is convex in
    ``x`` for every parameter vector.
    """

    family = 'input-convex-nn'

    def _blocks(self):
        n = self.spec.n_inputs
        blocks = []
        prev = None
        for k, width in enumerate(self.spec.widths, start=1):
            if prev is not None:
                blocks.append(('W{}'.format(k), (width, prev)))
            blocks += [('V{}'.format(k), (width, n)), ('b{}'.format(k), (width,))]
            prev = width
        if prev is not None:
            blocks.append(('W_out', (1, prev)))
        blocks += [('V_out', (1, n)), ('b_out', (1,))]
        return blocks

    def _forward(self, p, X):
        pres, zs = [], []
        z = None
        for k in range(1, len(self.spec.widths) + 1):
            pre = X @ p['V{}'.format(k)].T + p['b{}'.format(k)]
            if z is not None:
                W = p['W{}'.format(k)]
                pre = pre + z @ (W * W).T
            z = softplus(pre)
            _check_finite(z, layer=k)
            pres.append(pre)
            zs.append(z)
        y = (X @ p['V_out'].T)[:, 0] + p['b_out'][0]
        if z is not None:
            W = p['W_out']
            y = y + (z @ (W * W).T)[:, 0]
        _check_finite(y, layer=len(zs) + 1)
        return y, (pres, zs)

    def _backward(self, p, X, cache, g):
        pres, zs = cache
        grads = {}
        g_col = g[:, None]
        grads['V_out'] = g_col.T @ X
        grads['b_out'] = np.array([g.sum()])
        g_X = g_col @ p['V_out']
        if not zs:
            return grads, g_X
        W = p['W_out']
        grads['W_out'] = 2.0 * W * (g_col.T @ zs[-1])
        g_z = g_col @ (W * W)
        for k in range(len(zs), 0, -1):
            g_pre = g_z * sigmoid(pres[k - 1])
            _check_finite(g_pre, layer=k)
            grads['V{}'.format(k)] = g_pre.T @ X
            grads['b{}'.format(k)] = g_pre.sum(axis=0)
            g_X = g_X + g_pre @ p['V{}'.format(k)]
            if k > 1:
                W = p['W{}'.format(k)]
                grads['W{}'.format(k)] = 2.0 * W * (g_pre.T @ zs[k - 2])
                g_z = g_pre @ (W * W)
        return grads, g_X


class EnvelopeNN(Model):
    """
    Strictly positive two-hidden-layer network used as an error envelope.

    ``ε(x) = a⁺(a(x W_1ᵀ + b_1) W_2ᵀ + b_2) (W_3∘W_3)ᵀ + softplus(b_3) + 1e-8``
    with a nonnegative outer activation ``a⁺``.
    """

    family = 'envelope-nn'

    def __init__(self, spec):
        super().__init__(spec)
        self.act, self.act_plus = (get_activation(a) for a in spec.activations)

    def _blocks(self):
        w1, w2 = self.spec.widths
        return [('W1', (w1, self.spec.n_inputs)), ('b1', (w1,)),
                ('W2', (w2, w1)), ('b2', (w2,)),
                ('W3', (1, w2)), ('b3', (1,))]

    def _forward(self, p, X):
        z1 = X @ p['W1'].T + p['b1']
        h1 = self.act.func(z1)
        _check_finite(h1, layer=1)
        z2 = h1 @ p['W2'].T + p['b2']
        h2 = self.act_plus.func(z2)
        _check_finite(h2, layer=2)
        W3 = p['W3']
        y = (h2 @ (W3 * W3).T)[:, 0] + softplus(p['b3'][0]) + ENVELOPE_FLOOR
        _check_finite(y, layer=3)
        return y, (z1, h1, z2, h2)

    def _backward(self, p, X, cache, g):
        z1, h1, z2, h2 = cache
        g_col = g[:, None]
        W3 = p['W3']
        grads = {'W3': 2.0 * W3 * (g_col.T @ h2),
                 'b3': np.array([g.sum() * sigmoid(p['b3'][0])])}
        g_z2 = (g_col @ (W3 * W3)) * self.act_plus.deriv(z2)
        grads['W2'] = g_z2.T @ h1
        grads['b2'] = g_z2.sum(axis=0)
        g_z1 = (g_z2 @ p['W2']) * self.act.deriv(z1)
        _check_finite(g_z1, layer=1)
        grads['W1'] = g_z1.T @ X
        grads['b1'] = g_z1.sum(axis=0)
        return grads, g_z1 @ p['W1']


_FAMILY_CLASSES = {cls.family: cls for cls in (MLP, MaxAffine, InputConvexNN, EnvelopeNN)}


def build_model(spec):
    """
    Instantiate the model described by ``spec``.

    Specs with a gate or a saturation produce a
    `~wcreg.models.gating.SurrogateModel` wrapping the core family.
    """
    if spec.is_composite:
        from .gating import SurrogateModel
        return SurrogateModel(spec)
    return _FAMILY_CLASSES[spec.family](spec)


def _as_model(spec_or_model):
    if isinstance(spec_or_model, Model):
        return spec_or_model
    return build_model(spec_or_model)


def mlp_eval(spec, theta, x):
    """Forward value of an ``mlp`` family model at ``x``."""
    return _as_model(spec).predict(theta, x)


def model_grad(spec, theta, x, seed_gradient=1.0):
    """
    Exact reverse-mode derivatives of ``seed_gradient * f(x; θ)``.

    Returns ``(dθ, dx)``; works for every family and composition.
    """
    return _as_model(spec).grad(theta, x, seed_gradient)


def max_affine_eval(A, b, x):
    """
    Evaluate ``max_i (A_i x - b_i)``.

    Returns
    -------
    value : float
    subgradient : ndarray
        Row ``A_i`` of the first attaining piece.
    index : int
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if A.shape[0] < 1 or b.shape != (A.shape[0],):
        raise DimensionError("max-affine needs n_f >= 1 rows and a matching "
                             "offset vector", layer='b')
    if x.shape != (A.shape[1],):
        raise DimensionError("point of dimension {} for {} columns"
                             .format(x.size, A.shape[1]), layer='input')
    pieces = A @ x - b
    index = int(np.argmax(pieces))
    return float(pieces[index]), A[index].copy(), index


def icnn_eval(spec, theta, x):
    """Forward value of an ``input-convex-nn`` model at ``x``."""
    return _as_model(spec).predict(theta, x)


def envelope_nn_eval(spec, theta_psi, x):
    """Envelope value ``ε(x; ψ) > 0`` of an ``envelope-nn`` model."""
    return _as_model(spec).predict(theta_psi, x)
