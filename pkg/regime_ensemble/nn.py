""" A small float64 autodiff kernel: layers with explicit backward passes,
Adam, a seeded mini-batch training loop and finite-difference checking.

Layers take batch-first arrays. Sequence layers use (batch, time, channels).

"""
import logging

import numpy as np
from atom.api import Atom, Dict, Float, Int, List, Str, Value

from regime_ensemble.errors import ConfigurationError, InputError, ShapeError, TrainingError
from regime_ensemble.model.base import Attributes, array_from_archive, array_to_archive

log = logging.getLogger(__name__)


class NetParams(Attributes):
    epochs = Int(30)
    batch_size = Int(64)
    lr = Float(1e-3)
    beta1 = Float(0.9)
    beta2 = Float(0.999)
    eps = Float(1e-8)
    seed = Int(0)

    #: training aborts once the epoch loss exceeds this multiple of the initial loss
    divergence_factor = Float(1e6)

    def validate(self):
        if self.epochs < 1:
            raise ConfigurationError('epochs', "must be at least 1")
        if self.batch_size < 1:
            raise ConfigurationError('batch_size', "must be at least 1")
        if not self.lr > 0:
            raise ConfigurationError('lr', "must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError('beta1', "moment decays must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigurationError('eps', "must be positive")
        return self


#------------------------------------------------------------------------------
# Layers
#------------------------------------------------------------------------------

class Layer(Atom):

    #: name -> parameter array
    params = Dict(Str(), Value())

    #: name -> gradient array, same shapes as params
    grads = Dict(Str(), Value())

    _cache = Value()

    @property
    def fan_in(self):
        return 1

    def initialize(self, rng):
        bound = 1.0 / np.sqrt(self.fan_in)
        for name in sorted(self.params):
            shape = self.params[name].shape
            self.params[name] = rng.uniform(-bound, bound, size=shape)
        self.zero_grad()

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def describe(self):
        return {'type': type(self).__name__}


class Dense(Layer):
    n_in = Int()
    n_out = Int()

    def __init__(self, n_in, n_out, **kwargs):
        super(Dense, self).__init__(n_in=n_in, n_out=n_out, **kwargs)
        self.params = {'weight': np.zeros((n_in, n_out)), 'bias': np.zeros(n_out)}
        self.zero_grad()

    @property
    def fan_in(self):
        return self.n_in

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError("dense layer expects %d inputs, got %d" % (self.n_in, x.shape[-1]))
        self._cache = x
        return x @ self.params['weight'] + self.params['bias']

    def backward(self, grad_out):
        x = self._cache
        self.grads['weight'] += x.T @ grad_out
        self.grads['bias'] += grad_out.sum(axis=0)
        return grad_out @ self.params['weight'].T

    def describe(self):
        return {'type': 'Dense', 'n_in': self.n_in, 'n_out': self.n_out}


class Conv1d(Layer):
    """ Causal 1-D convolution along time, output length equals input length.

        z_k(tau) = sum_c sum_r w[k, c, r] * x_c(tau - r) + b_k

    with x_c(tau - r) = 0 before the window start.

    """

    c_in = Int()
    c_out = Int()
    taps = Int()

    def __init__(self, c_in, c_out, taps, **kwargs):
        if taps < 1:
            raise ConfigurationError('kernel_size', "must be at least 1")
        super(Conv1d, self).__init__(c_in=c_in, c_out=c_out, taps=taps, **kwargs)
        self.params = {'weight': np.zeros((c_out, c_in, taps)), 'bias': np.zeros(c_out)}
        self.zero_grad()

    @property
    def fan_in(self):
        return self.c_in * self.taps

    def _shifted(self, padded, r, length):
        start = self.taps - 1 - r
        return padded[:, start:start + length, :]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeError("conv1d expects (batch, time, %d), got %s" % (self.c_in, x.shape))
        n, length, _ = x.shape
        padded = np.concatenate([np.zeros((n, self.taps - 1, self.c_in)), x], axis=1)
        self._cache = padded
        w = self.params['weight']
        out = np.broadcast_to(self.params['bias'], (n, length, self.c_out)).copy()
        for r in range(self.taps):
            out += self._shifted(padded, r, length) @ w[:, :, r].T
        return out

    def backward(self, grad_out):
        padded = self._cache
        n, length, _ = grad_out.shape
        w = self.params['weight']
        grad_padded = np.zeros_like(padded)
        flat_grad = grad_out.reshape(-1, self.c_out)
        for r in range(self.taps):
            shifted = self._shifted(padded, r, length).reshape(-1, self.c_in)
            self.grads['weight'][:, :, r] += flat_grad.T @ shifted
            start = self.taps - 1 - r
            grad_padded[:, start:start + length, :] += grad_out @ w[:, :, r]
        self.grads['bias'] += flat_grad.sum(axis=0)
        return grad_padded[:, self.taps - 1:, :]

    def describe(self):
        return {'type': 'Conv1d', 'c_in': self.c_in, 'c_out': self.c_out, 'taps': self.taps}


class ReLU(Layer):

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad_out):
        return np.where(self._cache, grad_out, 0.0)


class GlobalAvgPool(Layer):
    """ Mean over the time axis: (batch, time, channels) -> (batch, channels). """

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=1)

    def backward(self, grad_out):
        n, length, channels = self._cache
        return np.broadcast_to(grad_out[:, None, :] / length, (n, length, channels)).copy()


class Flatten(Layer):

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._cache)


class Sequential(Atom):
    layers = List(Layer)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def initialize(self, rng):
        for layer in self.layers:
            if layer.params:
                layer.initialize(rng)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        """ Flat ``{'<layer index>.<name>': array}`` view; arrays are shared, not copied. """
        return {'%d.%s' % (i, k): v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def gradients(self):
        return {'%d.%s' % (i, k): v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.parameters().values()))

    def to_archive(self):
        return {name: array_to_archive(value) for name, value in sorted(self.parameters().items())}

    def load_archive(self, archive):
        own = self.parameters()
        if sorted(own) != sorted(archive):
            raise ShapeError("parameter names differ: %s vs %s" % (sorted(own), sorted(archive)))
        for name, record in archive.items():
            index, key = name.split('.', 1)
            value = array_from_archive(record)
            if value.shape != own[name].shape:
                raise ShapeError("parameter %s has shape %s, expected %s" % (name, value.shape, own[name].shape))
            self.layers[int(index)].params[key] = value
        self.zero_grad()
        return self


#------------------------------------------------------------------------------
# Optimization
#------------------------------------------------------------------------------

class AdamState(Atom):
    step = Int(0)
    m = Dict()
    v = Dict()
    lr = Float(1e-3)
    beta1 = Float(0.9)
    beta2 = Float(0.999)
    eps = Float(1e-8)

    @classmethod
    def from_params(cls, params):
        return cls(lr=params.lr, beta1=params.beta1, beta2=params.beta2, eps=params.eps)


def adam_step(params, grads, state):
    """ One bias-corrected Adam update of ``params`` in place. """
    state.step += 1
    t = state.step
    for name, value in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m = state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def mse(prediction, target):
    diff = prediction - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def train_network(net, inputs, loss_fn, params, initialize=True):
    """ Seeded mini-batch Adam on ``loss_fn(output, batch_rows) -> (loss, grad)``.

    Returns the per-epoch mean training loss history.

    """
    params.validate()
    n = inputs.shape[0]
    if n == 0:
        raise InputError("cannot train on an empty sample set")
    rng = np.random.default_rng(params.seed)
    if initialize:
        net.initialize(rng)
    state = AdamState.from_params(params)

    all_rows = np.arange(n)
    initial, _ = loss_fn(net.forward(inputs), all_rows)
    if not np.isfinite(initial):
        raise TrainingError("initial loss is not finite")
    ceiling = params.divergence_factor * max(initial, np.finfo(float).tiny)

    history = []
    batch = 0
    for epoch in range(params.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, params.batch_size):
            rows = order[start:start + params.batch_size]
            output = net.forward(inputs[rows])
            loss, grad = loss_fn(output, rows)
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss", batch=batch)
            net.zero_grad()
            net.backward(grad)
            adam_step(net.parameters(), net.gradients(), state)
            total += loss * rows.shape[0]
            batch += 1
        history.append(total / n)
        log.debug("epoch %d/%d loss %.6g", epoch + 1, params.epochs, history[-1])
        if history[-1] > ceiling:
            raise TrainingError("training diverged at epoch %d (loss %.3g)" % (epoch + 1, history[-1]))
    return history


#------------------------------------------------------------------------------
# Gradient checking
#------------------------------------------------------------------------------

class GradientCheck(Atom):
    max_error = Float(0.0)
    worst = Str()
    checked = Int(0)
    skipped = Int(0)


def _central(loss_of, array, index, step):
    original = array[index]
    array[index] = original + step
    plus = loss_of()
    array[index] = original - step
    minus = loss_of()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def check_gradients(loss_of, parameters, gradients, step=1e-5, floor=1e-6):
    """ Compare analytic ``gradients`` with central differences of ``loss_of()``.

    Entries whose estimate changes between ``step`` and ``step / 2`` sit on a
    ReLU kink; they are counted as skipped instead of compared.

    """
    report = GradientCheck()
    for name in sorted(parameters):
        array = parameters[name]
        analytic = gradients[name]
        for index in np.ndindex(array.shape):
            numeric = _central(loss_of, array, index, step)
            half = _central(loss_of, array, index, step / 2)
            if abs(numeric - half) > 1e-6 * max(abs(numeric), floor):
                report.skipped += 1
                continue
            error = abs(analytic[index] - numeric) / max(abs(analytic[index]) + abs(numeric), floor)
            report.checked += 1
            if error > report.max_error:
                report.max_error = error
                report.worst = '%s%s' % (name, list(index))
    return report
