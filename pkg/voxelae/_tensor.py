#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""Dense tensors with a reverse-mode tape.

Every differentiable function in this module (and in ``_conv``) computes its
result with numpy and, when any input requires a gradient, records a node
holding the inputs and a vector-Jacobian product. ``backward`` replays the
recorded nodes reachable from a scalar loss in reverse execution order.
"""

import itertools
import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import expit, log_softmax, softmax


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible with an operation."""


_state = threading.local()
_sequence = itertools.count()


def grad_enabled():
    '''Return `True` if ops on the current thread record graph nodes.'''
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    '''Disable graph recording on the current thread inside the block.'''
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Node(object):
    __slots__ = ('seq', 'inputs', 'vjp')

    def __init__(self, inputs, vjp):
        self.seq = next(_sequence)
        self.inputs = inputs
        self.vjp = vjp


class Tensor(object):
    '''N-dimensional array participating in the autodiff tape.

    Parameters
    ----------
    data : array_like
        Values. Integer and boolean input is cast to `np.float32`; floating
        input keeps its precision so that gradient checks can run the same
        kernels in double precision.
    requires_grad : bool, optional
        If `True` the tensor is a leaf whose `grad` is populated by
        `backward`.
    name : str, optional
        Label used in error messages and checkpoints.
    '''

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, name=self.name)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = '' if self.name is None else ' %r' % self.name
        return 'Tensor%s(shape=%s, dtype=%s, requires_grad=%s)' % (
            label, self.shape, self.dtype, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value))


def _make(data, inputs, vjp):
    '''Wrap `data` and record a node if any input needs a gradient.'''
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(tuple(inputs), vjp)
    return out


def _unbroadcast(grad, shape):
    '''Sum `grad` down to `shape` after numpy broadcasting.'''
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape)
                 if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Graph(object):
    '''Nodes reachable from an output, in execution order.

    Parameters
    ----------
    tensors : list of Tensor
        Non-leaf tensors sorted by the sequence number of their node, i.e. the
        order in which the forward pass produced them.
    '''

    def __init__(self, tensors):
        self.tensors = tensors

    @classmethod
    def from_output(cls, output):
        seen = set()
        found = []
        stack = [output]
        while stack:
            t = stack.pop()
            if id(t) in seen or t._node is None:
                continue
            seen.add(id(t))
            found.append(t)
            stack.extend(t._node.inputs)
        found.sort(key=lambda t: t._node.seq)
        return cls(found)

    def __len__(self):
        return len(self.tensors)

    def backward(self, output, grad):
        grads = {id(output): grad}
        for t in reversed(self.tensors):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            for parent, pg in zip(t._node.inputs, t._node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._node is None:
                    pg = np.asarray(pg, dtype=parent.data.dtype)
                    if parent.grad is None:
                        parent.grad = pg.copy()
                    else:
                        parent.grad = parent.grad + pg
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def backward(loss, inputs=None):
    '''Populate `grad` of every leaf that `loss` depends on.

    Parameters
    ----------
    loss : Tensor
        Scalar (size one) tensor.
    inputs : iterable of Tensor, optional
        Leaves that should end up with a gradient buffer even when the loss
        does not depend on them (their gradient is then all zeros).

    Raises
    ------
    ValueError
        If `loss` is not a scalar.
    '''
    if loss.size != 1:
        raise ValueError('backward needs a scalar loss, got shape %s.'
                         % (loss.shape,))
    if inputs is not None:
        for t in inputs:
            if t.requires_grad and t.grad is None:
                t.zero_grad()
    if loss._node is None:
        return
    Graph.from_output(loss).backward(loss, np.ones_like(loss.data))


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), vjp)


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), vjp)


def tensor_sum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(out, (a,), vjp)


def tensor_mean(a, axis=None, keepdims=False):
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size // max(np.asarray(out).size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)
    return _make(out, (a,), vjp)


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError('Cannot reshape %s into %s.' % (a.shape, shape))
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def flatten(a):
    '''Collapse every axis but the first.'''
    return reshape(a, (a.shape[0], -1))


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    s = expit(a.data)
    return _make(s, (a,), lambda g: (g * s * (1 - s),))


def silu(a):
    '''x * sigmoid(x), elementwise.'''
    s = expit(a.data)

    def vjp(g):
        return (g * (s * (1 + a.data * (1 - s))),)
    return _make(a.data * s, (a,), vjp)


def dense(x, weight, bias=None):
    '''Fully connected layer, `x @ weight + bias`.

    Parameters
    ----------
    x : Tensor
        Shape (N, F).
    weight : Tensor
        Shape (F, G).
    bias : Tensor, optional
        Shape (G,).
    '''
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError('dense input %s does not match weight %s.'
                         % (x.shape, weight.shape))
    out = x.data @ weight.data
    inputs = [x, weight]
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError('dense bias %s does not match weight %s.'
                             % (bias.shape, weight.shape))
        out = out + bias.data
        inputs.append(bias)

    def vjp(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads
    return _make(out, inputs, vjp)


def global_avg_pool3d(x):
    '''Mean over the spatial axes of an (N, C, D, H, W) tensor.'''
    if x.ndim != 5:
        raise ShapeError('global_avg_pool3d expects a 5-D tensor, got %s.'
                         % (x.shape,))
    count = x.shape[2] * x.shape[3] * x.shape[4]

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None, None] / count,
                                x.shape).copy(),)
    return _make(x.data.mean(axis=(2, 3, 4)), (x,), vjp)


def counter_uniform(seed, stream, step, shape):
    '''Uniform [0, 1) numbers from a counter-based generator.

    The values depend only on (`seed`, `stream`, `step`) and on the element
    index, never on how many numbers other callers drew before.
    '''
    bitgen = np.random.Philox(key=[int(seed) % 2 ** 64, int(stream) % 2 ** 64],
                              counter=[0, 0, int(step) % 2 ** 64, 0])
    return np.random.Generator(bitgen).random(shape)


def dropout(x, rate, training, seed=0, stream=0, step=0):
    '''Zero each element with probability `rate` in training mode.

    Survivors are scaled by 1 / (1 - `rate`); evaluation mode and `rate` 0
    return `x` unchanged.
    '''
    if not 0 <= rate < 1:
        raise ValueError('Dropout rate must be in [0, 1), got %r.' % rate)
    if not training or rate == 0:
        return x
    keep = counter_uniform(seed, stream, step, x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


class BatchNormStats(object):
    '''Running mean and variance of one batch-norm layer.'''

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batch_norm(x, gamma, beta, stats=None, training=True, momentum=0.1,
               eps=1e-5):
    '''Normalize each channel of `x` over all other axes.

    Parameters
    ----------
    x : Tensor
        Shape (N, C, ...) with at least two axes.
    gamma, beta : Tensor
        Shape (C,).
    stats : BatchNormStats, optional
        Running statistics. Updated in place in training mode, used in
        evaluation mode. Evaluation without stats uses mean 0, variance 1.
    training : bool
        Use batch statistics (`True`) or running statistics (`False`).
    momentum : float
        Weight of the current batch in the running-statistic update.
    eps : float
        Variance offset.
    '''
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError('batch_norm of %s needs gamma/beta of shape (%d,), '
                         'got %s and %s.' % (x.shape, channels, gamma.shape,
                                             beta.shape))
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, channels) + (1,) * (x.ndim - 2)
    count = x.size // channels
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if stats is not None:
            unbiased = var * count / max(count - 1, 1)
            stats.mean[:] = (1 - momentum) * stats.mean + momentum * mu
            stats.var[:] = (1 - momentum) * stats.var + momentum * unbiased
    elif stats is not None:
        mu, var = stats.mean, stats.var
    else:
        mu = np.zeros(channels, dtype=x.dtype)
        var = np.ones(channels, dtype=x.dtype)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def vjp(g):
        g_beta = g.sum(axis=axes)
        g_gamma = (g * xhat).sum(axis=axes)
        scale = (gamma.data * inv_std).reshape(bshape)
        if training:
            g_x = scale / count * (count * g - g_beta.reshape(bshape)
                                   - xhat * g_gamma.reshape(bshape))
        else:
            g_x = g * scale
        return g_x, g_gamma, g_beta
    return _make(out, (x, gamma, beta), vjp)


def mse_loss(pred, target):
    '''Mean over all elements of (pred - target)^2.'''
    target = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError('mse_loss prediction %s and target %s differ.'
                         % (pred.shape, target.shape))
    diff = pred.data - target

    def vjp(g):
        return (g * 2.0 * diff / diff.size,)
    return _make(np.mean(diff * diff), (pred,), vjp)


def cross_entropy_loss(logits, labels):
    '''Mean softmax cross-entropy of (N, K) logits against integer labels.'''
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError('cross_entropy_loss logits %s and labels %s differ.'
                         % (logits.shape, labels.shape))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = -log_softmax(logits.data, axis=1)[rows, labels].mean()

    def vjp(g):
        p = softmax(logits.data, axis=1)
        p[rows, labels] -= 1
        return (g * p / n,)
    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), vjp)
