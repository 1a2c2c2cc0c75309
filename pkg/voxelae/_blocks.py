#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""Network building blocks.

A block is described by an immutable `BlockSpec` and instantiated as a
`BlockParams` (named parameter tensors plus batch-norm running statistics).
Parameter shapes are a pure function of the BlockSpec, so `count_params`
needs no instantiated weights.
"""

from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np

from voxelae._conv import (conv3d, conv3d_transpose, depthwise_conv3d,
                           depthwise_conv3d_transpose, pointwise_conv3d,
                           max_pool3d, conv_output_extent,
                           transpose_output_extent)
from voxelae._defaults import (DEFAULT_BN_MOMENTUM, DEFAULT_BN_EPS,
                               DEFAULT_SEED)
from voxelae._tensor import (Tensor, ShapeError, BatchNormStats, batch_norm,
                             dense, dropout, flatten, global_avg_pool3d,
                             mul, relu, reshape, sigmoid, silu, add)

KINDS = ('MBConv3D', 'MBConvTranspose3D', 'Conv3D', 'Conv3DTranspose',
         'MaxPool3D', 'Dropout', 'Dense', 'Flatten', 'Reshape')
ACTIVATIONS = {'none': None, 'relu': relu, 'silu': silu, 'sigmoid': sigmoid}

# Order of the positional fields of a model-description line.
_LINE_FIELDS = ('kind', 'c_in', 'c_out', 'kernel', 'stride', 'se_ratio',
                'expand_factor')


@dataclass(frozen=True)
class BlockSpec:
    '''Immutable description of one layer or block.

    Parameters
    ----------
    kind : str
        One of `KINDS`.
    c_in, c_out : int
        Channel counts (features for `Dense`, flat size for `Flatten` and
        `Reshape`).
    kernel : int
        Cubic kernel edge (window edge for `MaxPool3D`).
    stride : int
        1 or 2.
    se_ratio : float
        Squeeze-and-excite bottleneck ratio of MB blocks, 0 disables it.
    expand_factor : int
        Inverted-bottleneck expansion of MB blocks.
    dropout_rate : float
        Drop probability of `Dropout`.
    repeat : int
        Number of convolutions in a `Conv3D` / `Conv3DTranspose` row. A
        `Conv3D` row is an entry convolution c_in -> c_out followed by one
        shared c_out -> c_out kernel applied repeat - 1 times. A
        `Conv3DTranspose` row mirrors it: a shared c_in -> c_in kernel applied
        repeat - 1 times, then the exit convolution c_in -> c_out. When
        c_in == c_out a single kernel is applied repeat times.
    activation : str
        One of `ACTIVATIONS`, applied after every convolution of the row.
    norm : bool
        Batch norm after the convolution (plain convolution rows only).
    bias : bool
        Bias on plain convolutions and dense layers.
    shape : tuple
        Per-sample target shape of `Reshape`.
    '''
    kind: str
    c_in: int
    c_out: int
    kernel: int = 3
    stride: int = 1
    se_ratio: float = 0.0
    expand_factor: int = 1
    dropout_rate: float = 0.0
    repeat: int = 1
    activation: str = 'none'
    norm: bool = False
    bias: bool = True
    shape: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError('%r is not a known block kind. Known kinds are: '
                             '%s.' % (self.kind, ', '.join(KINDS)))
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError('%s channel counts must be >= 1, got %d -> %d.'
                             % (self.kind, self.c_in, self.c_out))
        if self.stride not in (1, 2):
            raise ValueError('%s stride must be 1 or 2, got %r.'
                             % (self.kind, self.stride))
        if self.kernel < 1:
            raise ValueError('%s kernel must be >= 1, got %r.'
                             % (self.kind, self.kernel))
        if not 0 <= self.se_ratio <= 1:
            raise ValueError('%s se_ratio must be in [0, 1], got %r.'
                             % (self.kind, self.se_ratio))
        if self.expand_factor < 1:
            raise ValueError('%s expand_factor must be >= 1, got %r.'
                             % (self.kind, self.expand_factor))
        if not 0 <= self.dropout_rate < 1:
            raise ValueError('%s dropout_rate must be in [0, 1), got %r.'
                             % (self.kind, self.dropout_rate))
        if self.repeat < 1:
            raise ValueError('%s repeat must be >= 1, got %r.'
                             % (self.kind, self.repeat))
        if self.activation not in ACTIVATIONS:
            raise ValueError('%r is not a known activation. Known activations '
                             'are: %s.' % (self.activation,
                                           ', '.join(ACTIVATIONS)))
        if self.norm and self.repeat > 1:
            raise ValueError('%s rows with repeat > 1 cannot use batch norm.'
                             % self.kind)
        object.__setattr__(self, 'shape', tuple(int(s) for s in self.shape))
        if self.kind == 'Reshape' and (
                not self.shape or int(np.prod(self.shape)) != self.c_in or
                self.shape[0] != self.c_out):
            raise ValueError('Reshape of %d values to %s needs c_out == %s.'
                             % (self.c_in, self.shape,
                                self.shape[0] if self.shape else '?'))

    @property
    def hidden(self):
        '''Expanded width of an MB block: factor * C_in or factor * C_out.'''
        if self.kind == 'MBConv3D':
            return self.expand_factor * self.c_in
        if self.kind == 'MBConvTranspose3D':
            return self.expand_factor * self.c_out
        raise AttributeError('%s blocks have no expanded width.' % self.kind)

    @property
    def se_width(self):
        '''Squeeze-and-excite bottleneck width, 0 when disabled.

        The gate acts on the `hidden` channels but its width is
        max(1, round(se_ratio * C_ref)) with C_ref = hidden /
        expand_factor, that is C_in for MBConv3D and C_out for
        MBConvTranspose3D, as in EfficientNet. Mirrored blocks therefore get
        the same gate width.
        Standalone `squeeze_excite` calls with `ratio` measure against the
        channels of their input instead.
        '''
        if self.se_ratio == 0:
            return 0
        ref = self.c_in if self.kind == 'MBConv3D' else self.c_out
        return max(1, int(round(self.se_ratio * ref)))

    @property
    def has_skip(self):
        return (self.kind in ('MBConv3D', 'MBConvTranspose3D') and
                self.stride == 1 and self.c_in == self.c_out)

    def to_line(self):
        '''One line of the model-description text format.'''
        line = '%s %d %d %d %d %r %d' % (self.kind, self.c_in, self.c_out,
                                         self.kernel, self.stride,
                                         float(self.se_ratio),
                                         self.expand_factor)
        extra = []
        if self.dropout_rate:
            extra.append('dropout=%r' % float(self.dropout_rate))
        if self.repeat != 1:
            extra.append('repeat=%d' % self.repeat)
        if self.activation != 'none':
            extra.append('activation=%s' % self.activation)
        if self.norm:
            extra.append('norm=1')
        if not self.bias:
            extra.append('bias=0')
        if self.shape:
            extra.append('shape=%s' % 'x'.join(str(s) for s in self.shape))
        return ' '.join([line] + extra)

    @classmethod
    def from_line(cls, line):
        '''Parse a line written by `to_line`.'''
        tokens = line.split()
        if len(tokens) < len(_LINE_FIELDS):
            raise ValueError('Block line needs at least %d fields (%s), got '
                             '%r.' % (len(_LINE_FIELDS),
                                      ' '.join(_LINE_FIELDS), line))
        kind = tokens[0]
        try:
            kwargs = dict(c_in=int(tokens[1]), c_out=int(tokens[2]),
                          kernel=int(tokens[3]), stride=int(tokens[4]),
                          se_ratio=float(tokens[5]),
                          expand_factor=int(tokens[6]))
            for token in tokens[7:]:
                key, _, value = token.partition('=')
                if key == 'dropout':
                    kwargs['dropout_rate'] = float(value)
                elif key == 'repeat':
                    kwargs['repeat'] = int(value)
                elif key == 'activation':
                    kwargs['activation'] = value
                elif key == 'norm':
                    kwargs['norm'] = bool(int(value))
                elif key == 'bias':
                    kwargs['bias'] = bool(int(value))
                elif key == 'shape':
                    kwargs['shape'] = tuple(int(v) for v in value.split('x'))
                else:
                    raise ValueError('Unknown block option %r.' % key)
        except ValueError as e:
            raise ValueError('Malformed block line %r: %s' % (line, e))
        return cls(kind, **kwargs)


def conv_padding(spec):
    '''Same-style padding floor(k / 2) of forward convolutions.'''
    return spec.kernel // 2


def transpose_padding(spec):
    '''(padding, output_padding) so a transposed conv upsamples by stride.'''
    p = (spec.kernel - 1) // 2
    return p, max(0, spec.stride + 2 * p - spec.kernel)


def output_shape(spec, shape):
    '''Per-sample output shape of `spec` applied to per-sample `shape`.

    Parameters
    ----------
    spec : BlockSpec
    shape : tuple
        (C, D, H, W) for volumetric blocks, (F,) for `Dense` and `Reshape`.

    Raises
    ------
    ShapeError
        If `shape` does not match the block's input channels or features.
    '''
    shape = tuple(int(s) for s in shape)
    if spec.kind in ('Dense', 'Reshape'):
        if shape != (spec.c_in,):
            raise ShapeError('%s expects (%d,) input, got %s.'
                             % (spec.kind, spec.c_in, shape))
        return (spec.c_out,) if spec.kind == 'Dense' else spec.shape
    if len(shape) != 4 or shape[0] != spec.c_in:
        raise ShapeError('%s expects (%d, D, H, W) input, got %s.'
                         % (spec.kind, spec.c_in, shape))
    spatial = shape[1:]
    if spec.kind == 'Flatten':
        if int(np.prod(shape)) != spec.c_out:
            raise ShapeError('Flatten of %s gives %d values, spec says %d.'
                             % (shape, int(np.prod(shape)), spec.c_out))
        return (spec.c_out,)
    if spec.kind == 'Dropout':
        return shape
    if spec.kind == 'MaxPool3D':
        return (spec.c_out,) + tuple(
            conv_output_extent(e, spec.kernel, spec.stride, 0)
            for e in spatial)
    if spec.kind in ('Conv3D', 'MBConv3D'):
        return (spec.c_out,) + tuple(
            conv_output_extent(e, spec.kernel, spec.stride,
                               conv_padding(spec)) for e in spatial)
    p, op = transpose_padding(spec)
    return (spec.c_out,) + tuple(
        transpose_output_extent(e, spec.kernel, spec.stride, p, op)
        for e in spatial)


def _conv_layers(spec):
    '''(prefix, c_in, c_out, stride) of the distinct kernels of a conv row.'''
    if spec.repeat == 1 or spec.c_in == spec.c_out:
        return [('', spec.c_in, spec.c_out, spec.stride)]
    if spec.kind == 'Conv3D':
        return [('', spec.c_in, spec.c_out, spec.stride),
                ('shared.', spec.c_out, spec.c_out, 1)]
    return [('shared.', spec.c_in, spec.c_in, 1),
            ('', spec.c_in, spec.c_out, spec.stride)]


def _conv_schedule(spec):
    '''Kernel prefixes of a conv row in application order.'''
    layers = _conv_layers(spec)
    if len(layers) == 1:
        return [layers[0]] * spec.repeat
    if spec.kind == 'Conv3D':
        return [layers[0]] + [layers[1]] * (spec.repeat - 1)
    return [layers[0]] * (spec.repeat - 1) + [layers[1]]


def param_shapes(spec):
    '''Ordered parameter name -> shape of one block.'''
    k = spec.kernel
    shapes = OrderedDict()
    if spec.kind in ('Conv3D', 'Conv3DTranspose'):
        for prefix, cin, cout, _ in _conv_layers(spec):
            if spec.kind == 'Conv3D':
                shapes[prefix + 'weight'] = (cout, cin, k, k, k)
            else:
                shapes[prefix + 'weight'] = (cin, cout, k, k, k)
            if spec.bias:
                shapes[prefix + 'bias'] = (cout,)
        if spec.norm:
            shapes['bn.gamma'] = (spec.c_out,)
            shapes['bn.beta'] = (spec.c_out,)
    elif spec.kind == 'Dense':
        shapes['weight'] = (spec.c_in, spec.c_out)
        if spec.bias:
            shapes['bias'] = (spec.c_out,)
    elif spec.kind in ('MBConv3D', 'MBConvTranspose3D'):
        hidden = spec.hidden
        shapes['expand.weight'] = (hidden, spec.c_in, 1, 1, 1)
        shapes['expand_bn.gamma'] = (hidden,)
        shapes['expand_bn.beta'] = (hidden,)
        shapes['depthwise.weight'] = (hidden, 1, k, k, k)
        shapes['depthwise_bn.gamma'] = (hidden,)
        shapes['depthwise_bn.beta'] = (hidden,)
        if spec.se_width:
            shapes['se.reduce.weight'] = (hidden, spec.se_width)
            shapes['se.reduce.bias'] = (spec.se_width,)
            shapes['se.expand.weight'] = (spec.se_width, hidden)
            shapes['se.expand.bias'] = (hidden,)
        shapes['project.weight'] = (spec.c_out, hidden, 1, 1, 1)
        shapes['project_bn.gamma'] = (spec.c_out,)
        shapes['project_bn.beta'] = (spec.c_out,)
    return shapes


def norm_layers(spec):
    '''Name -> channel count of the batch-norm layers of one block.'''
    if spec.kind in ('MBConv3D', 'MBConvTranspose3D'):
        return OrderedDict([('expand_bn', spec.hidden),
                            ('depthwise_bn', spec.hidden),
                            ('project_bn', spec.c_out)])
    if spec.norm:
        return OrderedDict([('bn', spec.c_out)])
    return OrderedDict()


def count_params(specs):
    '''Exact number of trainable values in a block or block sequence.

    Weights, biases and batch-norm gamma/beta are counted; running
    statistics are not.

    Examples
    --------
    >>> count_params([BlockSpec('Conv3D', 1, 4, bias=True)])
    112
    '''
    if isinstance(specs, BlockSpec):
        specs = [specs]
    return sum(int(np.prod(s)) for spec in specs
               for s in param_shapes(spec).values())


class BlockParams(object):
    '''Named parameter tensors and running statistics of one block.

    Parameters
    ----------
    spec : BlockSpec
    tensors : mapping
        Name -> Tensor, names and shapes as given by `param_shapes(spec)`.
    stats : mapping, optional
        Batch-norm layer name -> BatchNormStats. Fresh statistics are created
        for missing layers.

    Raises
    ------
    ShapeError
        If a tensor is missing, unexpected or has the wrong shape.
    '''

    def __init__(self, spec, tensors, stats=None):
        expected = param_shapes(spec)
        tensors = OrderedDict(tensors)
        if set(tensors) != set(expected):
            raise ShapeError('%s parameters %s do not match expected %s.'
                             % (spec.kind, sorted(tensors), sorted(expected)))
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ShapeError('%s parameter %r has shape %s, spec needs %s.'
                                 % (spec.kind, name, tensors[name].shape,
                                    shape))
        self.spec = spec
        self.tensors = OrderedDict((n, tensors[n]) for n in expected)
        stats = dict(stats or {})
        self.stats = OrderedDict(
            (n, stats.get(n) or BatchNormStats(c))
            for n, c in norm_layers(spec).items())

    def __getitem__(self, name):
        return self.tensors[name]

    def astype(self, dtype):
        '''Copy with every tensor cast to `dtype` (gradient checks).'''
        tensors = OrderedDict(
            (n, Tensor(t.data.astype(dtype), requires_grad=t.requires_grad,
                       name=t.name)) for n, t in self.tensors.items())
        stats = OrderedDict()
        for n, s in self.stats.items():
            copy = BatchNormStats(len(s.mean), dtype=dtype)
            copy.mean[:], copy.var[:] = s.mean, s.var
            stats[n] = copy
        return BlockParams(self.spec, tensors, stats)


def init_block_params(spec, rng=None, dtype=np.float32):
    '''Fresh parameters for `spec`.

    Convolution and dense weights are drawn from a zero-mean normal with
    standard deviation sqrt(2 / fan_in); biases and batch-norm beta start at
    0, gamma at 1.
    '''
    if rng is None:
        rng = np.random.RandomState(DEFAULT_SEED)
    tensors = OrderedDict()
    for name, shape in param_shapes(spec).items():
        leaf = name.rsplit('.', 1)[-1]
        if leaf == 'gamma':
            values = np.ones(shape)
        elif leaf in ('beta', 'bias'):
            values = np.zeros(shape)
        else:
            if len(shape) == 2:
                fan_in = shape[0]
            else:
                fan_in = shape[1] * int(np.prod(shape[2:]))
                if spec.kind == 'Conv3DTranspose':
                    fan_in = shape[0] * int(np.prod(shape[2:]))
            values = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        tensors[name] = Tensor(values.astype(dtype), requires_grad=True,
                               name=name)
    return BlockParams(spec, tensors)


class Mode(object):
    '''Forward-pass mode: training flag plus the dropout counter inputs.'''

    __slots__ = ('training', 'seed', 'step')

    def __init__(self, training=False, seed=DEFAULT_SEED, step=0):
        self.training = bool(training)
        self.seed = int(seed)
        self.step = int(step)

    def __repr__(self):
        return 'Mode(training=%r, seed=%d, step=%d)' % (self.training,
                                                       self.seed, self.step)


EVAL = Mode(False)


def _bn(x, params, name, mode):
    return batch_norm(x, params[name + '.gamma'], params[name + '.beta'],
                      stats=params.stats[name], training=mode.training,
                      momentum=DEFAULT_BN_MOMENTUM, eps=DEFAULT_BN_EPS)


def _activate(x, name):
    fn = ACTIVATIONS[name]
    return x if fn is None else fn(x)


def squeeze_excite(x, params, ratio=None, prefix='se.'):
    '''Rescale each channel of `x` by a learned gate in (0, 1).

    s = mean over space, g = sigmoid(dense(silu(dense(s)))), out = x * g.

    Parameters
    ----------
    x : Tensor
        Shape (N, C, D, H, W).
    params : mapping
        Holds `<prefix>reduce.weight` (C, S), `<prefix>reduce.bias` (S,),
        `<prefix>expand.weight` (S, C) and `<prefix>expand.bias` (C,).
    ratio : float, optional
        If given, S must equal max(1, round(ratio * C)).
    '''
    w1, b1 = params[prefix + 'reduce.weight'], params[prefix + 'reduce.bias']
    w2, b2 = params[prefix + 'expand.weight'], params[prefix + 'expand.bias']
    channels = x.shape[1]
    if w1.shape[0] != channels or w2.shape[1] != channels:
        raise ShapeError('squeeze_excite of %s got weights %s and %s.'
                         % (x.shape, w1.shape, w2.shape))
    if ratio is not None and w1.shape[1] != max(1, int(round(ratio *
                                                               channels))):
        raise ShapeError('squeeze_excite width %d does not match ratio %r of '
                         '%d channels.' % (w1.shape[1], ratio, channels))
    s = global_avg_pool3d(x)
    g = sigmoid(dense(silu(dense(s, w1, b1)), w2, b2))
    return mul(x, reshape(g, g.shape + (1, 1, 1)))


def _check_kind(spec, params, kind):
    if spec.kind != kind:
        raise ValueError('Expected a %s spec, got %s.' % (kind, spec.kind))
    if params.spec != spec:
        raise ShapeError('Parameters were built for %r, not %r.'
                         % (params.spec, spec))


def mbconv3d_forward(x, spec, params, mode=EVAL):
    '''Mobile inverted bottleneck block.

    expand (1x1, C_in -> factor * C_in) -> BN -> SiLU -> depthwise k^3
    (stride s) -> BN -> SiLU -> squeeze-and-excite -> project (1x1, -> C_out)
    -> BN, plus the input when stride is 1 and C_in == C_out.
    '''
    _check_kind(spec, params, 'MBConv3D')
    h = silu(_bn(pointwise_conv3d(x, params['expand.weight']), params,
                 'expand_bn', mode))
    h = depthwise_conv3d(h, params['depthwise.weight'], stride=spec.stride,
                         padding=conv_padding(spec))
    h = silu(_bn(h, params, 'depthwise_bn', mode))
    if spec.se_width:
        h = squeeze_excite(h, params)
    h = _bn(pointwise_conv3d(h, params['project.weight']), params,
            'project_bn', mode)
    return add(x, h) if spec.has_skip else h


def mbconvtranspose3d_forward(x, spec, params, mode=EVAL):
    '''Transposed counterpart of `mbconv3d_forward`.

    The expand layer widens C_in to factor * C_out and the depthwise stage
    is a transposed convolution, which upsamples by the stride.
    '''
    _check_kind(spec, params, 'MBConvTranspose3D')
    p, op = transpose_padding(spec)
    h = silu(_bn(pointwise_conv3d(x, params['expand.weight']), params,
                 'expand_bn', mode))
    h = depthwise_conv3d_transpose(h, params['depthwise.weight'],
                                   stride=spec.stride, padding=p,
                                   output_padding=op)
    h = silu(_bn(h, params, 'depthwise_bn', mode))
    if spec.se_width:
        h = squeeze_excite(h, params)
    h = _bn(pointwise_conv3d(h, params['project.weight']), params,
            'project_bn', mode)
    return add(x, h) if spec.has_skip else h


def _conv_row(x, spec, params, mode):
    for prefix, _, _, stride in _conv_schedule(spec):
        weight = params[prefix + 'weight']
        bias = params[prefix + 'bias'] if spec.bias else None
        if spec.kind == 'Conv3D':
            x = conv3d(x, weight, bias, stride=stride,
                       padding=conv_padding(spec))
        else:
            p, op = transpose_padding(replace(spec, stride=stride))
            x = conv3d_transpose(x, weight, bias, stride=stride, padding=p,
                                 output_padding=op)
        if spec.norm:
            x = _bn(x, params, 'bn', mode)
        x = _activate(x, spec.activation)
    return x


def block_forward(x, spec, params, mode=EVAL, stream=0):
    '''Apply any block kind to a batch.

    Parameters
    ----------
    x : Tensor
        (N, C, D, H, W), or (N, F) for `Dense` and `Reshape`.
    spec : BlockSpec
    params : BlockParams
    mode : Mode
    stream : int
        Dropout stream, distinct per block of a model.
    '''
    if spec.kind == 'MBConv3D':
        return mbconv3d_forward(x, spec, params, mode)
    if spec.kind == 'MBConvTranspose3D':
        return mbconvtranspose3d_forward(x, spec, params, mode)
    expected = output_shape(spec, x.shape[1:])
    if spec.kind in ('Conv3D', 'Conv3DTranspose'):
        out = _conv_row(x, spec, params, mode)
    elif spec.kind == 'MaxPool3D':
        out = max_pool3d(x, spec.kernel, spec.stride)
    elif spec.kind == 'Dropout':
        out = dropout(x, spec.dropout_rate, mode.training, seed=mode.seed,
                      stream=stream, step=mode.step)
    elif spec.kind == 'Dense':
        out = _activate(dense(x, params['weight'],
                              params['bias'] if spec.bias else None),
                        spec.activation)
    elif spec.kind == 'Flatten':
        out = flatten(x)
    else:
        out = reshape(x, (x.shape[0],) + spec.shape)
    if out.shape[1:] != expected:
        raise ShapeError('%s produced %s, expected %s.'
                         % (spec.kind, out.shape[1:], expected))
    return out
