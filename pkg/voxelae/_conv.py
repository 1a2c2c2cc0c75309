#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""3-D convolution and pooling kernels with their vector-Jacobian products.

Activations use the (N, C, D, H, W) layout and cubic kernels. Every kernel
loops over the k^3 kernel offsets in a fixed order and reduces each offset
with one `np.tensordot`, so results do not depend on scheduling.
"""

from itertools import product

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from voxelae._tensor import ShapeError, _make


def conv_output_extent(n, kernel, stride, padding):
    '''Output length of a strided convolution along one axis.'''
    return (n + 2 * padding - kernel) // stride + 1


def transpose_output_extent(n, kernel, stride, padding, output_padding=0):
    '''Output length of a transposed convolution along one axis.'''
    return (n - 1) * stride - 2 * padding + kernel + output_padding


def _offsets(k):
    return product(range(k), repeat=3)


def _window(a, i, j, l, stride, extent):
    '''Strided view of `a` hit by kernel offset (i, j, l).'''
    d, h, w = extent
    return a[:, :, i:i + stride * (d - 1) + 1:stride,
             j:j + stride * (h - 1) + 1:stride,
             l:l + stride * (w - 1) + 1:stride]


def _pad(a, p):
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))


def _crop(a, p, extent):
    d, h, w = extent
    return a[:, :, p:p + d, p:p + h, p:p + w]


def _check_input(name, x):
    if x.ndim != 5:
        raise ShapeError('%s expects an (N, C, D, H, W) input, got %s.'
                         % (name, x.shape))


def _check_cubic(name, weight):
    if weight.ndim != 5 or not (weight.shape[2] == weight.shape[3] ==
                                weight.shape[4]):
        raise ShapeError('%s expects a cubic (A, B, k, k, k) kernel, got %s.'
                         % (name, weight.shape))


def _check_geometry(name, x, k, stride, padding):
    if stride < 1:
        raise ValueError('%s stride must be >= 1, got %r.' % (name, stride))
    if padding < 0:
        raise ValueError('%s padding must be >= 0, got %r.' % (name, padding))
    if any(k > e + 2 * padding for e in x.shape[2:]):
        raise ShapeError('%s kernel %d does not fit input %s with padding %d.'
                         % (name, k, x.shape, padding))


def _bias_vjp(g):
    return g.sum(axis=(0, 2, 3, 4))


def conv3d(x, weight, bias=None, stride=1, padding=0):
    '''Cross-correlate `x` with `weight`.

    Parameters
    ----------
    x : Tensor
        Input of shape (N, Cin, D, H, W).
    weight : Tensor
        Kernel of shape (Cout, Cin, k, k, k).
    bias : Tensor, optional
        Shape (Cout,).
    stride : int
        Step between output samples, >= 1.
    padding : int
        Symmetric zero padding on every spatial side.

    Returns
    -------
    Tensor
        Shape (N, Cout, D', H', W') with
        D' = floor((D + 2 * padding - k) / stride) + 1.

    Raises
    ------
    ShapeError
        If the input channels differ from the kernel's Cin, or the kernel does
        not fit the padded input.
    '''
    _check_input('conv3d', x)
    _check_cubic('conv3d', weight)
    cout, cin, k = weight.shape[0], weight.shape[1], weight.shape[2]
    if x.shape[1] != cin:
        raise ShapeError('conv3d input has %d channels but weight %s expects '
                         '%d.' % (x.shape[1], weight.shape, cin))
    _check_geometry('conv3d', x, k, stride, padding)
    extent = tuple(conv_output_extent(e, k, stride, padding)
                   for e in x.shape[2:])
    xp = _pad(x.data, padding)
    dtype = np.result_type(x.data, weight.data)
    acc = np.zeros((x.shape[0],) + extent + (cout,), dtype=dtype)
    for i, j, l in _offsets(k):
        acc += np.tensordot(_window(xp, i, j, l, stride, extent),
                            weight.data[:, :, i, j, l], axes=([1], [1]))
    out = np.ascontiguousarray(np.moveaxis(acc, -1, 1))
    inputs = [x, weight]
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1, 1)
        inputs.append(bias)

    def vjp(g):
        g_x = g_w = None
        if x.requires_grad:
            gp = np.zeros(xp.shape, dtype=g.dtype)
            g_last = np.moveaxis(g, 1, -1)
            for i, j, l in _offsets(k):
                view = _window(gp, i, j, l, stride, extent)
                view += np.moveaxis(np.tensordot(
                    g_last, weight.data[:, :, i, j, l], axes=([4], [0])),
                    -1, 1)
            g_x = _crop(gp, padding, x.shape[2:])
        if weight.requires_grad:
            g_w = np.zeros(weight.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                g_w[:, :, i, j, l] = np.tensordot(
                    g, _window(xp, i, j, l, stride, extent),
                    axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        grads = [g_x, g_w]
        if bias is not None:
            grads.append(_bias_vjp(g))
        return grads
    return _make(out, inputs, vjp)


def _transpose_geometry(name, x, k, stride, padding, output_padding):
    if stride < 1:
        raise ValueError('%s stride must be >= 1, got %r.' % (name, stride))
    if padding < 0:
        raise ValueError('%s padding must be >= 0, got %r.' % (name, padding))
    if not 0 <= output_padding < stride:
        raise ValueError('%s output_padding must be in [0, stride), got %r.'
                         % (name, output_padding))
    extent = tuple(transpose_output_extent(e, k, stride, padding,
                                           output_padding)
                   for e in x.shape[2:])
    if any(e <= 0 for e in extent):
        raise ShapeError('%s of %s with kernel %d, stride %d, padding %d '
                         'gives a non-positive output extent %s.'
                         % (name, x.shape, k, stride, padding, extent))
    full = tuple((e - 1) * stride + k + output_padding for e in x.shape[2:])
    return extent, full


def conv3d_transpose(x, weight, bias=None, stride=1, padding=0,
                     output_padding=0):
    '''Adjoint of `conv3d`: each input value scatters a weighted kernel copy.

    Parameters
    ----------
    x : Tensor
        Input of shape (N, Cin, D, H, W).
    weight : Tensor
        Kernel of shape (Cin, Cout, k, k, k), the same tensor a `conv3d`
        from Cout to Cin channels would use.
    bias : Tensor, optional
        Shape (Cout,).
    stride, padding : int
        Geometry of the convolution being transposed.
    output_padding : int
        Extra samples appended to the far side of every axis,
        0 <= output_padding < stride.

    Returns
    -------
    Tensor
        Shape (N, Cout, D', H', W') with
        D' = (D - 1) * stride - 2 * padding + k + output_padding.
    '''
    _check_input('conv3d_transpose', x)
    _check_cubic('conv3d_transpose', weight)
    cin, cout, k = weight.shape[0], weight.shape[1], weight.shape[2]
    if x.shape[1] != cin:
        raise ShapeError('conv3d_transpose input has %d channels but weight '
                         '%s expects %d.' % (x.shape[1], weight.shape, cin))
    extent, full = _transpose_geometry('conv3d_transpose', x, k, stride,
                                       padding, output_padding)
    dtype = np.result_type(x.data, weight.data)
    buf = np.zeros((x.shape[0], cout) + full, dtype=dtype)
    x_last = np.moveaxis(x.data, 1, -1)
    for i, j, l in _offsets(k):
        view = _window(buf, i, j, l, stride, x.shape[2:])
        view += np.moveaxis(np.tensordot(
            x_last, weight.data[:, :, i, j, l], axes=([4], [0])), -1, 1)
    out = np.ascontiguousarray(_crop(buf, padding, extent))
    inputs = [x, weight]
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1, 1)
        inputs.append(bias)

    def vjp(g):
        gbuf = np.zeros((g.shape[0], cout) + full, dtype=g.dtype)
        _crop(gbuf, padding, extent)[...] = g
        g_x = g_w = None
        if x.requires_grad:
            acc = np.zeros(x.shape[:1] + x.shape[2:] + (cin,), dtype=g.dtype)
            for i, j, l in _offsets(k):
                win = _window(gbuf, i, j, l, stride, x.shape[2:])
                acc += np.tensordot(win, weight.data[:, :, i, j, l],
                                    axes=([1], [1]))
            g_x = np.moveaxis(acc, -1, 1)
        if weight.requires_grad:
            g_w = np.zeros(weight.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                g_w[:, :, i, j, l] = np.tensordot(
                    x.data, _window(gbuf, i, j, l, stride, x.shape[2:]),
                    axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        grads = [g_x, g_w]
        if bias is not None:
            grads.append(_bias_vjp(g))
        return grads
    return _make(out, inputs, vjp)


def _check_depthwise(name, x, weight):
    _check_input(name, x)
    _check_cubic(name, weight)
    if weight.shape[1] != 1 or weight.shape[0] != x.shape[1]:
        raise ShapeError('%s input has %d channels but weight %s expects '
                         '(%d, 1, k, k, k).' % (name, x.shape[1], weight.shape,
                                                x.shape[1]))


def _channel_kernel(weight, i, j, l):
    return weight[:, 0, i, j, l].reshape(1, -1, 1, 1, 1)


def depthwise_conv3d(x, weight, bias=None, stride=1, padding=0):
    '''Per-channel `conv3d`: channel c is convolved with kernel c only.

    `weight` has shape (C, 1, k, k, k); shapes otherwise follow `conv3d`.
    '''
    _check_depthwise('depthwise_conv3d', x, weight)
    k = weight.shape[2]
    _check_geometry('depthwise_conv3d', x, k, stride, padding)
    extent = tuple(conv_output_extent(e, k, stride, padding)
                   for e in x.shape[2:])
    xp = _pad(x.data, padding)
    dtype = np.result_type(x.data, weight.data)
    out = np.zeros(x.shape[:2] + extent, dtype=dtype)
    for i, j, l in _offsets(k):
        out += (_window(xp, i, j, l, stride, extent) *
                _channel_kernel(weight.data, i, j, l))
    inputs = [x, weight]
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1, 1)
        inputs.append(bias)

    def vjp(g):
        g_x = g_w = None
        if x.requires_grad:
            gp = np.zeros(xp.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                view = _window(gp, i, j, l, stride, extent)
                view += g * _channel_kernel(weight.data, i, j, l)
            g_x = _crop(gp, padding, x.shape[2:])
        if weight.requires_grad:
            g_w = np.zeros(weight.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                g_w[:, 0, i, j, l] = (g * _window(xp, i, j, l, stride, extent)
                                      ).sum(axis=(0, 2, 3, 4))
        grads = [g_x, g_w]
        if bias is not None:
            grads.append(_bias_vjp(g))
        return grads
    return _make(out, inputs, vjp)


def depthwise_conv3d_transpose(x, weight, bias=None, stride=1, padding=0,
                               output_padding=0):
    '''Per-channel `conv3d_transpose` with a (C, 1, k, k, k) kernel.'''
    _check_depthwise('depthwise_conv3d_transpose', x, weight)
    k = weight.shape[2]
    extent, full = _transpose_geometry('depthwise_conv3d_transpose', x, k,
                                       stride, padding, output_padding)
    dtype = np.result_type(x.data, weight.data)
    buf = np.zeros(x.shape[:2] + full, dtype=dtype)
    for i, j, l in _offsets(k):
        view = _window(buf, i, j, l, stride, x.shape[2:])
        view += x.data * _channel_kernel(weight.data, i, j, l)
    out = np.ascontiguousarray(_crop(buf, padding, extent))
    inputs = [x, weight]
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1, 1)
        inputs.append(bias)

    def vjp(g):
        gbuf = np.zeros(g.shape[:2] + full, dtype=g.dtype)
        _crop(gbuf, padding, extent)[...] = g
        g_x = g_w = None
        if x.requires_grad:
            g_x = np.zeros(x.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                g_x += (_window(gbuf, i, j, l, stride, x.shape[2:]) *
                        _channel_kernel(weight.data, i, j, l))
        if weight.requires_grad:
            g_w = np.zeros(weight.shape, dtype=g.dtype)
            for i, j, l in _offsets(k):
                g_w[:, 0, i, j, l] = (
                    x.data * _window(gbuf, i, j, l, stride, x.shape[2:])
                ).sum(axis=(0, 2, 3, 4))
        grads = [g_x, g_w]
        if bias is not None:
            grads.append(_bias_vjp(g))
        return grads
    return _make(out, inputs, vjp)


def pointwise_conv3d(x, weight, bias=None):
    '''Per-voxel linear map across channels, weight (Cout, Cin, 1, 1, 1).'''
    if weight.ndim != 5 or weight.shape[2:] != (1, 1, 1):
        raise ShapeError('pointwise_conv3d expects a (Cout, Cin, 1, 1, 1) '
                         'weight, got %s.' % (weight.shape,))
    return conv3d(x, weight, bias=bias, stride=1, padding=0)


def max_pool3d(x, kernel, stride=None):
    '''Windowed maximum over cubic `kernel` windows.

    The gradient of each window goes to its first maximal element in
    C (depth, height, width) scan order.
    '''
    _check_input('max_pool3d', x)
    stride = kernel if stride is None else stride
    _check_geometry('max_pool3d', x, kernel, stride, 0)
    extent = tuple(conv_output_extent(e, kernel, stride, 0)
                   for e in x.shape[2:])
    view = sliding_window_view(x.data, (kernel,) * 3, axis=(2, 3, 4))
    view = view[:, :, ::stride, ::stride, ::stride][
        :, :, :extent[0], :extent[1], :extent[2]]
    flat = view.reshape(view.shape[:5] + (kernel ** 3,))
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        g_x = np.zeros(x.shape, dtype=g.dtype)
        for q, (i, j, l) in enumerate(_offsets(kernel)):
            view = _window(g_x, i, j, l, stride, extent)
            view += np.where(arg == q, g, 0)
        return (g_x,)
    return _make(np.ascontiguousarray(out), (x,), vjp)
