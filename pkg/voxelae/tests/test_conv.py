#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import unittest
from itertools import product

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from voxelae._conv import (conv3d, conv3d_transpose, depthwise_conv3d,
                           depthwise_conv3d_transpose, max_pool3d,
                           pointwise_conv3d, conv_output_extent,
                           transpose_output_extent)
from voxelae._tensor import Tensor, ShapeError, backward


def conv_oracle(x, w, b, stride, padding, depthwise=False):
    n, c = x.shape[:2]
    k = w.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
    extent = [(e + 2 * padding - k) // stride + 1 for e in x.shape[2:]]
    cout = c if depthwise else w.shape[0]
    out = np.zeros([n, cout] + extent)
    for s, o, i, j, l in product(range(n), range(cout), *map(range, extent)):
        patch = xp[s, :, i * stride:i * stride + k, j * stride:j * stride + k,
                   l * stride:l * stride + k]
        if depthwise:
            out[s, o, i, j, l] = (patch[o] * w[o, 0]).sum()
        else:
            out[s, o, i, j, l] = (patch * w[o]).sum()
    if b is not None:
        out += b.reshape(1, -1, 1, 1, 1)
    return out


def transpose_oracle(x, w, b, stride, padding, output_padding,
                     depthwise=False):
    n, c = x.shape[:2]
    k = w.shape[2]
    cout = c if depthwise else w.shape[1]
    full = [(e - 1) * stride + k + output_padding for e in x.shape[2:]]
    buf = np.zeros([n, cout] + full)
    cells = product(range(n), range(c), *map(range, x.shape[2:]))
    for s, ci, i, j, l in cells:
        target = buf[s, :, i * stride:i * stride + k,
                     j * stride:j * stride + k, l * stride:l * stride + k]
        if depthwise:
            target[ci] += x[s, ci, i, j, l] * w[ci, 0]
        else:
            target += x[s, ci, i, j, l] * w[ci]
    extent = [f - 2 * padding for f in full]
    out = buf[:, :, padding:padding + extent[0], padding:padding + extent[1],
              padding:padding + extent[2]]
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1, 1)
    return out


class ConvOracleTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(0)
        self.geometries = [(k, s, p) for k, s, p in
                           product((1, 2, 3), (1, 2), (0, 1))
                           if p < k]

    def test_conv3d(self):
        for k, s, p in self.geometries:
            x = self.rng.normal(size=(2, 3, 4, 5, 3))
            w = self.rng.normal(size=(2, 3, k, k, k))
            b = self.rng.normal(size=2)
            obs = conv3d(Tensor(x), Tensor(w), Tensor(b), s, p).data
            assert_allclose(obs, conv_oracle(x, w, b, s, p), rtol=0,
                            atol=1e-10, err_msg='k=%d s=%d p=%d' % (k, s, p))

    def test_conv3d_transpose(self):
        for k, s, p in self.geometries:
            for op in range(s):
                x = self.rng.normal(size=(2, 3, 3, 2, 4))
                w = self.rng.normal(size=(3, 2, k, k, k))
                b = self.rng.normal(size=2)
                obs = conv3d_transpose(Tensor(x), Tensor(w), Tensor(b), s, p,
                                       op).data
                exp = transpose_oracle(x, w, b, s, p, op)
                assert_allclose(obs, exp, rtol=0, atol=1e-10,
                                err_msg='k=%d s=%d p=%d op=%d'
                                % (k, s, p, op))

    def test_depthwise(self):
        for k, s, p in self.geometries:
            x = self.rng.normal(size=(2, 3, 4, 3, 5))
            w = self.rng.normal(size=(3, 1, k, k, k))
            obs = depthwise_conv3d(Tensor(x), Tensor(w), None, s, p).data
            assert_allclose(obs, conv_oracle(x, w, None, s, p, True),
                            rtol=0, atol=1e-10)

    def test_depthwise_transpose(self):
        for k, s, p in self.geometries:
            for op in range(s):
                x = self.rng.normal(size=(2, 3, 2, 3, 3))
                w = self.rng.normal(size=(3, 1, k, k, k))
                b = self.rng.normal(size=3)
                obs = depthwise_conv3d_transpose(Tensor(x), Tensor(w),
                                                 Tensor(b), s, p, op).data
                exp = transpose_oracle(x, w, b, s, p, op, True)
                assert_allclose(obs, exp, rtol=0, atol=1e-10)

    def test_pointwise(self):
        x = self.rng.normal(size=(2, 3, 2, 2, 2))
        w = self.rng.normal(size=(4, 3, 1, 1, 1))
        exp = np.einsum('nidhw,oi->nodhw', x, w[:, :, 0, 0, 0])
        assert_allclose(pointwise_conv3d(Tensor(x), Tensor(w)).data, exp,
                        atol=1e-12)
        with self.assertRaises(ShapeError):
            pointwise_conv3d(Tensor(x), Tensor(np.ones((4, 3, 3, 3, 3))))


class ConvDualityTests(unittest.TestCase):

    def test_transpose_is_adjoint(self):
        # <conv(x), y> == <x, conv_transpose(y)> with the same kernel.
        rng = np.random.RandomState(1)
        for k, s, p in [(3, 1, 1), (3, 2, 1), (2, 2, 0), (5, 2, 2), (1, 1, 0)]:
            x = rng.normal(size=(2, 3, 7, 7, 7))
            w = rng.normal(size=(4, 3, k, k, k))
            y_shape = conv3d(Tensor(x), Tensor(w), None, s, p).shape
            y = rng.normal(size=y_shape)
            op = 7 - transpose_output_extent(y_shape[2], k, s, p)
            lhs = (conv3d(Tensor(x), Tensor(w), None, s, p).data * y).sum()
            back = conv3d_transpose(Tensor(y), Tensor(w), None, s, p, op)
            self.assertEqual(back.shape, x.shape)
            self.assertAlmostEqual(lhs, (x * back.data).sum(), places=8)

    def test_transpose_gradient_is_forward_conv(self):
        rng = np.random.RandomState(2)
        x = Tensor(rng.normal(size=(1, 2, 5, 5, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 3, 3, 3)))
        out = conv3d(x, w, None, 2, 1)
        g = rng.normal(size=out.shape)
        backward((out * Tensor(g)).sum())
        exp = conv3d_transpose(Tensor(g), w, None, 2, 1, 0).data
        assert_allclose(x.grad, exp, atol=1e-10)


class ConvGeometryTests(unittest.TestCase):

    def test_extents(self):
        self.assertEqual(conv_output_extent(64, 3, 2, 1), 32)
        self.assertEqual(conv_output_extent(64, 2, 2, 0), 32)
        self.assertEqual(transpose_output_extent(32, 3, 2, 1, 1), 64)
        self.assertEqual(transpose_output_extent(32, 2, 2, 0), 64)

    def test_channel_mismatch(self):
        with self.assertRaises(ShapeError):
            conv3d(Tensor(np.ones((1, 2, 4, 4, 4))),
                   Tensor(np.ones((3, 4, 3, 3, 3))))
        with self.assertRaises(ShapeError):
            depthwise_conv3d(Tensor(np.ones((1, 2, 4, 4, 4))),
                             Tensor(np.ones((3, 1, 3, 3, 3))))

    def test_kernel_too_large(self):
        with self.assertRaises(ShapeError):
            conv3d(Tensor(np.ones((1, 1, 2, 2, 2))),
                   Tensor(np.ones((1, 1, 3, 3, 3))))

    def test_output_padding_range(self):
        with self.assertRaises(ValueError):
            conv3d_transpose(Tensor(np.ones((1, 1, 2, 2, 2))),
                             Tensor(np.ones((1, 1, 3, 3, 3))), stride=2,
                             padding=1, output_padding=2)

    def test_input_rank(self):
        with self.assertRaises(ShapeError):
            conv3d(Tensor(np.ones((1, 4, 4, 4))),
                   Tensor(np.ones((1, 1, 3, 3, 3))))


class MaxPoolTests(unittest.TestCase):

    def test_values(self):
        x = np.random.RandomState(3).normal(size=(2, 2, 4, 4, 6))
        obs = max_pool3d(Tensor(x), 2).data
        exp = x.reshape(2, 2, 2, 2, 2, 2, 3, 2).max(axis=(3, 5, 7))
        assert_array_equal(obs, exp)

    def test_gradient_goes_to_first_maximum(self):
        x = Tensor(np.ones((1, 1, 2, 2, 2)), requires_grad=True)
        backward(max_pool3d(x, 2).sum())
        exp = np.zeros((1, 1, 2, 2, 2))
        exp[0, 0, 0, 0, 0] = 1
        assert_array_equal(x.grad, exp)

    def test_odd_extent_is_floored(self):
        out = max_pool3d(Tensor(np.ones((1, 1, 5, 5, 5))), 2)
        self.assertEqual(out.shape, (1, 1, 2, 2, 2))


if __name__ == "__main__":
    unittest.main()
