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

import numpy as np

from voxelae._blocks import (BlockSpec, Mode, EVAL, block_forward,
                             init_block_params, squeeze_excite)
from voxelae._conv import (conv3d, conv3d_transpose, depthwise_conv3d,
                           depthwise_conv3d_transpose, max_pool3d)
from voxelae._tensor import (Tensor, BatchNormStats, batch_norm,
                             cross_entropy_loss, dense, dropout,
                             global_avg_pool3d, mse_loss, relu, sigmoid, silu)
from voxelae.tests._gradcheck import check_gradients

TOLERANCE = 1e-4


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class ElementwiseGradientTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(0)
        self.shapes = [(3,), (2, 4), (2, 3, 2), (1, 2, 2, 3), (2, 1, 2, 2, 2)]

    def check(self, fn, *tensors):
        self.assertLess(check_gradients(fn, list(tensors)), TOLERANCE)

    def test_add_mul_broadcast(self):
        for shape in self.shapes:
            a = leaf(self.rng, *shape)
            b = leaf(self.rng, *shape[-1:])
            self.check(lambda: a * b + b - a, a, b)

    def test_reductions(self):
        for shape in self.shapes:
            a = leaf(self.rng, *shape)
            self.check(lambda: a.sum(axis=0) + a.mean(axis=0), a)
            self.check(lambda: a.reshape(-1).mean(), a)

    def test_activations(self):
        for shape in self.shapes:
            a = leaf(self.rng, *shape)
            self.check(lambda: relu(a), a)
            self.check(lambda: sigmoid(a), a)
            self.check(lambda: silu(a), a)

    def test_dense(self):
        for n, f, g in [(1, 2, 3), (2, 3, 1), (4, 4, 4), (3, 5, 2), (2, 1, 2)]:
            x, w, b = leaf(self.rng, n, f), leaf(self.rng, f, g), \
                leaf(self.rng, g)
            self.check(lambda: dense(x, w, b), x, w, b)

    def test_dropout_training(self):
        for step in range(5):
            x = leaf(self.rng, 2, 3, 2, 2, 2)
            self.check(lambda: dropout(x, 0.3, True, seed=4, step=step), x)

    def test_global_avg_pool(self):
        for shape in [(1, 2, 2, 2, 2), (2, 3, 1, 2, 3), (2, 1, 3, 3, 3),
                      (3, 2, 2, 1, 1), (1, 4, 2, 3, 2)]:
            x = leaf(self.rng, *shape)
            self.check(lambda: global_avg_pool3d(x), x)

    def test_losses(self):
        for n, k in [(1, 2), (2, 3), (3, 4), (4, 2), (5, 5)]:
            logits = leaf(self.rng, n, k)
            labels = self.rng.randint(k, size=n)
            self.check(lambda: cross_entropy_loss(logits, labels), logits)
            pred = leaf(self.rng, n, k)
            target = self.rng.uniform(size=(n, k))
            self.check(lambda: mse_loss(pred, target), pred)

    def test_batch_norm(self):
        for shape in [(2, 3), (3, 2, 2), (2, 2, 2, 2, 2), (4, 1, 3, 1, 2),
                      (2, 3, 1, 2, 2)]:
            x = leaf(self.rng, *shape)
            gamma = leaf(self.rng, shape[1])
            beta = leaf(self.rng, shape[1])
            stats = BatchNormStats(shape[1], dtype=np.float64)
            for training in (True, False):
                self.check(lambda: batch_norm(x, gamma, beta, stats,
                                              training=training),
                           x, gamma, beta)


class ConvGradientTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(1)
        # (spatial, kernel, stride, padding, output_padding)
        self.cases = [((4, 4, 4), 3, 1, 1, 0), ((5, 4, 3), 3, 2, 1, 1),
                      ((3, 3, 3), 2, 2, 0, 0), ((4, 3, 4), 1, 1, 0, 0),
                      ((3, 4, 5), 3, 2, 0, 1)]

    def check(self, fn, *tensors):
        self.assertLess(check_gradients(fn, list(tensors)), TOLERANCE)

    def test_conv3d(self):
        for spatial, k, s, p, _ in self.cases:
            x = leaf(self.rng, 2, 2, *spatial)
            w, b = leaf(self.rng, 3, 2, k, k, k), leaf(self.rng, 3)
            self.check(lambda: conv3d(x, w, b, s, p), x, w, b)

    def test_conv3d_transpose(self):
        for spatial, k, s, p, op in self.cases:
            x = leaf(self.rng, 2, 3, *spatial)
            w, b = leaf(self.rng, 3, 2, k, k, k), leaf(self.rng, 2)
            self.check(lambda: conv3d_transpose(x, w, b, s, p, op), x, w, b)

    def test_depthwise(self):
        for spatial, k, s, p, op in self.cases:
            x = leaf(self.rng, 2, 3, *spatial)
            w, b = leaf(self.rng, 3, 1, k, k, k), leaf(self.rng, 3)
            self.check(lambda: depthwise_conv3d(x, w, b, s, p), x, w, b)
            self.check(lambda: depthwise_conv3d_transpose(x, w, b, s, p, op),
                       x, w, b)

    def test_max_pool(self):
        for spatial, k, s, _, _ in self.cases:
            if k > min(spatial):
                continue
            x = leaf(self.rng, 2, 2, *spatial)
            self.check(lambda: max_pool3d(x, k, s), x)


class BlockGradientTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(2)

    def check_block(self, spec, x_shape, mode):
        params = init_block_params(spec, self.rng).astype(np.float64)
        x = leaf(self.rng, *x_shape)
        tensors = [x] + list(params.tensors.values())
        error = check_gradients(
            lambda: block_forward(x, spec, params, mode, stream=1), tensors,
            max_checks=15)
        self.assertLess(error, TOLERANCE, msg=spec.to_line())

    def test_mbconv3d(self):
        specs = [BlockSpec('MBConv3D', 2, 2, se_ratio=0.25, expand_factor=4),
                 BlockSpec('MBConv3D', 2, 3, stride=2, se_ratio=0.5,
                           expand_factor=2),
                 BlockSpec('MBConv3D', 3, 3, kernel=1, expand_factor=2),
                 BlockSpec('MBConv3D', 2, 4, kernel=3, stride=2),
                 BlockSpec('MBConv3D', 4, 2, se_ratio=0.25, expand_factor=1)]
        for spec in specs:
            for mode in (Mode(True, 0, 0), EVAL):
                self.check_block(spec, (2, spec.c_in, 4, 4, 4), mode)

    def test_mbconvtranspose3d(self):
        specs = [BlockSpec('MBConvTranspose3D', 2, 2, se_ratio=0.25,
                           expand_factor=4),
                 BlockSpec('MBConvTranspose3D', 3, 2, stride=2, se_ratio=0.5,
                           expand_factor=2),
                 BlockSpec('MBConvTranspose3D', 2, 3, kernel=2, stride=2),
                 BlockSpec('MBConvTranspose3D', 4, 2, kernel=1,
                           expand_factor=2),
                 BlockSpec('MBConvTranspose3D', 2, 4, stride=2,
                           se_ratio=0.25, expand_factor=4)]
        for spec in specs:
            for mode in (Mode(True, 0, 0), EVAL):
                self.check_block(spec, (2, spec.c_in, 2, 2, 2), mode)

    def test_plain_rows(self):
        specs = [BlockSpec('Conv3D', 2, 3, repeat=3, activation='relu'),
                 BlockSpec('Conv3D', 2, 2, repeat=2, activation='silu'),
                 BlockSpec('Conv3DTranspose', 3, 2, repeat=2,
                           activation='relu'),
                 BlockSpec('Conv3DTranspose', 2, 2, kernel=2, stride=2,
                           activation='sigmoid'),
                 BlockSpec('Conv3D', 2, 3, stride=2, norm=True, bias=False,
                           activation='silu')]
        for spec in specs:
            self.check_block(spec, (2, spec.c_in, 4, 4, 4), Mode(True, 0, 0))

    def test_flat_blocks(self):
        self.check_block(BlockSpec('Dense', 6, 4), (3, 6), EVAL)
        self.check_block(BlockSpec('Dense', 4, 5, activation='relu'), (2, 4),
                         EVAL)
        self.check_block(BlockSpec('Flatten', 2, 16), (2, 2, 2, 2, 2), EVAL)
        self.check_block(BlockSpec('Reshape', 16, 2, shape=(2, 2, 2, 2)),
                         (3, 16), EVAL)
        self.check_block(BlockSpec('Dropout', 2, 2, dropout_rate=0.25),
                         (2, 2, 2, 2, 2), Mode(True, 3, 7))

    def test_squeeze_excite(self):
        for channels, width in [(2, 1), (4, 1), (4, 2), (6, 3), (8, 2)]:
            x = leaf(self.rng, 2, channels, 2, 3, 2)
            params = {'se.reduce.weight': leaf(self.rng, channels, width),
                      'se.reduce.bias': leaf(self.rng, width),
                      'se.expand.weight': leaf(self.rng, width, channels),
                      'se.expand.bias': leaf(self.rng, channels)}
            error = check_gradients(lambda: squeeze_excite(x, params),
                                    [x] + list(params.values()))
            self.assertLess(error, TOLERANCE)


if __name__ == "__main__":
    unittest.main()
