#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""Central finite-difference checks of tape gradients."""

import numpy as np

from voxelae._tensor import Tensor, backward, no_grad


def numeric_gradient(f, array, indices, eps=1e-6):
    '''Central differences of scalar `f()` w.r.t. `array` at `indices`.

    `array` is perturbed in place and restored.
    '''
    grad = np.zeros(len(indices))
    for q, idx in enumerate(indices):
        old = array[idx]
        array[idx] = old + eps
        plus = f()
        array[idx] = old - eps
        minus = f()
        array[idx] = old
        grad[q] = (plus - minus) / (2 * eps)
    return grad


def check_gradients(fn, tensors, seed=0, eps=1e-6, max_checks=30):
    '''Largest relative error between tape and numeric gradients.

    Parameters
    ----------
    fn : callable
        Builds the output Tensor from `tensors` (read at call time).
    tensors : list of Tensor
        Double-precision leaves with `requires_grad` set.
    max_checks : int
        Entries sampled per tensor.
    '''
    rng = np.random.RandomState(seed)
    out = fn()
    projection = rng.normal(size=out.shape)

    def scalar():
        with no_grad():
            return float((fn().data * projection).sum())

    for t in tensors:
        t.grad = None
    backward((out * Tensor(projection)).sum(), tensors)
    worst = 0.0
    for t in tensors:
        n = min(t.size, max_checks)
        flat = rng.choice(t.size, n, replace=False)
        indices = [np.unravel_index(i, t.shape) for i in flat]
        numeric = numeric_gradient(scalar, t.data, indices, eps)
        analytic = np.array([t.grad[idx] for idx in indices])
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric),
                    1e-10)
        worst = max(worst, np.linalg.norm(analytic - numeric) / scale)
    return worst
