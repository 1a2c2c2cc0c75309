#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

from collections import OrderedDict

import numpy as np

from voxelae._defaults import (DEFAULT_LR, DEFAULT_BETA1, DEFAULT_BETA2,
                               DEFAULT_EPS)


class AdamState(object):
    '''Hyperparameters, step counter and moment buffers of Adam.

    Parameters
    ----------
    lr : float
        Step size, >= 0.
    beta1, beta2 : float
        Exponential decay rates of the first and second moment, in [0, 1).
    eps : float
        Denominator offset.

    Attributes
    ----------
    t : int
        Number of updates applied so far.
    m, v : OrderedDict
        Parameter name -> moment buffer of the parameter's shape. Buffers are
        created on the first update of each parameter.
    '''

    def __init__(self, lr=DEFAULT_LR, beta1=DEFAULT_BETA1, beta2=DEFAULT_BETA2,
                 eps=DEFAULT_EPS):
        if lr < 0:
            raise ValueError('Adam learning rate must be >= 0, got %r.' % lr)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError('Adam betas must be in [0, 1), got %r and %r.'
                             % (beta1, beta2))
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = OrderedDict()
        self.v = OrderedDict()

    def hyperparameters(self):
        return {'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2,
                'eps': self.eps, 't': self.t}


def adam_step(params, state):
    '''Apply one bias-corrected Adam update in place.

    Parameters
    ----------
    params : mapping
        Parameter name -> Tensor. Tensors with `requires_grad` False (frozen)
        or without a gradient are skipped.
    state : AdamState
        Updated in place; `t` is incremented once per call.
    '''
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1 - b1 ** state.t
    correction2 = 1 - b2 ** state.t
    for name, p in params.items():
        if not p.requires_grad or p.grad is None:
            continue
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        if m.shape != p.shape:
            raise ValueError('Adam moment of %r has shape %s, parameter has '
                             '%s.' % (name, m.shape, p.shape))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
                   ).astype(p.dtype)
