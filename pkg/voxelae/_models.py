#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import pandas as pd

from voxelae._blocks import (BlockSpec, EVAL, block_forward, count_params,
                             init_block_params, norm_layers, output_shape)
from voxelae._defaults import (DEFAULT_DIM, DEFAULT_LATENT, DEFAULT_DROPOUT,
                               DEFAULT_EXPAND, DEFAULT_SE_RATIO,
                               DEFAULT_KERNEL, DEFAULT_PRESET, DEFAULT_SEED)
from voxelae._tensor import Tensor, ShapeError, dense, no_grad

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelSpec:
    '''Complete autoencoder description.

    Attributes
    ----------
    name : str
    encoder : tuple of BlockSpec
        Maps (1, D, D, D) to (latent_dim,).
    latent_dim : int
    decoder : tuple of BlockSpec
        Maps (latent_dim,) back to (1, D, D, D). Empty for an exported
        encoder.
    input_dim : int
    output_activation : str
        Activation of the last decoder block.
    '''
    name: str
    encoder: tuple
    latent_dim: int = DEFAULT_LATENT
    decoder: tuple = ()
    input_dim: int = DEFAULT_DIM
    output_activation: str = 'sigmoid'

    def __post_init__(self):
        object.__setattr__(self, 'encoder', tuple(self.encoder))
        object.__setattr__(self, 'decoder', tuple(self.decoder))

    @property
    def blocks(self):
        return self.encoder + self.decoder

    def validate(self):
        '''Check the shape chain of both halves.

        Raises
        ------
        ShapeError
            If the encoder does not end in (latent_dim,) or the decoder does
            not restore (1, D, D, D).
        '''
        d = self.input_dim
        shape = (1, d, d, d)
        for spec in self.encoder:
            shape = output_shape(spec, shape)
        if shape != (self.latent_dim,):
            raise ShapeError('%s encoder ends in %s, latent_dim is %d.'
                             % (self.name, shape, self.latent_dim))
        if not self.decoder:
            return self
        for spec in self.decoder:
            shape = output_shape(spec, shape)
        if shape != (1, d, d, d):
            raise ShapeError('%s decoder ends in %s, expected %s.'
                             % (self.name, shape, (1, d, d, d)))
        if self.decoder[-1].activation != self.output_activation:
            raise ValueError('%s decoder ends with %s, output_activation is '
                             '%s.' % (self.name, self.decoder[-1].activation,
                                      self.output_activation))
        return self

    def encoder_only(self):
        return ModelSpec(self.name, self.encoder, self.latent_dim, (),
                         self.input_dim, self.output_activation)

    def to_text(self):
        '''Human-readable description, one block per line.'''
        lines = ['name %s' % self.name, 'input_dim %d' % self.input_dim,
                 'latent_dim %d' % self.latent_dim,
                 'output_activation %s' % self.output_activation, 'encoder']
        lines += [s.to_line() for s in self.encoder]
        lines.append('decoder')
        lines += [s.to_line() for s in self.decoder]
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text):
        '''Parse the output of `to_text`; blank and ``#`` lines are skipped.'''
        header = {}
        sections = {'encoder': [], 'decoder': []}
        current = None
        for raw in text.splitlines():
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if line in sections:
                current = line
            elif current is None:
                key, _, value = line.partition(' ')
                header[key] = value.strip()
            else:
                sections[current].append(BlockSpec.from_line(line))
        missing = {'name', 'input_dim', 'latent_dim'} - set(header)
        if missing:
            raise ValueError('Model description lacks %s.'
                             % ', '.join(sorted(missing)))
        return cls(header['name'], sections['encoder'],
                   int(header['latent_dim']), sections['decoder'],
                   int(header['input_dim']),
                   header.get('output_activation', 'sigmoid'))


def _check_input_dim(input_dim):
    if input_dim < 16 or input_dim % 16:
        raise ValueError('Autoencoder input_dim must be a positive multiple '
                         'of 16, got %r.' % input_dim)


def build_baseline(input_dim=DEFAULT_DIM, dropout_rate=DEFAULT_DROPOUT):
    '''Convolutional autoencoder with max-pool encoder and mirrored decoder.

    The encoder is four stages of 3x3x3 ReLU convolutions separated by 2x
    max pooling, ending in 4 channels at input_dim / 16 per side; its
    flattened output is the latent code (256 values at 64^3). The decoder
    mirrors it with transposed convolutions, kernel-2 stride-2 transposed
    convolutions where the encoder pooled, and a sigmoid output.
    '''
    _check_input_dim(input_dim)
    r = input_dim // 16
    latent = 4 * r ** 3

    def conv(cin, cout, repeat=1):
        return BlockSpec('Conv3D', cin, cout, repeat=repeat,
                         activation='relu')

    def deconv(cin, cout, repeat=1, activation='relu'):
        return BlockSpec('Conv3DTranspose', cin, cout, repeat=repeat,
                         activation=activation)

    def pool(c):
        return BlockSpec('MaxPool3D', c, c, kernel=2, stride=2)

    def up(c):
        return BlockSpec('Conv3DTranspose', c, c, kernel=2, stride=2,
                         activation='relu')

    def drop(c):
        return BlockSpec('Dropout', c, c, dropout_rate=dropout_rate)

    encoder = [conv(1, 4, 3), pool(4), drop(4),
               conv(4, 8, 2), pool(8),
               conv(8, 8), conv(8, 16), pool(16),
               conv(16, 32, 2), pool(32),
               conv(32, 32, 5), conv(32, 4), drop(4),
               BlockSpec('Flatten', 4, latent)]
    decoder = [BlockSpec('Reshape', latent, 4, shape=(4, r, r, r)), drop(4),
               deconv(4, 32), deconv(32, 32, 5), up(32),
               deconv(32, 16, 2), up(16),
               deconv(16, 8), deconv(8, 8), up(8),
               deconv(8, 4, 2), drop(4), up(4),
               deconv(4, 4, 2), deconv(4, 1, activation='sigmoid')]
    return ModelSpec('baseline', encoder, latent, decoder,
                     input_dim).validate()


# Stem width, MB stages (c_in, c_out, stride) and bottleneck channels. The
# deepest stage runs at input_dim / 16 per side, so at input_dim 16 it is a
# single voxel and batch norm there needs batches of at least 2 samples.
_RESIDUAL_PRESETS = {
    'tiny': {'stem': 4, 'stages': [(4, 8, 2), (8, 8, 2), (8, 8, 2),
                                   (8, 8, 1)], 'bottleneck': 4},
    'default': {'stem': 8, 'stages': [(8, 16, 2), (16, 24, 2), (24, 32, 2),
                                      (32, 32, 1)], 'bottleneck': 4},
    'wide': {'stem': 16, 'stages': [(16, 32, 2), (32, 48, 2), (48, 64, 2),
                                    (64, 64, 1)], 'bottleneck': 4},
}


def residual_presets():
    return list(sorted(_RESIDUAL_PRESETS.keys()))


def build_residual(width_preset=DEFAULT_PRESET, input_dim=DEFAULT_DIM,
                   latent_dim=DEFAULT_LATENT, se_ratio=DEFAULT_SE_RATIO,
                   expand_factor=DEFAULT_EXPAND, kernel=DEFAULT_KERNEL):
    '''Inverted-bottleneck residual autoencoder.

    Encoder: stride-2 stem convolution with batch norm and SiLU, four
    MBConv3D stages, a pointwise projection to a few channels, flatten and a
    dense bottleneck of `latent_dim` units. The decoder mirrors it with a
    dense layer, MBConvTranspose3D stages, a stride-2 transposed convolution
    back to full resolution and a pointwise sigmoid output.

    Raises
    ------
    KeyError
        If `width_preset` is unknown.
    ValueError
        If `latent_dim` is not 256.
    '''
    if width_preset not in _RESIDUAL_PRESETS:
        raise KeyError('%s is not a known width preset. Known presets are: '
                       '%s.' % (width_preset, ', '.join(residual_presets())))
    if latent_dim != DEFAULT_LATENT:
        raise ValueError('The residual autoencoder has a %d-value latent '
                         'space, got latent_dim=%r.'
                         % (DEFAULT_LATENT, latent_dim))
    _check_input_dim(input_dim)
    preset = _RESIDUAL_PRESETS[width_preset]
    stem, stages, neck = preset['stem'], preset['stages'], preset['bottleneck']
    r = input_dim // 16
    flat = neck * r ** 3

    def mb(kind, cin, cout, stride):
        return BlockSpec(kind, cin, cout, kernel=kernel, stride=stride,
                         se_ratio=se_ratio, expand_factor=expand_factor)

    encoder = [BlockSpec('Conv3D', 1, stem, kernel=kernel, stride=2,
                         activation='silu', norm=True, bias=False)]
    encoder += [mb('MBConv3D', cin, cout, s) for cin, cout, s in stages]
    last = stages[-1][1]
    encoder += [BlockSpec('Conv3D', last, neck, kernel=1),
                BlockSpec('Flatten', neck, flat),
                BlockSpec('Dense', flat, latent_dim)]
    decoder = [BlockSpec('Dense', latent_dim, flat),
               BlockSpec('Reshape', flat, neck, shape=(neck, r, r, r)),
               BlockSpec('Conv3D', neck, last, kernel=1)]
    decoder += [mb('MBConvTranspose3D', cout, cin, s)
                for cin, cout, s in reversed(stages)]
    decoder += [BlockSpec('Conv3DTranspose', stem, stem, kernel=kernel,
                          stride=2, activation='silu', norm=True, bias=False),
                BlockSpec('Conv3D', stem, 1, kernel=1, activation='sigmoid')]
    return ModelSpec('residual', encoder, latent_dim, decoder,
                     input_dim).validate()


_MODELS = {'baseline': lambda input_dim, preset: build_baseline(input_dim),
           'residual': lambda input_dim, preset: build_residual(preset,
                                                                input_dim)}


def min_norm_volume(spec, input_dim=None):
    '''Fewest voxels per sample any batch-norm layer normalizes over.

    `None` when the model has no batch norm. A training batch of N samples
    gives each channel of that layer N times this many values.
    '''
    d = spec.input_dim if input_dim is None else input_dim
    shape = (1, d, d, d)
    sizes = []
    for block in spec.blocks:
        out = output_shape(block, shape)
        if norm_layers(block):
            sizes += [int(np.prod(shape[1:])), int(np.prod(out[1:]))]
        shape = out
    return min(sizes) if sizes else None


def model_names():
    return list(sorted(_MODELS.keys()))


def build_model_spec(name, input_dim=DEFAULT_DIM, width_preset=DEFAULT_PRESET):
    '''Built-in model spec by name (`baseline` or `residual`).'''
    if name not in _MODELS:
        raise KeyError('%s is not a known model. Known models are: %s.'
                       % (name, ', '.join(model_names())))
    return _MODELS[name](input_dim, width_preset)


def shape_trace(spec, input_dim=None):
    '''Per-block output shapes and parameter counts.

    Returns
    -------
    pd.DataFrame
        One row per block with columns section, kind, repeat, output_shape
        (channels last, as (D, H, W, C), or (F,) for flat outputs) and
        params.
    '''
    d = spec.input_dim if input_dim is None else input_dim
    shape = (1, d, d, d)
    rows = []
    for section, blocks in (('encoder', spec.encoder),
                            ('decoder', spec.decoder)):
        for block in blocks:
            shape = output_shape(block, shape)
            shown = shape[1:] + shape[:1] if len(shape) == 4 else shape
            rows.append((section, block.kind, block.repeat, shown,
                         count_params(block)))
    return pd.DataFrame(rows, columns=['section', 'kind', 'repeat',
                                       'output_shape', 'params'])


class Model(object):
    '''Instantiated autoencoder.

    Parameters
    ----------
    spec : ModelSpec
    seed : int
        Seed of the weight initialization.
    dtype : numpy dtype
        Parameter precision.
    '''

    def __init__(self, spec, seed=DEFAULT_SEED, dtype=np.float32):
        self.spec = spec.validate()
        self.seed = seed
        rng = np.random.RandomState(seed)
        self.blocks = [init_block_params(s, rng, dtype=dtype)
                       for s in spec.blocks]
        for prefix, params in zip(self._prefixes(), self.blocks):
            for name, t in params.tensors.items():
                t.name = prefix + name

    def _prefixes(self):
        n = len(self.spec.encoder)
        return (['encoder.%d.' % i for i in range(n)] +
                ['decoder.%d.' % i for i in range(len(self.spec.decoder))])

    @property
    def encoder_blocks(self):
        return self.blocks[:len(self.spec.encoder)]

    @property
    def decoder_blocks(self):
        return self.blocks[len(self.spec.encoder):]

    def parameters(self):
        '''Ordered name -> Tensor of every parameter.'''
        out = OrderedDict()
        for prefix, params in zip(self._prefixes(), self.blocks):
            for name, t in params.tensors.items():
                out[prefix + name] = t
        return out

    def running_stats(self):
        '''Ordered name -> BatchNormStats of every batch-norm layer.'''
        out = OrderedDict()
        for prefix, params in zip(self._prefixes(), self.blocks):
            for name, s in params.stats.items():
                out[prefix + name] = s
        return out

    def count_params(self):
        return count_params(self.spec.blocks)

    def zero_grad(self):
        for t in self.parameters().values():
            t.grad = None

    def freeze_encoder(self):
        '''Stop gradients and optimizer updates for the encoder.'''
        for params in self.encoder_blocks:
            for t in params.tensors.values():
                t.requires_grad = False
        return self

    def _run(self, x, specs, blocks, offset, mode):
        for i, (spec, params) in enumerate(zip(specs, blocks)):
            x = block_forward(x, spec, params, mode, stream=offset + i)
        return x

    def encode(self, x, mode=EVAL):
        '''(N, 1, D, D, D) occupancy -> (N, latent_dim) codes.'''
        if not isinstance(x, Tensor):
            x = Tensor(x)
        return self._run(x, self.spec.encoder, self.encoder_blocks, 0, mode)

    def decode(self, z, mode=EVAL):
        '''(N, latent_dim) codes -> (N, 1, D, D, D) occupancy probabilities.'''
        if not self.spec.decoder:
            raise ValueError('Model %r has no decoder.' % self.spec.name)
        return self._run(z, self.spec.decoder, self.decoder_blocks,
                         len(self.spec.encoder), mode)

    def forward(self, x, mode=EVAL):
        '''Returns (reconstruction, latent).'''
        latent = self.encode(x, mode)
        return self.decode(latent, mode), latent

    def predict(self, x):
        '''Evaluation-mode reconstruction as a numpy array, no graph.'''
        with no_grad():
            recon, _ = self.forward(x, EVAL)
        return recon.data

    def state_arrays(self):
        '''Ordered name -> array of parameters and running statistics.'''
        out = OrderedDict((n, t.data) for n, t in self.parameters().items())
        for name, s in self.running_stats().items():
            out[name + '.running_mean'] = s.mean
            out[name + '.running_var'] = s.var
        return out

    def load_state_arrays(self, arrays, strict=True):
        '''Copy arrays written by `state_arrays` into this model.

        Raises
        ------
        ShapeError
            On a shape mismatch, or (with `strict`) a missing or extra name.
        '''
        arrays = dict(arrays)
        targets = OrderedDict((n, t.data) for n, t in
                              self.parameters().items())
        for name, s in self.running_stats().items():
            targets[name + '.running_mean'] = s.mean
            targets[name + '.running_var'] = s.var
        if strict:
            missing = set(targets) - set(arrays)
            extra = set(arrays) - set(targets)
            if missing or extra:
                raise ShapeError('State does not match model %r: missing %s, '
                                 'unexpected %s.' % (self.spec.name,
                                                     sorted(missing),
                                                     sorted(extra)))
        for name, target in targets.items():
            if name not in arrays:
                continue
            value = np.asarray(arrays[name])
            if value.shape != target.shape:
                raise ShapeError('State %r has shape %s, model needs %s.'
                                 % (name, value.shape, target.shape))
            target[...] = value
        return self


class ClassifierHead(object):
    '''Dense layer from latent codes to class logits.'''

    def __init__(self, latent_dim, classes, seed=DEFAULT_SEED):
        if classes < 2:
            raise ValueError('A classifier needs >= 2 classes, got %r.'
                             % classes)
        rng = np.random.RandomState(seed)
        self.weight = Tensor(rng.normal(0, np.sqrt(1.0 / latent_dim),
                                        size=(latent_dim, classes)
                                        ).astype(np.float32),
                             requires_grad=True, name='head.weight')
        self.bias = Tensor(np.zeros(classes, dtype=np.float32),
                           requires_grad=True, name='head.bias')

    def parameters(self):
        return OrderedDict([('head.weight', self.weight),
                            ('head.bias', self.bias)])

    def forward(self, latent):
        return dense(latent, self.weight, self.bias)
