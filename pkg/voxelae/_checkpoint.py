#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""Binary checkpoint container.

Layout, all integers little-endian::

    b"VXAE"  u16 version
    u32 length + UTF-8 model description
    u32 length + UTF-8 JSON metadata (sorted keys)
    u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 rank, rank x u32 extents,
                float32 payload

Tensors hold the model parameters, batch-norm running statistics and, when
an optimizer state is saved, the Adam moments as ``adam.m.<name>`` and
``adam.v.<name>``.
"""

import json
import struct
from collections import OrderedDict

import numpy as np

from voxelae._models import Model, ModelSpec
from voxelae._optim import AdamState
from voxelae._util import atomic_write

MAGIC = b'VXAE'
VERSION = 1
_ADAM_M = 'adam.m.'
_ADAM_V = 'adam.v.'


class CheckpointError(ValueError):
    """Raised on a corrupt, truncated or inconsistent checkpoint."""


class Checkpoint(object):
    '''Model description, named float32 tensors and run metadata.

    Parameters
    ----------
    spec_text : str
        `ModelSpec.to_text()` of the saved model.
    tensors : mapping
        Name -> array, kept in insertion order.
    metadata : dict
        JSON-serializable run state (step, epoch, seed, optimizer
        hyperparameters).
    '''

    def __init__(self, spec_text, tensors, metadata=None):
        self.spec_text = spec_text
        self.tensors = OrderedDict(
            (name, np.array(value, dtype='<f4'))
            for name, value in tensors.items())
        self.metadata = dict(metadata or {})

    @property
    def spec(self):
        return ModelSpec.from_text(self.spec_text)

    @property
    def step(self):
        return int(self.metadata.get('step', 0))

    def model_arrays(self):
        return OrderedDict((n, a) for n, a in self.tensors.items()
                           if not n.startswith((_ADAM_M, _ADAM_V)))

    def to_bytes(self):
        spec = self.spec_text.encode('utf-8')
        meta = json.dumps(self.metadata, sort_keys=True).encode('utf-8')
        parts = [MAGIC, struct.pack('<H', VERSION),
                 struct.pack('<I', len(spec)), spec,
                 struct.pack('<I', len(meta)), meta,
                 struct.pack('<I', len(self.tensors))]
        for name, array in self.tensors.items():
            raw = name.encode('utf-8')
            parts.append(struct.pack('<I', len(raw)) + raw)
            parts.append(struct.pack('<I%dI' % array.ndim, array.ndim,
                                     *array.shape))
            parts.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
        return b''.join(parts)

    @classmethod
    def from_bytes(cls, data):
        '''Parse checkpoint bytes.

        Raises
        ------
        CheckpointError
            On a bad magic or version, truncation, trailing bytes or a
            duplicate tensor name.
        '''
        reader = _Reader(bytes(data))
        if reader.take(4) != MAGIC:
            raise CheckpointError('Not a voxelae checkpoint (bad magic).')
        version, = reader.unpack('<H')
        if version != VERSION:
            raise CheckpointError('Unsupported checkpoint version %d '
                                  '(supported: %d).' % (version, VERSION))
        spec_text = reader.text()
        try:
            metadata = json.loads(reader.text())
        except ValueError as e:
            raise CheckpointError('Corrupt checkpoint metadata: %s' % e)
        count, = reader.unpack('<I')
        tensors = OrderedDict()
        for _ in range(count):
            name = reader.text()
            if name in tensors:
                raise CheckpointError('Duplicate tensor %r in checkpoint.'
                                      % name)
            rank, = reader.unpack('<I')
            shape = reader.unpack('<%dI' % rank)
            size = int(np.prod(shape, dtype=np.int64))
            tensors[name] = np.frombuffer(reader.take(4 * size),
                                          dtype='<f4').reshape(shape)
        if reader.pos != len(reader.data):
            raise CheckpointError('%d unexpected bytes after the last tensor.'
                                  % (len(reader.data) - reader.pos))
        return cls(spec_text, tensors, metadata)


class _Reader(object):
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError('Checkpoint truncated at byte %d (needed %d '
                                  'more bytes).' % (self.pos, n))
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self):
        n, = self.unpack('<I')
        try:
            return self.take(n).decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError('Checkpoint string at byte %d is not '
                                  'UTF-8.' % (self.pos - n))


def make_checkpoint(model, adam=None, step=0, epoch=0, seed=0, **metadata):
    '''Snapshot `model` (and optionally its optimizer) as a `Checkpoint`.

    `step` counts applied updates and `epoch` counts completed epochs.
    '''
    tensors = model.state_arrays()
    meta = {'step': int(step), 'epoch': int(epoch), 'seed': int(seed)}
    meta.update(metadata)
    if adam is not None:
        meta['adam'] = adam.hyperparameters()
        for name, m in adam.m.items():
            tensors[_ADAM_M + name] = m
        for name, v in adam.v.items():
            tensors[_ADAM_V + name] = v
    return Checkpoint(model.spec.to_text(), tensors, meta)


def save_checkpoint(checkpoint, path):
    '''Write `checkpoint` to `path` atomically.'''
    atomic_write(path, checkpoint.to_bytes())


def load_checkpoint(path):
    with open(path, 'rb') as f:
        return Checkpoint.from_bytes(f.read())


def restore_model(checkpoint, dtype=np.float32):
    '''Rebuild the model stored in `checkpoint`.'''
    try:
        model = Model(checkpoint.spec, dtype=dtype)
        return model.load_state_arrays(checkpoint.model_arrays())
    except ValueError as e:
        raise CheckpointError('Checkpoint does not describe a valid model: %s'
                              % e)


def restore_adam(checkpoint):
    '''Rebuild the `AdamState` stored in `checkpoint`, or `None`.'''
    hyper = checkpoint.metadata.get('adam')
    if hyper is None:
        return None
    state = AdamState(hyper['lr'], hyper['beta1'], hyper['beta2'],
                      hyper['eps'])
    state.t = int(hyper['t'])
    for name, array in checkpoint.tensors.items():
        if name.startswith(_ADAM_M):
            state.m[name[len(_ADAM_M):]] = np.array(array)
        elif name.startswith(_ADAM_V):
            state.v[name[len(_ADAM_V):]] = np.array(array)
    return state


def export_encoder(model):
    '''Checkpoint with the encoder blocks and their parameters only.'''
    spec = model.spec.encoder_only()
    prefix = 'encoder.'
    tensors = OrderedDict((n, a) for n, a in model.state_arrays().items()
                          if n.startswith(prefix))
    return Checkpoint(spec.to_text(), tensors,
                      {'step': 0, 'epoch': 0, 'seed': int(model.seed),
                       'encoder_only': True})


def import_encoder(checkpoint):
    '''Frozen encoder-only `Model` from a checkpoint.

    Full autoencoder checkpoints are accepted too; their decoder is dropped.
    '''
    spec = checkpoint.spec.encoder_only()
    arrays = OrderedDict((n, a) for n, a in checkpoint.model_arrays().items()
                         if n.startswith('encoder.'))
    try:
        model = Model(spec).load_state_arrays(arrays)
    except ValueError as e:
        raise CheckpointError('Checkpoint holds no usable encoder: %s' % e)
    return model.freeze_encoder()
