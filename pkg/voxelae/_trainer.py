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
import math
import os
import time
from dataclasses import dataclass, asdict, field

import numpy as np

from voxelae._blocks import Mode, EVAL
from voxelae._checkpoint import (Checkpoint, CheckpointError, load_checkpoint,
                                 make_checkpoint, restore_adam, restore_model,
                                 save_checkpoint)
from voxelae._dataset import (DataError, BatchPrefetcher, build_index,
                              load_batch)
from voxelae._defaults import (DEFAULT_MODEL, DEFAULT_EPOCHS, DEFAULT_BATCH,
                               DEFAULT_LR, DEFAULT_SEED, DEFAULT_EVAL_EVERY,
                               DEFAULT_DIM, DEFAULT_PRESET,
                               DEFAULT_TEST_FRACTION, DEFAULT_PREFETCH,
                               DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
from voxelae._models import Model, build_model_spec, min_norm_volume
from voxelae._optim import AdamState, adam_step
from voxelae._tensor import (Tensor, backward, cross_entropy_loss, mse_loss,
                             no_grad)
from voxelae._util import records_to_frame, write_metrics_csv

logger = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    '''Raised when a training loss is NaN or infinite.

    Attributes
    ----------
    step, epoch : int
        Position of the offending batch.
    '''

    def __init__(self, loss, step, epoch):
        super(NonFiniteLossError, self).__init__(
            'Training loss became %r at step %d (epoch %d). Try a smaller '
            'learning rate.' % (loss, step, epoch))
        self.loss = loss
        self.step = step
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    '''Settings of one training run.'''
    data: str
    model: str = DEFAULT_MODEL
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH
    lr: float = DEFAULT_LR
    seed: int = DEFAULT_SEED
    eval_every: int = DEFAULT_EVAL_EVERY
    checkpoint_dir: str = None
    determinism: bool = False
    dim: int = DEFAULT_DIM
    width_preset: str = DEFAULT_PRESET
    test_fraction: float = DEFAULT_TEST_FRACTION
    max_steps: int = 0
    eval_samples: int = 0
    prefetch: int = DEFAULT_PREFETCH

    def validate(self):
        '''Raise `ValueError` on settings no run can use.'''
        if self.batch_size < 1:
            raise ValueError('batch_size must be >= 1, got %r.'
                             % self.batch_size)
        if self.lr < 0:
            raise ValueError('lr must be >= 0, got %r.' % self.lr)
        if self.epochs < 1:
            raise ValueError('epochs must be >= 1, got %r.' % self.epochs)
        if self.eval_every < 1:
            raise ValueError('eval_every must be >= 1, got %r.'
                             % self.eval_every)
        if self.dim < 2:
            raise ValueError('dim must be >= 2, got %r.' % self.dim)
        if self.max_steps < 0 or self.eval_samples < 0:
            raise ValueError('max_steps and eval_samples must be >= 0.')
        return self


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    epoch: int
    split: str
    mse: float
    wall_seconds: float

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    '''Outcome of `train`.

    Attributes
    ----------
    checkpoint : Checkpoint
        State after the last step.
    model : Model
    records : list of MetricsRecord
    skipped_files : list of str
        Files that failed to load, once per failed load.
    epoch_seconds : list of float
        Measured wall-clock time of each completed epoch.
    '''
    checkpoint: Checkpoint
    model: Model
    records: list = field(default_factory=list)
    skipped_files: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    @property
    def metrics(self):
        return records_to_frame(self.records)

    @property
    def final_eval(self):
        evals = [r.mse for r in self.records if r.split == 'eval']
        return evals[-1] if evals else None


def epoch_order(ids, seed, epoch):
    '''Shuffled copy of `ids` for one epoch, derived from (seed, epoch).'''
    rng = np.random.RandomState([int(seed) % 2 ** 32, int(epoch)])
    return [ids[i] for i in rng.permutation(len(ids))]


def epoch_batches(ids, batch_size, seed, epoch):
    '''Batches of one epoch; the last, partial batch is kept.'''
    order = epoch_order(ids, seed, epoch)
    return [order[i:i + batch_size] for i in range(0, len(order),
                                                   batch_size)]


def _predict(model, x):
    if hasattr(model, 'predict'):
        return model.predict(x)
    with no_grad():
        return model.forward(x, EVAL)[0].data


def evaluate(model, index, split='test', dim=None, batch_size=DEFAULT_BATCH,
             max_samples=0, cache=None, skipped=None):
    '''Mean per-sample MSE of evaluation-mode reconstructions.

    Parameters
    ----------
    model : Model or Checkpoint
        Anything with `predict(x) -> array` also works.
    index : DatasetIndex
    split : str
        'train' or 'test'.
    dim : int, optional
        Grid resolution; defaults to the model's input_dim.
    max_samples : int
        Evaluate only the first `max_samples` entries of the split; 0 means
        all of them.

    Returns
    -------
    float or None
        `None` when the split holds no loadable sample.

    Notes
    -----
    Evaluation never records a graph and never updates parameters, optimizer
    state or batch-norm running statistics.
    '''
    if isinstance(model, Checkpoint):
        model = restore_model(model)
    if dim is None:
        dim = model.spec.input_dim
    ids = index.ids(split)
    if max_samples:
        ids = ids[:max_samples]
    total, count = 0.0, 0
    for start in range(0, len(ids), batch_size):
        x = load_batch(index, ids[start:start + batch_size], dim,
                       skipped=skipped, cache=cache)
        if x.shape[0] == 0:
            continue
        err = (np.asarray(_predict(model, x), dtype=np.float64) -
               x.data) ** 2
        total += err.reshape(x.shape[0], -1).mean(axis=1).sum()
        count += x.shape[0]
    return total / count if count else None


def _load_resume(model, resume_from, config):
    checkpoint = resume_from
    if isinstance(resume_from, str):
        checkpoint = load_checkpoint(resume_from)
    if checkpoint.spec_text != model.spec.to_text():
        raise CheckpointError('Cannot resume: checkpoint holds model %r, run '
                              'configures %r.' % (checkpoint.spec.name,
                                                  model.spec.name))
    model.load_state_arrays(checkpoint.model_arrays())
    adam = restore_adam(checkpoint)
    if adam is None:
        adam = AdamState(config.lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
    return adam, checkpoint.step


def train(config, resume_from=None, on_record=None, index=None):
    '''Train an autoencoder by MSE reconstruction with Adam.

    Parameters
    ----------
    config : TrainConfig
    resume_from : Checkpoint or str, optional
        Continue a run: parameters, optimizer state, running statistics and
        the step counter are restored and the data order is re-derived from
        the seed, so the continued run emits the same losses as an
        uninterrupted one.
    on_record : callable, optional
        Called with every `MetricsRecord` as it is produced.
    index : DatasetIndex, optional
        Prebuilt index; by default `config.data` is scanned.

    Returns
    -------
    TrainResult

    Raises
    ------
    DataError
        If the training split is empty.
    NonFiniteLossError
        If a batch loss is NaN or infinite.

    Notes
    -----
    With `config.determinism` batches are loaded in the consumer thread and
    `wall_seconds` is reported as 0.0, so two runs with the same seed write
    identical metrics. Measured times are still kept in
    `TrainResult.epoch_seconds`.
    '''
    config.validate()
    if index is None:
        index = build_index(config.data, config.test_fraction, config.seed)
    train_ids = index.ids('train')
    if not train_ids:
        raise DataError('The training split of %s is empty.' % config.data)
    spec = build_model_spec(config.model, config.dim, config.width_preset)
    if min_norm_volume(spec) == 1 and config.batch_size == 1:
        logger.warning('At dim %d with batch size 1 a batch-norm layer of %s '
                       'normalizes a single value per channel, so training '
                       'sees a latent code that ignores the input. Use a '
                       'batch size above 1 or a larger dim.',
                       config.dim, spec.name)
    model = Model(spec, seed=config.seed)
    adam = AdamState(config.lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
    step = 0
    if resume_from is not None:
        adam, step = _load_resume(model, resume_from, config)
        logger.info('Resuming %s at step %d.', spec.name, step)
    logger.info('Training %s (%d parameters) on %d grids for %d epochs.',
                spec.name, model.count_params(), len(train_ids),
                config.epochs)

    result = TrainResult(None, model)
    cache = {}
    started = time.perf_counter()

    def clock():
        if config.determinism:
            return 0.0
        return time.perf_counter() - started

    def emit(record):
        result.records.append(record)
        if on_record is not None:
            on_record(record)

    def run_eval(epoch):
        mse = evaluate(model, index, 'test', config.dim, config.batch_size,
                       config.eval_samples, cache, result.skipped_files)
        if mse is None:
            logger.debug('No test grids to evaluate at step %d.', step)
            return
        emit(MetricsRecord(step, epoch, 'eval', float(mse), clock()))

    def load(ids):
        return load_batch(index, ids, config.dim,
                          skipped=result.skipped_files, cache=cache)

    per_epoch = math.ceil(len(train_ids) / config.batch_size)
    cap = config.max_steps or per_epoch * config.epochs
    params = model.parameters()
    epoch = min(step // per_epoch, config.epochs - 1)
    last_eval = None
    for epoch in range(step // per_epoch, config.epochs):
        if step >= cap:
            break
        epoch_start = time.perf_counter()
        batches = epoch_batches(train_ids, config.batch_size, config.seed,
                                epoch)
        batches = batches[step - epoch * per_epoch:]
        batches = batches[:cap - step]
        if config.determinism or config.prefetch < 1:
            loaded = (load(b) for b in batches)
            prefetcher = None
        else:
            prefetcher = BatchPrefetcher(batches, load, config.prefetch)
            loaded = iter(prefetcher)
        try:
            for x in loaded:
                if x.shape[0] == 0:
                    step += 1
                    continue
                recon, _ = model.forward(x, Mode(True, config.seed, step))
                loss = mse_loss(recon, x)
                value = float(loss.item())
                if not np.isfinite(value):
                    raise NonFiniteLossError(value, step, epoch)
                model.zero_grad()
                backward(loss, params.values())
                adam_step(params, adam)
                step += 1
                emit(MetricsRecord(step, epoch, 'train', value, clock()))
                if step % config.eval_every == 0:
                    run_eval(epoch)
                    last_eval = step
        finally:
            if prefetcher is not None:
                prefetcher.close()
        result.epoch_seconds.append(time.perf_counter() - epoch_start)
        logger.info('Epoch %d finished at step %d in %.2f s.', epoch, step,
                    result.epoch_seconds[-1])
        if config.checkpoint_dir and step % per_epoch == 0:
            save_checkpoint(make_checkpoint(model, adam, step, epoch + 1,
                                            config.seed),
                            os.path.join(config.checkpoint_dir,
                                         'epoch_%03d.vxae' % (epoch + 1)))
    if last_eval != step:
        run_eval(epoch)
    if result.skipped_files:
        logger.warning('%d file loads were skipped during training.',
                       len(result.skipped_files))
    result.checkpoint = make_checkpoint(model, adam, step, step // per_epoch,
                                        config.seed)
    if config.checkpoint_dir:
        save_checkpoint(result.checkpoint,
                        os.path.join(config.checkpoint_dir, 'last.vxae'))
        write_metrics_csv(os.path.join(config.checkpoint_dir, 'metrics.csv'),
                          result.records)
    return result


def fit_classifier(encoder, head, grids, labels, steps, lr=DEFAULT_LR):
    '''Train a `ClassifierHead` on codes of an (optionally frozen) encoder.

    Parameters
    ----------
    encoder : Model
    head : ClassifierHead
    grids : array_like
        (N, 1, D, D, D) occupancy.
    labels : array_like
        N integer class labels.
    steps : int
        Full-batch Adam steps.

    Returns
    -------
    list of float
        Cross-entropy loss before each step.
    '''
    x = grids if isinstance(grids, Tensor) else Tensor(grids)
    params = dict(encoder.parameters())
    params.update(head.parameters())
    adam = AdamState(lr)
    losses = []
    for _ in range(steps):
        loss = cross_entropy_loss(head.forward(encoder.encode(x, EVAL)),
                                  labels)
        losses.append(float(loss.item()))
        for t in params.values():
            t.grad = None
        backward(loss, [t for t in params.values() if t.requires_grad])
        adam_step(params, adam)
    return losses
