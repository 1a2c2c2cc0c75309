#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import os
import tempfile
import unittest
from unittest import mock

import numpy as np
from numpy.testing import assert_array_equal

from voxelae._binvox import write_binvox
from voxelae._checkpoint import (CheckpointError, export_encoder,
                                 import_encoder, load_checkpoint,
                                 restore_adam)
from voxelae._dataset import (DataError, build_index, load_batch,
                              make_primitive_corpus)
from voxelae._models import ClassifierHead, Model, build_model_spec
from voxelae._tensor import Tensor
from voxelae._trainer import (NonFiniteLossError, TrainConfig, epoch_batches,
                              epoch_order, evaluate, fit_classifier, train)
from voxelae._util import read_metrics_csv
from voxelae._voxelize import VoxelGrid


def _config(data, **kwargs):
    settings = dict(model='residual', width_preset='tiny', dim=16,
                    batch_size=2, epochs=2, eval_every=1, lr=0.01,
                    test_fraction=0.34, seed=7, determinism=True)
    settings.update(kwargs)
    return TrainConfig(data, **settings)


def _full_grid(root, name='full.binvox'):
    path = os.path.join(root, name)
    with open(path, 'wb') as f:
        f.write(write_binvox(VoxelGrid(np.ones((16, 16, 16)))))
    return path


def _ball(root, name, center=(7.5, 7.5, 7.5), radius=5.5):
    offsets = np.indices((16, 16, 16)).T - np.asarray(center)
    occupancy = ((offsets ** 2).sum(axis=-1) < radius ** 2).T
    path = os.path.join(root, name)
    with open(path, 'wb') as f:
        f.write(write_binvox(VoxelGrid(occupancy)))
    return path


class _Zeros(object):

    def predict(self, x):
        return np.zeros(x.shape, dtype=np.float32)


class ScheduleTests(unittest.TestCase):

    def test_epoch_batches(self):
        batches = epoch_batches(list(range(5)), 2, seed=0, epoch=0)
        self.assertEqual([len(b) for b in batches], [2, 2, 1])
        self.assertEqual(sorted(sum(batches, [])), list(range(5)))
        self.assertEqual(batches, epoch_batches(list(range(5)), 2, 0, 0))

    def test_order_depends_on_epoch(self):
        ids = list(range(10))
        orders = [tuple(epoch_order(ids, 3, e)) for e in range(10)]
        self.assertGreater(len(set(orders)), 1)
        self.assertEqual(epoch_order(ids, 3, 4), list(orders[4]))

    def test_validate(self):
        for kwargs in (dict(batch_size=0), dict(lr=-1.0), dict(epochs=0),
                       dict(eval_every=0), dict(dim=1), dict(max_steps=-1)):
            with self.assertRaises(ValueError, msg=str(kwargs)):
                TrainConfig('data', **kwargs).validate()


class TrainTests(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.data = os.path.join(self.tmp, 'data')
        make_primitive_corpus(self.data, count=6, seed=1, dim=16)

    def tearDown(self):
        self._tmp.cleanup()

    def test_deterministic_runs_write_identical_files(self):
        outputs = []
        for run in ('a', 'b'):
            out = os.path.join(self.tmp, run)
            train(_config(self.data, checkpoint_dir=out))
            with open(os.path.join(out, 'metrics.csv'), 'rb') as f:
                metrics = f.read()
            with open(os.path.join(out, 'last.vxae'), 'rb') as f:
                outputs.append((metrics, f.read()))
        self.assertEqual(outputs[0], outputs[1])
        out = os.path.join(self.tmp, 'a')
        self.assertTrue(os.path.exists(os.path.join(out, 'epoch_001.vxae')))
        self.assertTrue(os.path.exists(os.path.join(out, 'epoch_002.vxae')))
        metrics = read_metrics_csv(os.path.join(out, 'metrics.csv'))
        self.assertEqual(sorted(set(metrics.split)), ['eval', 'train'])
        self.assertEqual(metrics.step.max(), 4)
        self.assertTrue((metrics.wall_seconds == 0).all())

    def test_checkpoint_epoch_counts_completed_epochs(self):
        out = os.path.join(self.tmp, 'run')
        result = train(_config(self.data, checkpoint_dir=out))
        self.assertEqual(result.checkpoint.metadata['epoch'], 2)
        for name, epoch, step in (('epoch_001.vxae', 1, 2),
                                  ('epoch_002.vxae', 2, 4),
                                  ('last.vxae', 2, 4)):
            checkpoint = load_checkpoint(os.path.join(out, name))
            self.assertEqual(checkpoint.metadata['epoch'], epoch)
            self.assertEqual(checkpoint.step, step)
            self.assertEqual(checkpoint.metadata['seed'], 7)
        stopped = train(_config(self.data, epochs=5, max_steps=3,
                                eval_every=100))
        self.assertEqual(stopped.checkpoint.metadata['epoch'], 1)

    def test_records_are_streamed(self):
        seen = []
        result = train(_config(self.data), on_record=seen.append)
        self.assertEqual(seen, result.records)
        self.assertEqual([r.split for r in seen],
                         ['train', 'eval'] * 4)
        self.assertEqual(result.final_eval, seen[-1].mse)
        self.assertEqual(len(result.epoch_seconds), 2)
        self.assertEqual(result.checkpoint.step, 4)

    def test_resume_matches_uninterrupted_run(self):
        out = os.path.join(self.tmp, 'full')
        full = train(_config(self.data, checkpoint_dir=out))
        resumed = train(_config(self.data),
                        resume_from=os.path.join(out, 'epoch_001.vxae'))
        self.assertEqual(resumed.records, full.records[4:])
        for name, array in full.model.state_arrays().items():
            assert_array_equal(resumed.model.state_arrays()[name], array)

    def test_resume_other_model(self):
        out = os.path.join(self.tmp, 'base')
        train(_config(self.data, model='baseline', epochs=1,
                      checkpoint_dir=out))
        with self.assertRaises(CheckpointError):
            train(_config(self.data),
                  resume_from=os.path.join(out, 'last.vxae'))

    def test_zero_learning_rate_keeps_parameters(self):
        result = train(_config(self.data, lr=0.0))
        fresh = Model(build_model_spec('residual', 16, 'tiny'), seed=7)
        for name, t in fresh.parameters().items():
            assert_array_equal(result.model.parameters()[name].data, t.data)

    def test_max_steps(self):
        result = train(_config(self.data, epochs=5, max_steps=3,
                               eval_every=100))
        splits = [r.split for r in result.records]
        self.assertEqual(splits, ['train'] * 3 + ['eval'])
        self.assertEqual(result.checkpoint.step, 3)

    def test_prefetching_gives_the_same_losses(self):
        a = train(_config(self.data))
        b = train(_config(self.data, determinism=False, prefetch=2))
        self.assertEqual([r.mse for r in a.records],
                         [r.mse for r in b.records])

    def test_non_finite_loss(self):
        with mock.patch('voxelae._trainer.mse_loss',
                        side_effect=lambda pred, target:
                        Tensor(np.array(np.nan, dtype=np.float32))):
            with self.assertRaises(NonFiniteLossError) as ctx:
                train(_config(self.data))
        self.assertEqual(ctx.exception.step, 0)
        self.assertIsInstance(ctx.exception, FloatingPointError)

    def test_empty_training_split(self):
        root = os.path.join(self.tmp, 'one')
        os.makedirs(root)
        _full_grid(root)
        with self.assertRaises(DataError):
            train(_config(root, test_fraction=0.6))
        with self.assertRaises(DataError):
            train(_config(os.path.join(self.tmp, 'missing')))

    def test_evaluate(self):
        result = train(_config(self.data, epochs=1))
        index = build_index(self.data, 0.34, 7)
        by_model = evaluate(result.model, index, 'test')
        by_checkpoint = evaluate(result.checkpoint, index, 'test')
        self.assertAlmostEqual(by_model, by_checkpoint, places=6)
        self.assertAlmostEqual(by_model, result.final_eval, places=6)
        self.assertEqual(len(index.ids('test')), 2)
        one = evaluate(result.model, index, 'test', max_samples=1)
        self.assertGreaterEqual(one, 0.0)

    def test_evaluate_changes_nothing(self):
        result = train(_config(self.data, epochs=1))
        index = build_index(self.data, 0.34, 7)
        state = {n: a.copy() for n, a in result.model.state_arrays().items()}
        tensors = {n: a.copy() for n, a in result.checkpoint.tensors.items()}
        adam = restore_adam(result.checkpoint)
        scores = [evaluate(result.model, index, split)
                  for split in ('test', 'train', 'test', 'train')]
        scores += [evaluate(result.checkpoint, index, 'test')]
        self.assertEqual(scores[0], scores[2])
        self.assertEqual(scores[1], scores[3])
        self.assertAlmostEqual(scores[4], scores[0], places=6)
        for name, array in result.model.state_arrays().items():
            assert_array_equal(array, state[name], err_msg=name)
        for name, array in result.checkpoint.tensors.items():
            assert_array_equal(array, tensors[name], err_msg=name)
        after = restore_adam(result.checkpoint)
        self.assertEqual(after.t, adam.t)
        for name, m in adam.m.items():
            assert_array_equal(after.m[name], m)
            assert_array_equal(after.v[name], adam.v[name])

    def test_eval_frequency_does_not_change_training(self):
        often = train(_config(self.data, eval_every=1))
        rarely = train(_config(self.data, eval_every=1000))
        self.assertEqual([r.mse for r in often.records if r.split == 'train'],
                         [r.mse for r in rarely.records
                          if r.split == 'train'])
        self.assertEqual([r.split for r in rarely.records],
                         ['train'] * 4 + ['eval'])
        for name, array in often.checkpoint.tensors.items():
            assert_array_equal(rarely.checkpoint.tensors[name], array,
                               err_msg=name)

    def test_zero_prediction_scores_the_occupied_fraction(self):
        index = build_index(self.data, 0.34, 7)
        for split in ('test', 'train'):
            x = load_batch(index, index.ids(split), 16).data
            fractions = x.reshape(x.shape[0], -1).mean(axis=1)
            self.assertAlmostEqual(evaluate(_Zeros(), index, split, dim=16,
                                            batch_size=3),
                                   fractions.mean(), places=6)

    def test_single_value_batch_norm_warns(self):
        with self.assertLogs('voxelae._trainer', 'WARNING') as logs:
            train(_config(self.data, batch_size=1, max_steps=1))
        self.assertIn('batch size 1', logs.output[0])
        with self.assertLogs('voxelae._trainer', 'INFO') as logs:
            train(_config(self.data, batch_size=1, max_steps=1,
                          model='baseline'))
        self.assertFalse([line for line in logs.output
                          if line.startswith('WARNING')])


class LearningTests(unittest.TestCase):

    def test_models_reduce_the_loss(self):
        with tempfile.TemporaryDirectory() as tmp:
            _full_grid(tmp)
            for name in ('baseline', 'residual'):
                result = train(_config(tmp, model=name, test_fraction=0.0,
                                       batch_size=1, epochs=40, lr=0.02,
                                       eval_every=1000))
                train_mse = [r.mse for r in result.records]
                self.assertEqual(len(train_mse), 40)
                self.assertLess(train_mse[-1], train_mse[0], msg=name)

    def test_both_models_learn_a_fixed_batch(self):
        with tempfile.TemporaryDirectory() as tmp:
            for i, (center, radius) in enumerate(
                    [((5, 5, 5), 3), ((9, 8, 7), 4), ((7, 10, 6), 5),
                     ((10, 6, 10), 3.5)]):
                _ball(tmp, 'ball_%d.binvox' % i, center, radius)
            for name in ('baseline', 'residual'):
                result = train(_config(tmp, model=name, test_fraction=0.0,
                                       batch_size=4, epochs=20, lr=0.02,
                                       eval_every=1000))
                train_mse = [r.mse for r in result.records]
                self.assertEqual(len(train_mse), 20)
                self.assertLess(train_mse[-1], 0.8 * train_mse[0], msg=name)

    def test_overfits_a_single_shape(self):
        with tempfile.TemporaryDirectory() as tmp:
            _ball(tmp, 'ball.binvox')
            result = train(_config(tmp, test_fraction=0.0, batch_size=1,
                                   epochs=200, lr=0.01, eval_every=1000))
        train_mse = [r.mse for r in result.records]
        self.assertEqual(len(train_mse), 200)
        self.assertLess(min(train_mse), 1e-3)

    def test_loss_decreases_at_the_default_rate(self):
        with tempfile.TemporaryDirectory() as tmp:
            _ball(tmp, 'ball.binvox', (8, 7, 6), 4.5)
            result = train(TrainConfig(tmp, model='residual',
                                       width_preset='tiny', dim=16,
                                       batch_size=1, epochs=200,
                                       eval_every=1000, test_fraction=0.0,
                                       seed=3, determinism=True))
        train_mse = [r.mse for r in result.records]
        self.assertEqual(len(train_mse), 200)
        self.assertLess(np.mean(train_mse[-20:]), np.mean(train_mse[:20]))

    def test_fit_classifier_keeps_encoder_frozen(self):
        model = Model(build_model_spec('residual', 16, 'tiny'), seed=2)
        encoder = import_encoder(export_encoder(model))
        before = {n: t.data.copy() for n, t in encoder.parameters().items()}
        rng = np.random.RandomState(0)
        grids = (rng.rand(4, 1, 16, 16, 16) > 0.5).astype(np.float32)
        losses = fit_classifier(encoder, ClassifierHead(256, 2), grids,
                                np.array([0, 1, 0, 1]), steps=30, lr=0.05)
        self.assertEqual(len(losses), 30)
        self.assertLess(losses[-1], losses[0])
        for name, t in encoder.parameters().items():
            assert_array_equal(t.data, before[name])


if __name__ == "__main__":
    unittest.main()
