#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import json
import os

import click
import matplotlib.pyplot as plt
from voxelae._cli import cli
from voxelae._checkpoint import load_checkpoint, restore_model
from voxelae._compare import compare as compare_runs, compare_labels
from voxelae._dataset import DataError, build_index
from voxelae._models import model_names, residual_presets
from voxelae._plot import plot_loss_curves
from voxelae._trainer import TrainConfig, evaluate, train as train_model
from voxelae._util import atomic_write

# import default descriptions
from voxelae._defaults import (DESC_MODEL, DESC_DATA, DESC_EPOCHS, DESC_BATCH,
                               DESC_LR, DESC_SEED, DESC_OUT_DIR,
                               DESC_EVAL_EVERY, DESC_MAX_STEPS,
                               DESC_EVAL_SAMPLES, DESC_DIM, DESC_PRESET,
                               DESC_TEST_FRACTION, DESC_DETERMINISM,
                               DESC_RESUME, DESC_CKPT)

# import default values
from voxelae._defaults import (DEFAULT_MODEL, DEFAULT_EPOCHS, DEFAULT_BATCH,
                               DEFAULT_LR, DEFAULT_SEED, DEFAULT_EVAL_EVERY,
                               DEFAULT_DIM, DEFAULT_PRESET,
                               DEFAULT_TEST_FRACTION)


def _run_options(f):
    '''Options shared by `train` and `compare`.'''
    options = [
        click.option('--data', required=True, type=click.Path(),
                     help=DESC_DATA),
        click.option('-o', '--out', 'output_dir', required=True,
                     type=click.Path(exists=False, dir_okay=True,
                                     file_okay=False, writable=True),
                     help=DESC_OUT_DIR),
        click.option('--epochs', required=False, default=DEFAULT_EPOCHS,
                     type=click.IntRange(min=1, max=None), show_default=True,
                     help=DESC_EPOCHS),
        click.option('--batch', required=False, default=DEFAULT_BATCH,
                     type=click.IntRange(min=1, max=None), show_default=True,
                     help=DESC_BATCH),
        click.option('--lr', required=False, default=DEFAULT_LR,
                     type=click.FloatRange(min=0, max=None),
                     show_default=True, help=DESC_LR),
        click.option('--seed', required=False, default=DEFAULT_SEED,
                     type=click.INT, show_default=True, help=DESC_SEED),
        click.option('--eval-every', required=False,
                     default=DEFAULT_EVAL_EVERY,
                     type=click.IntRange(min=1, max=None), show_default=True,
                     help=DESC_EVAL_EVERY),
        click.option('--max-steps', required=False, default=0,
                     type=click.IntRange(min=0, max=None), show_default=True,
                     help=DESC_MAX_STEPS),
        click.option('--eval-samples', required=False, default=0,
                     type=click.IntRange(min=0, max=None), show_default=True,
                     help=DESC_EVAL_SAMPLES),
        click.option('--dim', required=False, default=DEFAULT_DIM,
                     type=click.IntRange(min=2, max=None), show_default=True,
                     help=DESC_DIM),
        click.option('--preset', required=False, default=DEFAULT_PRESET,
                     type=click.Choice(residual_presets()),
                     show_default=True, help=DESC_PRESET),
        click.option('--test-fraction', required=False,
                     default=DEFAULT_TEST_FRACTION,
                     type=click.FloatRange(min=0, max=1, max_open=True),
                     show_default=True,
                     help=DESC_TEST_FRACTION),
        click.option('--determinism/--no-determinism', required=False,
                     default=False, show_default=True,
                     help=DESC_DETERMINISM)]
    for option in reversed(options):
        f = option(f)
    return f


def _config(model, data, output_dir, epochs, batch, lr, seed, eval_every,
            max_steps, eval_samples, dim, preset, test_fraction,
            determinism):
    return TrainConfig(data=data, model=model, epochs=epochs,
                       batch_size=batch, lr=lr, seed=seed,
                       eval_every=eval_every, checkpoint_dir=output_dir,
                       determinism=determinism, dim=dim,
                       width_preset=preset, test_fraction=test_fraction,
                       max_steps=max_steps, eval_samples=eval_samples)


def _echo_record(record, label=None):
    row = record.to_dict()
    if label is not None:
        row = dict(label=label, **row)
    click.echo(json.dumps(row))


@cli.command(name='train')
@click.option('--model', required=False, default=DEFAULT_MODEL,
              type=click.Choice(model_names()), show_default=True,
              help=DESC_MODEL)
@_run_options
@click.option('--resume', required=False, default=None, type=click.Path(),
              help=DESC_RESUME)
def train(model, data, output_dir, epochs, batch, lr, seed, eval_every,
          max_steps, eval_samples, dim, preset, test_fraction, determinism,
          resume):
    '''Train an autoencoder and write checkpoints and metrics.'''
    config = _config(model, data, output_dir, epochs, batch, lr, seed,
                     eval_every, max_steps, eval_samples, dim, preset,
                     test_fraction, determinism)
    os.makedirs(output_dir, exist_ok=True)
    result = train_model(config, resume_from=resume, on_record=_echo_record)
    if result.skipped_files:
        click.echo('Skipped %d unloadable files.'
                   % len(result.skipped_files), err=True)


@cli.command(name='eval')
@click.option('--ckpt', required=True, type=click.Path(), help=DESC_CKPT)
@click.option('--data', required=True, type=click.Path(), help=DESC_DATA)
@click.option('--split', required=False, default='test',
              type=click.Choice(['train', 'test']), show_default=True,
              help='Dataset split to evaluate.')
@click.option('--batch', required=False, default=DEFAULT_BATCH,
              type=click.IntRange(min=1, max=None), show_default=True,
              help=DESC_BATCH)
@click.option('--eval-samples', required=False, default=0,
              type=click.IntRange(min=0, max=None), show_default=True,
              help=DESC_EVAL_SAMPLES)
@click.option('--test-fraction', required=False,
              default=DEFAULT_TEST_FRACTION,
              type=click.FloatRange(min=0, max=1, max_open=True),
              show_default=True,
              help=DESC_TEST_FRACTION)
@click.option('--seed', required=False, default=DEFAULT_SEED,
              type=click.INT, show_default=True, help=DESC_SEED)
def eval_(ckpt, data, split, batch, eval_samples, test_fraction, seed):
    '''Reconstruction MSE of a checkpoint on one dataset split.'''
    model = restore_model(load_checkpoint(ckpt))
    index = build_index(data, test_fraction, seed)
    skipped = []
    mse = evaluate(model, index, split, model.spec.input_dim, batch,
                   eval_samples, skipped=skipped)
    if mse is None:
        raise DataError('The %s split of %s holds no loadable grid.'
                        % (split, data))
    click.echo(json.dumps({'model': model.spec.name, 'split': split,
                           'mse': mse, 'skipped': len(skipped)}))


@cli.command(name='compare')
@click.option('--model-a', required=False, default='baseline',
              type=click.Choice(model_names()), show_default=True,
              help='First model of the comparison.')
@click.option('--model-b', required=False, default='residual',
              type=click.Choice(model_names()), show_default=True,
              help='Second model of the comparison.')
@_run_options
def compare(model_a, model_b, data, output_dir, epochs, batch, lr, seed,
            eval_every, max_steps, eval_samples, dim, preset, test_fraction,
            determinism):
    '''Train two models on the same data and report them side by side.'''
    shared = (data, None, epochs, batch, lr, seed, eval_every, max_steps,
              eval_samples, dim, preset, test_fraction, determinism)
    config_a = _config(model_a, *shared)
    config_b = _config(model_b, *shared)
    labels = compare_labels(config_a, config_b)
    config_a, config_b = [
        _config(m, data, os.path.join(output_dir, label), *shared[2:])
        for m, label in zip((model_a, model_b), labels)]
    os.makedirs(output_dir, exist_ok=True)

    report = compare_runs(config_a, config_b, labels,
                          on_record=lambda label, r: _echo_record(r, label))

    atomic_write(os.path.join(output_dir, 'compare_steps.csv'),
                 report.steps.to_csv(index_label='step',
                                     float_format='%.9g'))
    atomic_write(os.path.join(output_dir, 'compare_wallclock.csv'),
                 report.wallclock.to_csv(index=False, float_format='%.9g'))
    atomic_write(os.path.join(output_dir, 'compare_final.csv'),
                 report.final.to_csv(float_format='%.9g'))
    for x, name in (('step', 'loss_vs_step.png'),
                    ('wall_seconds', 'loss_vs_time.png')):
        fig, ax = plot_loss_curves(report.wallclock, x=x)
        fig.savefig(os.path.join(output_dir, name), dpi=150)
        plt.close(fig)

    summary = {'labels': list(report.labels),
               'final_eval_mse': report.final['final_eval_mse'].to_dict(),
               'params': {k: int(v) for k, v in
                          report.final['params'].items()},
               'speedup': report.speedup}
    click.echo(json.dumps(summary))
