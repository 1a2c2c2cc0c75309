#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import click
import numpy as np
import pandas as pd
from voxelae._binvox import write_binvox
from voxelae._blocks import count_params
from voxelae._cli import cli
from voxelae._checkpoint import (load_checkpoint, import_encoder,
                                 restore_model)
from voxelae._dataset import voxelize_file
from voxelae._models import (build_model_spec, model_names,
                             residual_presets, shape_trace)
from voxelae._tensor import no_grad
from voxelae._util import atomic_write
from voxelae._voxelize import VoxelGrid

# import default descriptions
from voxelae._defaults import (DESC_CKPT, DESC_IN_GRIDS, DESC_OUT_CSV,
                               DESC_OUT_BINVOX, DESC_THRESHOLD, DESC_SPEC,
                               DESC_DIM, DESC_PRESET)

# import default values
from voxelae._defaults import DEFAULT_THRESHOLD, DEFAULT_DIM, DEFAULT_PRESET


def _stack(paths, dim):
    grids = [voxelize_file(p, dim) for p in paths]
    x = np.stack([g.occupancy for g in grids])[:, None].astype(np.float32)
    return grids, x


@cli.command(name='encode')
@click.option('--ckpt', required=True, type=click.Path(), help=DESC_CKPT)
@click.option('-i', '--in', 'in_paths', required=True, multiple=True,
              type=click.Path(), help=DESC_IN_GRIDS)
@click.option('-o', '--out', 'output_fp', required=True,
              type=click.Path(dir_okay=False, writable=True),
              help=DESC_OUT_CSV)
def encode(ckpt, in_paths, output_fp):
    '''Write the latent code of every input grid as one CSV row.'''
    encoder = import_encoder(load_checkpoint(ckpt))
    _, x = _stack(in_paths, encoder.spec.input_dim)
    with no_grad():
        codes = encoder.encode(x).data
    columns = ['z%d' % i for i in range(codes.shape[1])]
    codes = pd.DataFrame(codes, index=pd.Index(in_paths, name='path'),
                         columns=columns)
    atomic_write(output_fp, codes.to_csv(float_format='%.9g'))


@cli.command(name='reconstruct')
@click.option('--ckpt', required=True, type=click.Path(), help=DESC_CKPT)
@click.option('-i', '--in', 'in_path', required=True, type=click.Path(),
              help=DESC_IN_GRIDS)
@click.option('-o', '--out', 'output_fp', required=True,
              type=click.Path(dir_okay=False, writable=True),
              help=DESC_OUT_BINVOX)
@click.option('--threshold', required=False, default=DEFAULT_THRESHOLD,
              type=click.FLOAT, show_default=True, help=DESC_THRESHOLD)
def reconstruct(ckpt, in_path, output_fp, threshold):
    '''Autoencode one grid and write the thresholded reconstruction.'''
    model = restore_model(load_checkpoint(ckpt))
    (grid,), x = _stack([in_path], model.spec.input_dim)
    probabilities = model.predict(x)[0, 0]
    out = VoxelGrid(probabilities > threshold, grid.translate, grid.scale)
    atomic_write(output_fp, write_binvox(out))
    accuracy = float(np.mean(out.occupancy == grid.occupancy))
    click.echo('%s\toccupied %.6f\tvoxel accuracy %.6f'
               % (output_fp, out.occupied_fraction, accuracy))


@cli.command(name='inspect')
@click.option('--ckpt', required=False, default=None, type=click.Path(),
              help=DESC_CKPT)
@click.option('--spec', 'model_name', required=False, default=None,
              type=click.Choice(model_names()), help=DESC_SPEC)
@click.option('--dim', required=False, default=DEFAULT_DIM,
              type=click.IntRange(min=2, max=None), show_default=True,
              help=DESC_DIM + ' Used with --spec.')
@click.option('--preset', required=False, default=DEFAULT_PRESET,
              type=click.Choice(residual_presets()), show_default=True,
              help=DESC_PRESET)
def inspect(ckpt, model_name, dim, preset):
    '''Print a model description, its shape trace and parameter counts.'''
    if (ckpt is None) == (model_name is None):
        raise click.UsageError('Give exactly one of --ckpt and --spec.')
    if ckpt is not None:
        spec = load_checkpoint(ckpt).spec
    else:
        spec = build_model_spec(model_name, dim, preset)
    click.echo(spec.to_text())
    with pd.option_context('display.width', 200,
                           'display.max_rows', None):
        click.echo(shape_trace(spec).to_string(index=False))
    encoder = count_params(spec.encoder)
    decoder = count_params(spec.decoder)
    click.echo('encoder parameters: %d' % encoder)
    click.echo('decoder parameters: %d' % decoder)
    click.echo('total parameters: %d' % (encoder + decoder))
