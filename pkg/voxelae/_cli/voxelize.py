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
from voxelae._cli import cli
from voxelae._dataset import make_primitive_corpus, voxelize_paths

# import default descriptions
from voxelae._defaults import (DESC_IN_MESH, DESC_OUT_DIR, DESC_DIM,
                               DESC_JOBS, DESC_COUNT, DESC_SEED,
                               DESC_MARGIN)

# import default values
from voxelae._defaults import (DEFAULT_DIM, DEFAULT_JOBS,
                               DEFAULT_CORPUS_COUNT, DEFAULT_SEED,
                               DEFAULT_MARGIN)


@cli.command(name='voxelize')
@click.option('-i', '--in', 'in_path', required=True,
              type=click.Path(dir_okay=True, file_okay=True),
              help=DESC_IN_MESH)
@click.option('-o', '--out', 'output_dir', required=True,
              type=click.Path(exists=False, dir_okay=True, file_okay=False,
                              writable=True),
              help=DESC_OUT_DIR)
@click.option('--dim', required=False, default=DEFAULT_DIM,
              type=click.IntRange(min=2, max=None), show_default=True,
              help=DESC_DIM)
@click.option('--jobs', required=False, default=DEFAULT_JOBS,
              type=click.IntRange(min=1, max=None), show_default=True,
              help=DESC_JOBS)
@click.option('--margin', required=False, default=DEFAULT_MARGIN,
              type=click.IntRange(min=0, max=None), show_default=True,
              help=DESC_MARGIN)
def voxelize(in_path, output_dir, dim, jobs, margin):
    '''Voxelize STL meshes into binvox grids.

    With the default margin of 0 a mesh spans its grid edge to edge; pass
    --margin 1 to keep an empty voxel border around every shape.
    '''
    written = voxelize_paths(in_path, output_dir, dim, jobs, margin)
    for row in written.itertuples(index=False):
        flag = ' (surface only)' if row.surface_only else ''
        click.echo('%s\t%.6f%s' % (row.output, row.occupied_fraction, flag))


@cli.command(name='make-corpus')
@click.option('-o', '--out', 'output_dir', required=True,
              type=click.Path(exists=False, dir_okay=True, file_okay=False,
                              writable=True),
              help=DESC_OUT_DIR)
@click.option('--count', required=False, default=DEFAULT_CORPUS_COUNT,
              type=click.IntRange(min=1, max=None), show_default=True,
              help=DESC_COUNT)
@click.option('--seed', required=False, default=DEFAULT_SEED,
              type=click.INT, show_default=True, help=DESC_SEED)
@click.option('--dim', required=False, default=0,
              type=click.IntRange(min=0, max=None), show_default=True,
              help=DESC_DIM + ' 0 writes binary STL meshes instead of '
                              'binvox grids.')
def make_corpus(output_dir, count, seed, dim):
    '''Write a synthetic corpus of primitive shapes.'''
    paths = make_primitive_corpus(output_dir, count, seed, dim or None)
    click.echo('Wrote %d files to %s.' % (len(paths), output_dir))
