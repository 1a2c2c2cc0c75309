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
import os
import queue
import threading
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
import pandas as pd

from voxelae._binvox import read_binvox, write_binvox
from voxelae._defaults import (DEFAULT_TEST_FRACTION, DEFAULT_SEED,
                               DEFAULT_PREFETCH, DEFAULT_CORPUS_COUNT,
                               DEFAULT_JOBS, DEFAULT_MARGIN)
from voxelae._stl import (parse_stl, write_stl, box_mesh, icosphere,
                          cylinder_mesh, torus_mesh)
from voxelae._tensor import Tensor
from voxelae._util import atomic_write
from voxelae._voxelize import voxelize

logger = logging.getLogger(__name__)

MESH_SUFFIXES = ('.stl', '.binvox')


class DataError(ValueError):
    """Raised for an empty or missing dataset, or an unusable data file."""


@dataclass(frozen=True)
class DatasetIndex:
    '''Immutable train/test assignment of dataset files.

    Attributes
    ----------
    entries : tuple of (str, str)
        (path, split) pairs, split in {'train', 'test'}, sorted by path.
    test_fraction : float
        Requested fraction of test entries.
    seed : int
        Seed of the shuffle that produced the split.
    '''
    entries: tuple
    test_fraction: float = DEFAULT_TEST_FRACTION
    seed: int = DEFAULT_SEED
    root: str = field(default='', compare=False)

    def __len__(self):
        return len(self.entries)

    def paths(self, split=None):
        '''Paths of one split (or all paths), in index order.'''
        return [p for p, s in self.entries if split is None or s == split]

    def ids(self, split):
        '''Entry positions of one split, in index order.'''
        return [i for i, (_, s) in enumerate(self.entries) if s == split]

    def to_frame(self):
        return pd.DataFrame(list(self.entries), columns=['path', 'split'])


def find_mesh_files(root):
    '''Sorted *.stl and *.binvox files under `root` (or `root` itself).'''
    if os.path.isfile(root):
        return [root]
    if not os.path.isdir(root):
        raise DataError('Dataset root %s does not exist.' % root)
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            if name.lower().endswith(MESH_SUFFIXES):
                found.append(os.path.join(dirpath, name))
    return sorted(found)


def build_index(root, test_fraction=DEFAULT_TEST_FRACTION,
                seed=DEFAULT_SEED):
    '''Scan `root` and split its files into train and test.

    Parameters
    ----------
    root : str
        Directory scanned recursively for *.stl and *.binvox files.
    test_fraction : float
        In [0, 1). `round(test_fraction * n)` files go to the test split.
    seed : int
        Seed of the permutation that picks the test files.

    Returns
    -------
    DatasetIndex

    Raises
    ------
    DataError
        If `root` is missing or holds no usable files.
    '''
    if not 0 <= test_fraction < 1:
        raise ValueError('test_fraction must be in [0, 1), got %r.'
                         % test_fraction)
    paths = find_mesh_files(root)
    if not paths:
        raise DataError('No *.stl or *.binvox files found under %s.' % root)
    n = len(paths)
    n_test = int(round(test_fraction * n))
    order = np.random.RandomState(seed).permutation(n)
    test = set(order[:n_test].tolist())
    entries = tuple((p, 'test' if i in test else 'train')
                    for i, p in enumerate(paths))
    logger.info('Indexed %d files under %s: %d train, %d test.', n, root,
                n - n_test, n_test)
    return DatasetIndex(entries, test_fraction, seed, root=root)


def voxelize_file(path, dim, margin=DEFAULT_MARGIN):
    '''Load a grid from an STL (voxelized with `margin`) or binvox (read as
    is) file.

    Raises
    ------
    DataError
        If the suffix is unknown or a binvox file has another resolution.
    '''
    with open(path, 'rb') as f:
        data = f.read()
    if path.lower().endswith('.binvox'):
        grid = read_binvox(data)
        if grid.dim != dim:
            raise DataError('%s has resolution %d, expected %d; binvox files '
                            'are not resampled.' % (path, grid.dim, dim))
        return grid
    if path.lower().endswith('.stl'):
        return voxelize(parse_stl(data), dim, margin=margin)
    raise DataError('Unknown mesh file type: %s.' % path)


def load_batch(index, ids, dim, skipped=None, cache=None):
    '''Stack the grids of entries `ids` into an (N, 1, dim, dim, dim) tensor.

    Files that fail to load are logged and skipped; their paths are appended
    to `skipped` when a list is given. `cache` is an optional dict of
    path -> occupancy reused across calls.
    '''
    grids = []
    for i in ids:
        path = index.entries[i][0]
        occ = None if cache is None else cache.get(path)
        if occ is None:
            try:
                occ = voxelize_file(path, dim).occupancy
            except (OSError, ValueError) as e:
                logger.warning('Skipping %s: %s', path, e)
                if skipped is not None:
                    skipped.append(path)
                continue
            if cache is not None:
                cache[path] = occ
        grids.append(occ)
    if not grids:
        return Tensor(np.zeros((0, 1, dim, dim, dim), dtype=np.float32))
    return Tensor(np.stack(grids)[:, None].astype(np.float32))


class BatchPrefetcher(object):
    '''Load batches on a producer thread ahead of the consumer.

    Parameters
    ----------
    batches : iterable
        Batch arguments, handed to `load` one at a time.
    load : callable
        Maps one batch argument to a loaded batch.
    depth : int
        Maximum number of loaded batches waiting in the queue.

    Batches are yielded in the order of `batches`. An exception raised by
    `load` is re-raised in the consumer.
    '''

    _done = object()

    def __init__(self, batches, load, depth=DEFAULT_PREFETCH):
        if depth < 1:
            raise ValueError('Prefetch depth must be >= 1, got %r.' % depth)
        self._queue = queue.Queue(maxsize=depth)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._produce,
                                        args=(iter(batches), load),
                                        daemon=True)
        self._thread.start()

    def _put(self, item):
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self, batches, load):
        try:
            for b in batches:
                if not self._put((None, load(b))):
                    return
        except BaseException as e:
            self._put((e, None))
            return
        self._put((None, self._done))

    def __iter__(self):
        while True:
            error, item = self._queue.get()
            if error is not None:
                raise error
            if item is self._done:
                return
            yield item

    def close(self):
        self._stop.set()
        self._thread.join()


def _voxelize_one(args):
    src, dst, dim, margin = args
    grid = voxelize_file(src, dim, margin)
    atomic_write(dst, write_binvox(grid))
    return src, dst, grid.occupied_fraction, grid.surface_only


def voxelize_paths(root, out_dir, dim, jobs=DEFAULT_JOBS,
                   margin=DEFAULT_MARGIN):
    '''Write one binvox per mesh file under `root` into `out_dir`.

    The directory layout below `root` is mirrored. Results come back in
    sorted input order whatever the number of `jobs`.

    Returns
    -------
    pd.DataFrame
        Columns source, output, occupied_fraction, surface_only.
    '''
    sources = [p for p in find_mesh_files(root)
               if p.lower().endswith('.stl')]
    base = root if os.path.isdir(root) else os.path.dirname(root)
    args = [(src, os.path.join(out_dir, os.path.splitext(
        os.path.relpath(src, base))[0] + '.binvox'), dim, margin)
        for src in sources]
    if not args:
        logger.warning('No STL files found under %s.', root)
    os.makedirs(out_dir, exist_ok=True)
    if jobs > 1 and len(args) > 1:
        with Pool(jobs) as p:
            results = p.map(_voxelize_one, args)
    else:
        results = [_voxelize_one(a) for a in args]
    return pd.DataFrame(results, columns=['source', 'output',
                                          'occupied_fraction',
                                          'surface_only'])


def random_primitive(rng):
    '''One box, sphere, cylinder or torus with random proportions.

    Returns
    -------
    kind : str
    mesh : TriangleMesh
    '''
    kind = ['box', 'sphere', 'cylinder', 'torus'][rng.randint(4)]
    if kind == 'box':
        mesh = box_mesh((0, 0, 0), rng.uniform(0.3, 1.0, size=3))
    elif kind == 'sphere':
        mesh = icosphere(2, radius=1.0).transformed(
            scale=rng.uniform(0.5, 1.0))
    elif kind == 'cylinder':
        mesh = cylinder_mesh(radius=rng.uniform(0.2, 0.5),
                             height=rng.uniform(0.3, 1.0), segments=24)
    else:
        mesh = torus_mesh(major=1.0, minor=rng.uniform(0.15, 0.45),
                          segments=24, sides=12)
    return kind, mesh


def make_primitive_corpus(root, count=DEFAULT_CORPUS_COUNT, seed=DEFAULT_SEED,
                          dim=None):
    '''Write a synthetic corpus of primitive meshes.

    Parameters
    ----------
    root : str
        Output directory, created if missing.
    count : int
        Number of files.
    seed : int
        Seed of the shapes and proportions.
    dim : int, optional
        When given, the meshes are voxelized and written as binvox at this
        resolution instead of as binary STL.

    Returns
    -------
    list of str
        Paths written, in generation order.
    '''
    rng = np.random.RandomState(seed)
    os.makedirs(root, exist_ok=True)
    written = []
    for i in range(count):
        kind, mesh = random_primitive(rng)
        stem = os.path.join(root, 'primitive_%04d_%s' % (i, kind))
        if dim is None:
            path = stem + '.stl'
            atomic_write(path, write_stl(mesh))
        else:
            path = stem + '.binvox'
            atomic_write(path, write_binvox(voxelize(mesh, dim)))
        written.append(path)
    logger.info('Wrote %d primitives to %s.', count, root)
    return written
