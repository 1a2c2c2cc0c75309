#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
"""binvox v1 container.

A text header (``#binvox 1``, ``dim``, ``translate``, ``scale``, ``data``)
followed by (value, count) byte pairs. Voxels are linearized with y fastest,
then z, then x: index = x * dim^2 + z * dim + y.
"""

import numpy as np

from voxelae._voxelize import VoxelGrid

_MAX_RUN = 255


class BinvoxFormatError(ValueError):
    """Raised on a malformed binvox header or run-length payload."""


def _runs(flat):
    '''(values, lengths) of the maximal runs of a 1-D array.'''
    if flat.size == 0:
        return flat[:0], np.zeros(0, dtype=np.int64)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(flat)) + 1])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    return flat[starts], lengths


def encode_rle(flat):
    '''Canonical run-length pairs for a 1-D array of 0/1 bytes.

    Runs are maximal and split into chunks of at most 255 voxels, e.g. a run
    of 300 becomes (v, 255) (v, 45).
    '''
    values, lengths = _runs(np.asarray(flat, dtype=np.uint8))
    full, rest = np.divmod(lengths, _MAX_RUN)
    chunks = full + (rest > 0)
    out_values = np.repeat(values, chunks)
    out_counts = np.full(out_values.size, _MAX_RUN, dtype=np.int64)
    last = np.cumsum(chunks) - 1
    out_counts[last[rest > 0]] = rest[rest > 0]
    pairs = np.empty(2 * out_values.size, dtype=np.uint8)
    pairs[0::2] = out_values
    pairs[1::2] = out_counts
    return pairs.tobytes()


def decode_rle(payload, size):
    '''Expand run-length pairs into `size` voxels.

    Raises
    ------
    BinvoxFormatError
        If the payload has an odd length, a zero count, a value other than 0
        or 1, or encodes more (overrun) or fewer (underrun) than `size`
        voxels.
    '''
    raw = np.frombuffer(payload, dtype=np.uint8)
    if raw.size % 2:
        raise BinvoxFormatError('binvox data has an odd number of bytes '
                                '(%d).' % raw.size)
    values, counts = raw[0::2], raw[1::2]
    if (counts == 0).any():
        raise BinvoxFormatError('binvox run %d has count 0.'
                                % int(np.flatnonzero(counts == 0)[0]))
    if (values > 1).any():
        raise BinvoxFormatError('binvox run %d has value %d; only 0 and 1 '
                                'are allowed.'
                                % (int(np.flatnonzero(values > 1)[0]),
                                   int(values[values > 1][0])))
    total = int(counts.sum(dtype=np.int64))
    if total > size:
        raise BinvoxFormatError('binvox data overruns the grid: %d voxels '
                                'encoded, %d expected.' % (total, size))
    if total < size:
        raise BinvoxFormatError('binvox data underruns the grid: %d voxels '
                                'encoded, %d expected.' % (total, size))
    return np.repeat(values, counts)


def write_binvox(grid):
    '''Serialize a `VoxelGrid` as binvox bytes.'''
    d = grid.dim
    header = ('#binvox 1\ndim %d %d %d\ntranslate %s\nscale %s\ndata\n'
              % (d, d, d, ' '.join(repr(t) for t in grid.translate),
                 repr(grid.scale)))
    # [x, y, z] -> [x, z, y] so that y runs fastest.
    flat = np.transpose(grid.occupancy, (0, 2, 1)).ravel()
    return header.encode('ascii') + encode_rle(flat)


def _header_line(data, pos):
    end = data.find(b'\n', pos)
    if end < 0:
        raise BinvoxFormatError('binvox header ends early at byte %d.' % pos)
    return data[pos:end].decode('ascii', 'replace').strip(), end + 1


def read_binvox(data):
    '''Parse binvox bytes into a `VoxelGrid`.

    Raises
    ------
    BinvoxFormatError
        On a bad magic line or a version other than 1, non-cubic dims, a
        missing header field or a malformed run-length payload.
    '''
    data = bytes(data)
    line, pos = _header_line(data, 0)
    magic = line.split()
    if not magic or magic[0] != '#binvox':
        raise BinvoxFormatError('Not a binvox file (magic %r).' % line[:16])
    if magic[1:] != ['1']:
        raise BinvoxFormatError('Unsupported binvox version %r; only '
                                'version 1 is read.' % ' '.join(magic[1:]))
    fields = {}
    while True:
        line, pos = _header_line(data, pos)
        if line == 'data':
            break
        key, _, rest = line.partition(' ')
        fields[key] = rest.split()
    for key in ('dim', 'translate', 'scale'):
        if key not in fields:
            raise BinvoxFormatError('binvox header has no %r line.' % key)
    try:
        dims = [int(v) for v in fields['dim']]
        translate = [float(v) for v in fields['translate']]
        scale = float(fields['scale'][0])
    except (ValueError, IndexError):
        raise BinvoxFormatError('Malformed binvox header values: %r.'
                                % fields)
    if len(dims) != 3 or len(set(dims)) != 1 or dims[0] < 1:
        raise BinvoxFormatError('binvox dims must be cubic, got %s.' % dims)
    if len(translate) != 3:
        raise BinvoxFormatError('binvox translate needs 3 values, got %s.'
                                % translate)
    d = dims[0]
    flat = decode_rle(data[pos:], d ** 3)
    occupancy = np.transpose(flat.reshape(d, d, d), (0, 2, 1))
    try:
        return VoxelGrid(occupancy, translate, scale)
    except ValueError as e:
        raise BinvoxFormatError(str(e))
