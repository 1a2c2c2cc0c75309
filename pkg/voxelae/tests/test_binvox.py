#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import unittest

import numpy as np
from numpy.testing import assert_array_equal

from voxelae._binvox import (BinvoxFormatError, decode_rle, encode_rle,
                             read_binvox, write_binvox)
from voxelae._voxelize import VoxelGrid

HEADER_2 = b'#binvox 1\ndim 2 2 2\ntranslate 0.0 0.0 0.0\nscale 1.0\ndata\n'


class RunLengthTests(unittest.TestCase):

    def test_long_runs_are_chunked(self):
        self.assertEqual(encode_rle(np.ones(300)), bytes([1, 255, 1, 45]))
        self.assertEqual(encode_rle(np.zeros(510)), bytes([0, 255, 0, 255]))

    def test_runs_are_maximal(self):
        flat = [0, 0, 1, 1, 1, 0]
        self.assertEqual(encode_rle(flat), bytes([0, 2, 1, 3, 0, 1]))
        assert_array_equal(decode_rle(encode_rle(flat), 6), flat)

    def test_canonical_encoding(self):
        rng = np.random.RandomState(1)
        for _ in range(200):
            flat = rng.rand(rng.randint(1, 700)) < rng.rand()
            payload = encode_rle(flat)
            assert_array_equal(decode_rle(payload, flat.size), flat)
            self.assertEqual(encode_rle(decode_rle(payload, flat.size)),
                             payload)
        # two short runs of one value are not canonical, re-encoding merges
        self.assertEqual(encode_rle(decode_rle(bytes([1, 2, 1, 3]), 5)),
                         bytes([1, 5]))

    def test_decode_errors(self):
        for payload in (bytes([1]), bytes([1, 0, 0, 8]), bytes([2, 8]),
                        bytes([1, 9]), bytes([1, 7])):
            with self.assertRaises(BinvoxFormatError):
                decode_rle(payload, 8)


class BinvoxTests(unittest.TestCase):

    def test_header_and_axis_order(self):
        occ = np.zeros((2, 2, 2), dtype=bool)
        occ[1, 0, 0] = True
        data = write_binvox(VoxelGrid(occ))
        self.assertEqual(data, HEADER_2 + bytes([0, 4, 1, 1, 0, 3]))

    def test_empty_grid_is_one_run(self):
        data = write_binvox(VoxelGrid(np.zeros((4, 4, 4))))
        self.assertTrue(data.endswith(b'data\n' + bytes([0, 64])))

    def test_y_runs_fastest(self):
        occ = np.zeros((2, 2, 2), dtype=bool)
        occ[0, 1, 0] = True
        self.assertEqual(write_binvox(VoxelGrid(occ))[len(HEADER_2):],
                         bytes([0, 1, 1, 1, 0, 6]))

    def test_random_grids(self):
        rng = np.random.RandomState(0)
        for _ in range(1000):
            dim = rng.randint(1, 13)
            density = rng.choice([0.0, 0.02, 0.5, 0.98, 1.0, rng.rand()])
            grid = VoxelGrid(rng.rand(dim, dim, dim) < density,
                             translate=(-0.125, 3.5, 1e-3), scale=0.75)
            data = write_binvox(grid)
            self.assertEqual(read_binvox(data), grid)
            self.assertEqual(write_binvox(read_binvox(data)), data)

    def test_bad_magic(self):
        with self.assertRaises(BinvoxFormatError):
            read_binvox(b'#voxbin 1\n' + HEADER_2[10:] + bytes([0, 8]))

    def test_version(self):
        for magic in (b'#binvox 2', b'#binvox', b'#binvox 1 extra',
                      b'#binvoxel 1'):
            data = HEADER_2.replace(b'#binvox 1', magic) + bytes([0, 8])
            with self.assertRaises(BinvoxFormatError, msg=magic):
                read_binvox(data)
        data = HEADER_2.replace(b'#binvox 1', b'#binvox  1 ') + bytes([0, 8])
        self.assertEqual(read_binvox(data).dim, 2)

    def test_non_cubic(self):
        data = HEADER_2.replace(b'dim 2 2 2', b'dim 2 2 3') + bytes([0, 12])
        with self.assertRaises(BinvoxFormatError):
            read_binvox(data)

    def test_missing_field(self):
        data = HEADER_2.replace(b'scale 1.0\n', b'') + bytes([0, 8])
        with self.assertRaises(BinvoxFormatError):
            read_binvox(data)

    def test_truncated(self):
        with self.assertRaises(BinvoxFormatError):
            read_binvox(HEADER_2[:20])
        with self.assertRaises(BinvoxFormatError):
            read_binvox(HEADER_2 + bytes([0, 4]))
        with self.assertRaises(BinvoxFormatError):
            read_binvox(HEADER_2 + bytes([0, 4, 1, 5]))

    def test_zero_scale(self):
        data = HEADER_2.replace(b'scale 1.0', b'scale 0') + bytes([0, 8])
        with self.assertRaises(BinvoxFormatError):
            read_binvox(data)


if __name__ == "__main__":
    unittest.main()
