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

import numpy as np

logger = logging.getLogger(__name__)

# Sub-voxel offsets of the ray origins. Irrational fractions keep rays off the
# shared edges and vertices of axis-aligned and symmetric meshes.
_RAY_JITTER = (1e-4 * (2 ** 0.5 - 1), 1e-4 * (3 ** 0.5 - 1),
               1e-4 * (5 ** 0.5 - 2))


class VoxelGrid(object):
    '''Cubic binary occupancy grid with its model-space placement.

    Parameters
    ----------
    occupancy : array_like
        Shape (dim, dim, dim), indexed [x, y, z]; cast to bool.
    translate : array_like
        Model-space position of the grid's minimum corner.
    scale : float
        Model units spanned by one full grid edge, > 0.
    surface_only : bool
        `True` when the grid holds only a surface shell because the source
        mesh was not watertight.
    '''

    def __init__(self, occupancy, translate=(0.0, 0.0, 0.0), scale=1.0,
                 surface_only=False):
        occupancy = np.asarray(occupancy).astype(bool)
        if occupancy.ndim != 3 or len(set(occupancy.shape)) != 1:
            raise ValueError('Voxel grids must be cubic, got shape %s.'
                             % (occupancy.shape,))
        if not scale > 0:
            raise ValueError('Voxel grid scale must be > 0, got %r.' % scale)
        self.occupancy = occupancy
        self.translate = tuple(float(t) for t in translate)
        self.scale = float(scale)
        self.surface_only = bool(surface_only)

    @property
    def dim(self):
        return self.occupancy.shape[0]

    @property
    def occupied_fraction(self):
        return float(self.occupancy.mean())

    def to_model_coords(self, ijk):
        '''Model-space centers of voxel indices `ijk` (shape (..., 3)).'''
        ijk = np.asarray(ijk, dtype=np.float64)
        return (np.asarray(self.translate) +
                self.scale * (ijk + 0.5) / self.dim)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (self.translate == other.translate and
                self.scale == other.scale and
                np.array_equal(self.occupancy, other.occupancy))

    def __repr__(self):
        return ('VoxelGrid(dim=%d, occupied=%d, translate=%s, scale=%r)'
                % (self.dim, self.occupancy.sum(), self.translate,
                   self.scale))


def normalization(mesh, dim, margin=0):
    '''Grid placement that fits `mesh` centered in the cube.

    The largest bounding-box edge spans `dim - 2 * margin` voxels, the mesh
    keeps its aspect ratio and is centered on every axis.

    Returns
    -------
    translate : np.array
        Model-space position of the grid's minimum corner.
    scale : float
        Model units per full grid edge.
    '''
    lo, hi = mesh.bounds
    extent = float((hi - lo).max())
    if extent <= 0:
        extent = 1.0
    scale = extent * dim / (dim - 2 * margin)
    translate = (lo + hi) / 2.0 - scale / 2.0
    return translate, scale


def _crossings(tris, dim, axis):
    '''Signed crossings of rays along `axis` through voxel centers.

    `tris` are in grid units. Returns an int array of shape
    (dim, dim, dim + 1) indexed [b, c, k]: the sum of surface crossings
    between voxel center k - 1 and voxel center k of ray (b, c), where b and
    c are the two other axes in increasing order. A crossing counts +1 or -1
    by the side of the triangle the ray enters from.
    '''
    b, c = [a for a in range(3) if a != axis]
    counts = np.zeros((dim, dim, dim + 1), dtype=np.int32)
    jb, jc = _RAY_JITTER[b], _RAY_JITTER[c]
    for tri in tris:
        pb, pc, pa = tri[:, b], tri[:, c], tri[:, axis]
        area = ((pb[1] - pb[0]) * (pc[2] - pc[0]) -
                (pb[2] - pb[0]) * (pc[1] - pc[0]))
        if area == 0:
            continue
        ib = np.arange(max(int(np.ceil(pb.min() - 0.5 - jb)), 0),
                       min(int(np.floor(pb.max() - 0.5 - jb)), dim - 1) + 1)
        ic = np.arange(max(int(np.ceil(pc.min() - 0.5 - jc)), 0),
                       min(int(np.floor(pc.max() - 0.5 - jc)), dim - 1) + 1)
        if ib.size == 0 or ic.size == 0:
            continue
        qb, qc = np.meshgrid(ib + 0.5 + jb, ic + 0.5 + jc, indexing='ij')
        w0 = (pb[1] - qb) * (pc[2] - qc) - (pb[2] - qb) * (pc[1] - qc)
        w1 = (pb[2] - qb) * (pc[0] - qc) - (pb[0] - qb) * (pc[2] - qc)
        w2 = area - w0 - w1
        if area > 0:
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        else:
            inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        if not inside.any():
            continue
        t = (w0 * pa[0] + w1 * pa[1] + w2 * pa[2]) / area
        first = np.clip(np.floor(t[inside] - 0.5).astype(np.int64) + 1,
                        0, dim)
        rows, cols = np.nonzero(inside)
        np.add.at(counts, (ib[rows], ic[cols], first),
                  1 if area > 0 else -1)
    return counts


def _solid(tris, dim, winding=False):
    '''Majority vote of the three ray directions.

    With `winding` a voxel is inside when its winding number is nonzero,
    which keeps the overlap of unioned closed meshes filled; otherwise it
    is inside when its crossing count is odd.
    '''
    votes = np.zeros((dim, dim, dim), dtype=np.int8)
    for axis in range(3):
        number = np.cumsum(_crossings(tris, dim, axis), axis=2)[:, :, :dim]
        if winding:
            inside = (number != 0).astype(np.int8)
        else:
            inside = (number % 2).astype(np.int8)
        # [b, c, a] -> [x, y, z]
        order = [a for a in range(3) if a != axis] + [axis]
        votes += np.transpose(inside, np.argsort(order))
    return votes >= 2


def _surface(tris, dim):
    occ = np.zeros((dim, dim, dim), dtype=bool)
    for tri in tris:
        edge = max(np.linalg.norm(tri[1] - tri[0]),
                   np.linalg.norm(tri[2] - tri[1]),
                   np.linalg.norm(tri[0] - tri[2]))
        n = int(np.ceil(edge * 2)) + 1
        u, v = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing='ij')
        keep = u + v <= n
        u, v = u[keep] / n, v[keep] / n
        points = (tri[0] + u[:, None] * (tri[1] - tri[0]) +
                  v[:, None] * (tri[2] - tri[0]))
        idx = np.clip(np.floor(points).astype(np.int64), 0, dim - 1)
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return occ


def voxelize(mesh, dim, margin=0, frame=None):
    '''Voxelize a triangle mesh into a cubic occupancy grid.

    Parameters
    ----------
    mesh : TriangleMesh
    dim : int
        Edge resolution, >= 2.
    margin : int, optional
        Empty voxels kept on every side of the fitted mesh.
    frame : (translate, scale), optional
        Explicit grid placement in model units instead of fitting the mesh.

    Returns
    -------
    VoxelGrid
        A voxel is set when its center lies inside the mesh under ray
        casting along x, y and z (at least two of the three agree). Closed
        meshes with consistent winding use the nonzero winding rule, so a
        union of overlapping solids stays solid; other closed meshes use
        crossing parity. Meshes
        that are not watertight fall back to a surface shell and are flagged
        with `surface_only`. An empty mesh gives an all-zero grid with the
        identity placement.

    Notes
    -----
    The grid is fitted to the mesh's bounding box, so voxelization does not
    change under translation or uniform scaling of the mesh; only the
    recorded `translate` and `scale` do.
    '''
    if dim < 2:
        raise ValueError('Voxel grid dim must be >= 2, got %r.' % dim)
    if not 0 <= 2 * margin < dim:
        raise ValueError('Margin %r leaves no room in a %d^3 grid.'
                         % (margin, dim))
    if len(mesh) == 0:
        logger.warning('Voxelizing an empty mesh gives an empty grid.')
        return VoxelGrid(np.zeros((dim,) * 3, dtype=bool))
    if frame is None:
        translate, scale = normalization(mesh, dim, margin)
    else:
        translate, scale = np.asarray(frame[0], dtype=np.float64), frame[1]
    tris = (mesh.triangles - translate) * (dim / scale)
    if mesh.is_watertight():
        occupancy = _solid(tris, dim, mesh.is_consistently_oriented())
        surface_only = False
    else:
        logger.warning('Mesh with %d triangles is not watertight; falling '
                       'back to surface voxelization.', len(mesh))
        occupancy, surface_only = _surface(tris, dim), True
    return VoxelGrid(occupancy, translate, scale, surface_only=surface_only)
