#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import struct

import numpy as np


class STLParseError(ValueError):
    '''Malformed STL input.

    Attributes
    ----------
    offset : int or None
        Byte offset of the problem in a binary file.
    line : int or None
        1-based line number of the problem in an ASCII file.
    '''

    def __init__(self, message, offset=None, line=None):
        if offset is not None:
            message = '%s (byte offset %d)' % (message, offset)
        if line is not None:
            message = '%s (line %d)' % (message, line)
        super(STLParseError, self).__init__(message)
        self.offset = offset
        self.line = line


# 12 bytes normal, 36 bytes vertices, 2 bytes attribute count.
_RECORD = np.dtype([('normal', '<f4', (3,)), ('vertices', '<f4', (3, 3)),
                    ('attribute', '<u2')])
_HEADER_SIZE = 80


class TriangleMesh(object):
    '''Triangle soup in model units.

    Parameters
    ----------
    triangles : array_like
        Shape (T, 3, 3): triangle, vertex, coordinate.
    normals : array_like, optional
        Shape (T, 3), as stored in the source file.
    '''

    def __init__(self, triangles, normals=None):
        triangles = np.asarray(triangles, dtype=np.float64)
        if triangles.size == 0:
            triangles = triangles.reshape(0, 3, 3)
        if triangles.ndim != 3 or triangles.shape[1:] != (3, 3):
            raise ValueError('Triangles must have shape (T, 3, 3), got %s.'
                             % (triangles.shape,))
        if not np.isfinite(triangles).all():
            raise ValueError('Triangle coordinates must be finite.')
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
            if normals.shape[0] != triangles.shape[0]:
                raise ValueError('Got %d normals for %d triangles.'
                                 % (normals.shape[0], triangles.shape[0]))
        self.triangles = triangles
        self.normals = normals

    def __len__(self):
        return self.triangles.shape[0]

    @property
    def bounds(self):
        '''(min corner, max corner) of the mesh, or `None` when empty.'''
        if len(self) == 0:
            return None
        points = self.triangles.reshape(-1, 3)
        return points.min(axis=0), points.max(axis=0)

    def face_normals(self):
        '''Unit normals from the vertex winding (zero for degenerate faces).'''
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def _edges(self, decimals):
        points = np.round(self.triangles.reshape(-1, 3), decimals)
        _, ids = np.unique(points, axis=0, return_inverse=True)
        ids = ids.reshape(-1, 3)
        return np.concatenate([ids[:, [0, 1]], ids[:, [1, 2]],
                               ids[:, [2, 0]]])

    def is_watertight(self, decimals=9):
        '''`True` if every edge is shared by exactly two triangles.

        Vertices are welded by coordinates rounded to `decimals`.
        '''
        if len(self) == 0:
            return False
        edges = self._edges(decimals)
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool((counts == 2).all())

    def is_consistently_oriented(self, decimals=9):
        '''`True` for a watertight mesh whose neighbouring triangles wind
        their shared edge in opposite directions.'''
        if not self.is_watertight(decimals):
            return False
        _, counts = np.unique(self._edges(decimals), axis=0,
                              return_counts=True)
        return bool((counts == 1).all())

    def transformed(self, scale=1.0, translate=(0.0, 0.0, 0.0)):
        '''Copy scaled uniformly about the origin, then translated.'''
        return TriangleMesh(self.triangles * scale + np.asarray(translate),
                            self.normals)

    def union(self, other):
        '''Concatenate the triangles of two meshes.'''
        return TriangleMesh(np.concatenate([self.triangles, other.triangles]))


def _parse_binary(data):
    if len(data) < _HEADER_SIZE + 4:
        raise STLParseError('Binary STL is shorter than its 84-byte header',
                            offset=len(data))
    count, = struct.unpack_from('<I', data, _HEADER_SIZE)
    body = len(data) - _HEADER_SIZE - 4
    available = body // _RECORD.itemsize
    if available < count:
        raise STLParseError('Binary STL declares %d triangles but only %d '
                            'complete records are present'
                            % (count, available),
                            offset=_HEADER_SIZE + 4 +
                            available * _RECORD.itemsize)
    if body != count * _RECORD.itemsize:
        raise STLParseError('Binary STL declares %d triangles but has %d '
                            'bytes of records' % (count, body),
                            offset=_HEADER_SIZE + 4 + count * _RECORD.itemsize)
    records = np.frombuffer(data, dtype=_RECORD, count=count,
                            offset=_HEADER_SIZE + 4)
    return TriangleMesh(records['vertices'], records['normal'])


def _floats(tokens, lineno, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise STLParseError('Malformed number in %s: %s'
                            % (what, ' '.join(tokens)), line=lineno)


def _parse_ascii(text):
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines or lines[0][1][0] != 'solid':
        raise STLParseError("ASCII STL must start with 'solid'",
                            line=lines[0][0] if lines else 1)
    triangles, normals = [], []
    pos = 1

    def expect(keyword, n_numbers=0):
        nonlocal pos
        if pos >= len(lines):
            raise STLParseError("Unexpected end of file, expected '%s'"
                                % keyword, line=lines[-1][0])
        lineno, toks = lines[pos]
        width = len(keyword.split())
        if toks[:width] != keyword.split():
            raise STLParseError("Expected '%s', got '%s'"
                                % (keyword, ' '.join(toks)), line=lineno)
        values = toks[width:]
        if len(values) != n_numbers:
            raise STLParseError("'%s' needs %d values, got %d"
                                % (keyword, n_numbers, len(values)),
                                line=lineno)
        pos += 1
        return _floats(values, lineno, keyword)

    while True:
        if pos >= len(lines):
            raise STLParseError("Missing 'endsolid'", line=lines[-1][0])
        if lines[pos][1][0] == 'endsolid':
            pos += 1
            break
        normals.append(expect('facet normal', 3))
        expect('outer loop')
        triangles.append([expect('vertex', 3) for _ in range(3)])
        expect('endloop')
        expect('endfacet')
    if pos != len(lines):
        raise STLParseError("Unexpected content after 'endsolid'",
                            line=lines[pos][0])
    return TriangleMesh(np.asarray(triangles).reshape(-1, 3, 3),
                        np.asarray(normals).reshape(-1, 3))


def parse_stl(data):
    '''Parse binary or ASCII STL bytes into a `TriangleMesh`.

    The input is treated as ASCII if and only if the whole file parses under
    the ASCII grammar; anything else is read as binary.

    Parameters
    ----------
    data : bytes

    Returns
    -------
    TriangleMesh
        Triangles in file order.

    Raises
    ------
    STLParseError
        On truncated binary records, a declared triangle count that does not
        match the records present, or (for files that start with ``solid``
        and are not valid binary either) a malformed ASCII token.
    '''
    data = bytes(data)
    if data.lstrip()[:5] == b'solid':
        try:
            return _parse_ascii(data.decode('ascii'))
        except (STLParseError, UnicodeDecodeError) as ascii_error:
            try:
                return _parse_binary(data)
            except STLParseError:
                if isinstance(ascii_error, UnicodeDecodeError):
                    raise STLParseError('File is neither ASCII nor binary '
                                        'STL', offset=ascii_error.start)
                raise ascii_error
    return _parse_binary(data)


def write_stl(mesh, ascii=False, name='voxelae'):
    '''Serialize `mesh` as binary (default) or ASCII STL bytes.

    Normals are recomputed from the vertex winding when the mesh carries
    none. Binary output stores coordinates as 32-bit floats; ASCII output
    writes every coordinate with `repr`, so it round-trips exactly.
    '''
    normals = mesh.normals if mesh.normals is not None else mesh.face_normals()
    if ascii:
        out = ['solid %s' % name]
        for n, tri in zip(normals, mesh.triangles):
            out.append('  facet normal %s' % ' '.join(repr(float(v))
                                                     for v in n))
            out.append('    outer loop')
            for vertex in tri:
                out.append('      vertex %s' % ' '.join(repr(float(v))
                                                       for v in vertex))
            out.append('    endloop')
            out.append('  endfacet')
        out.append('endsolid %s' % name)
        return ('\n'.join(out) + '\n').encode('ascii')
    records = np.zeros(len(mesh), dtype=_RECORD)
    records['normal'] = normals
    records['vertices'] = mesh.triangles
    header = ('binary STL written by %s' % name).encode('ascii')
    header = header[:_HEADER_SIZE].ljust(_HEADER_SIZE, b' ')
    return header + struct.pack('<I', len(mesh)) + records.tobytes()


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    '''Axis-aligned box with outward-facing triangles.'''
    lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    corners = np.array([[hi[i] if (c >> i) & 1 else lo[i] for i in range(3)]
                        for c in range(8)])
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3),
             (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris.append(corners[[a, b, c]])
        tris.append(corners[[a, c, d]])
    return TriangleMesh(np.array(tris))


def icosphere(subdivisions=4, radius=1.0, center=(0.0, 0.0, 0.0)):
    '''Sphere mesh from a repeatedly subdivided icosahedron.'''
    t = (1.0 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.asarray(v, dtype=np.float64) / np.linalg.norm(v)
             for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]
        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    points = np.asarray(verts) * radius + np.asarray(center)
    return TriangleMesh(points[np.asarray(faces)])


def cylinder_mesh(radius=0.5, height=1.0, segments=32):
    '''Closed cylinder along z, base centered on the origin.'''
    angles = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles),
                     np.zeros(segments)], axis=1)
    top = ring + [0, 0, height]
    bottom_c, top_c = np.zeros(3), np.array([0, 0, height])
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([bottom_c, ring[j], ring[i]])
        tris.append([top_c, top[i], top[j]])
        tris.append([ring[i], ring[j], top[j]])
        tris.append([ring[i], top[j], top[i]])
    return TriangleMesh(np.array(tris))


def torus_mesh(major=1.0, minor=0.3, segments=32, sides=16):
    '''Torus around the z axis.'''
    u = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    v = np.linspace(0, 2 * np.pi, sides, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing='ij')
    grid = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                     (major + minor * np.cos(vv)) * np.sin(uu),
                     minor * np.sin(vv)], axis=-1)
    tris = []
    for i in range(segments):
        for j in range(sides):
            a, b = grid[i, j], grid[(i + 1) % segments, j]
            c, d = (grid[(i + 1) % segments, (j + 1) % sides],
                    grid[i, (j + 1) % sides])
            tris.append([a, b, c])
            tris.append([a, c, d])
    return TriangleMesh(np.array(tris))
