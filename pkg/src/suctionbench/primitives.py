"""Watertight primitive meshes standing in for scanned object models.

Every primitive is centered on its bounding-box center. Vertex counts:

* cuboid: 8 vertices, 12 triangles
* sphere (icosphere, level L): 10 * 4**L + 2 vertices, 20 * 4**L triangles
* cylinder (n segments): 2n + 2 vertices, 4n triangles
* bumpy-plate (nx x ny top grid): 2 (nx+1)(ny+1) vertices,
  4 nx ny + 4 (nx + ny) triangles
"""
from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def _check_positive(**dims):
    for name, value in dims.items():
        if not np.all(np.asarray(value) > 0):
            raise ValueError(f"{name} must be positive, got {value}")


def heightfield_box(size, nx, ny, height_fn=None):
    """Box whose top face is an (nx x ny) grid displaced by height_fn(x, y)."""
    sx, sy, sz = size
    xs = np.linspace(-sx / 2, sx / 2, nx + 1)
    ys = np.linspace(-sy / 2, sy / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    top_z = np.full_like(X, sz / 2)
    if height_fn is not None:
        top_z = top_z + height_fn(X, Y)
    top = np.stack([X, Y, top_z], axis=-1).reshape(-1, 3)
    bottom = np.stack([X, Y, np.full_like(X, -sz / 2)], axis=-1).reshape(-1, 3)
    nv = len(top)

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
            faces += [(nv + a, nv + c, nv + b), (nv + a, nv + d, nv + c)]
    # boundary loop, counter-clockwise seen from +z
    loop = [vid(i, 0) for i in range(nx)] + [vid(nx, j) for j in range(ny)]
    loop += [vid(i, ny) for i in range(nx, 0, -1)] + [vid(0, j) for j in range(ny, 0, -1)]
    for k in range(len(loop)):
        a, b = loop[k], loop[(k + 1) % len(loop)]
        faces += [(a, nv + a, nv + b), (a, nv + b, b)]
    return TriangleMesh(np.vstack([top, bottom]), np.array(faces))


def cuboid(size):
    _check_positive(size=size)
    return heightfield_box(size, 1, 1)


def bumpy_plate(size=(0.1, 0.1, 0.01), amplitude=0.002, wavelength=0.02, resolution=0.0025):
    """Plate whose top carries amplitude * sin(2 pi x / L) * sin(2 pi y / L)."""
    _check_positive(size=size, wavelength=wavelength, resolution=resolution)
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    nx = max(1, int(round(size[0] / resolution)))
    ny = max(1, int(round(size[1] / resolution)))
    k = 2 * np.pi / wavelength

    def h(x, y):
        return amplitude * np.sin(k * x) * np.sin(k * y)

    return heightfield_box(size, nx, ny, h if amplitude > 0 else None)


def _icosahedron():
    # poles on the z axis, two staggered pentagonal rings
    z = 1 / np.sqrt(5)
    rho = 2 / np.sqrt(5)
    ang = 2 * np.pi * np.arange(5) / 5
    upper = np.stack([rho * np.cos(ang), rho * np.sin(ang), np.full(5, z)], axis=1)
    lower = np.stack([rho * np.cos(ang + np.pi / 5), rho * np.sin(ang + np.pi / 5), np.full(5, -z)], axis=1)
    verts = np.vstack([[0, 0, 1], upper, lower, [0, 0, -1]])
    T, U, L, B = 0, 1, 6, 11
    faces = []
    for k in range(5):
        k1 = (k + 1) % 5
        faces += [(T, U + k, U + k1), (U + k, L + k, U + k1), (U + k1, L + k, L + k1), (B, L + k1, L + k)]
    return verts, np.array(faces)


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)):
    _check_positive(radius=radius)
    verts, faces = _icosahedron()
    verts = list(map(tuple, verts))
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new)
    unit = np.array(verts)
    fixed = _outward(unit, faces)
    return TriangleMesh(unit * radius + np.asarray(center, dtype=np.float64), fixed, normals=unit)


def _outward(verts, faces):
    v = verts[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    flip = np.einsum("ij,ij->i", n, v.mean(axis=1)) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return faces


def cylinder(radius, height, segments=64):
    """Z-aligned closed cylinder."""
    _check_positive(radius=radius, height=height, segments=segments)
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    verts = np.vstack([[0, 0, -height / 2], [0, 0, height / 2], bottom, top])
    B, T, b0, t0 = 0, 1, 2, 2 + segments
    faces = []
    for k in range(segments):
        k1 = (k + 1) % segments
        faces += [(B, b0 + k1, b0 + k), (T, t0 + k, t0 + k1)]
        faces += [(b0 + k, b0 + k1, t0 + k1), (b0 + k, t0 + k1, t0 + k)]
    return TriangleMesh(verts, np.array(faces))


def prism(polygon, height):
    """Extrude a counter-clockwise polygon along z, centered at z = 0.

    Caps are fan-triangulated from the first polygon vertex, so the polygon
    must be star-shaped with respect to it.
    """
    _check_positive(height=height)
    poly = np.asarray(polygon, dtype=np.float64)
    k = len(poly)
    bottom = np.column_stack([poly, np.full(k, -height / 2)])
    top = np.column_stack([poly, np.full(k, height / 2)])
    faces = []
    for i in range(1, k - 1):
        faces += [(k, k + i, k + i + 1), (0, i + 1, i)]
    for i in range(k):
        j = (i + 1) % k
        faces += [(i, j, k + j), (i, k + j, k + i)]
    return TriangleMesh(np.vstack([bottom, top]), np.array(faces))


def make_primitive(kind, **dims) -> TriangleMesh:
    """Build a primitive by name.

    kind: ``cuboid`` (size), ``sphere`` (radius, subdivisions),
    ``cylinder`` (radius, height, segments) or ``bumpy-plate`` (size,
    amplitude, wavelength, resolution).
    """
    builders = {
        "cuboid": cuboid,
        "sphere": icosphere,
        "cylinder": cylinder,
        "bumpy-plate": bumpy_plate,
        "bumpy_plate": bumpy_plate,
    }
    if kind not in builders:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return builders[kind](**dims)
