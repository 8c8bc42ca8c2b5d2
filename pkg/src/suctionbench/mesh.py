"""Triangle meshes and the plain-text vertex/face file format.

The reader accepts the triangle subset of Wavefront OBJ: ``v x y z`` and
``f a b c`` lines (``a/b/c`` and ``a//c`` index forms, negative indices
relative to the current vertex count). Other record types are skipped.
Polygons with more than three corners are rejected, not triangulated.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class MeshFormatError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class NotWatertightError(ValueError):
    pass


def _face_normals_and_areas(vertices, faces):
    v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
    cross = np.cross(v1 - v0, v2 - v0)
    dbl_area = np.linalg.norm(cross, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = cross / dbl_area[:, None]
    n[dbl_area == 0] = 0.0
    return n, 0.5 * dbl_area


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    # area-weighted vertex normals, computed when omitted
    normals: np.ndarray | None = None
    crease_angle: float = field(default=np.radians(45.0))

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinates")
        fn, fa = _face_normals_and_areas(v, f)
        if self.normals is None:
            acc = np.zeros_like(v)
            for i in range(3):
                np.add.at(acc, f[:, i], fn * fa[:, None])
            length = np.linalg.norm(acc, axis=1, keepdims=True)
            n = np.divide(acc, length, out=np.zeros_like(acc), where=length > 0)
        else:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise ValueError("normals must parallel vertices")
        for arr in (v, f, n, fn, fa):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "face_normals", fn)
        object.__setattr__(self, "face_areas", fa)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def area(self):
        return float(self.face_areas.sum())

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, T):
        return TriangleMesh(T.apply(self.vertices), self.faces, T.apply_directions(self.normals), self.crease_angle)

    def corner_normals(self):
        """Per-(face, corner) normals, shape (F, 3, 3).

        Each corner averages (area-weighted) the normals of the faces around
        its vertex that lie within `crease_angle` of the owning face, so
        flat faces of a box keep their own normal while smooth surfaces get
        interpolated vertex normals.
        """
        cached = self.__dict__.get("_corner_normals")
        if cached is not None:
            return cached
        F = len(self.faces)
        fn, fa = self.face_normals, self.face_areas
        corner_v = self.faces.reshape(-1)
        # CSR incidence: faces touching each vertex
        order = np.argsort(corner_v, kind="stable")
        inc_face = np.repeat(np.arange(F), 3)[order]
        starts = np.searchsorted(corner_v[order], np.arange(self.n_vertices))
        counts = np.bincount(corner_v, minlength=self.n_vertices)[corner_v]
        owner = np.repeat(np.arange(F * 3), counts)
        offs = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
        nbr = inc_face[starts[corner_v][owner] + offs]
        keep = np.einsum("ij,ij->i", fn[owner // 3], fn[nbr]) >= np.cos(self.crease_angle)
        acc = np.zeros((F * 3, 3))
        np.add.at(acc, owner[keep], fn[nbr[keep]] * fa[nbr[keep], None])
        length = np.linalg.norm(acc, axis=1, keepdims=True)
        out = np.divide(acc, length, out=np.repeat(fn, 3, axis=0), where=length > 0)
        # corners with no crease around them use the mesh's vertex normal
        smooth = np.bincount(owner[keep], minlength=F * 3) == counts
        out[smooth] = self.normals[corner_v[smooth]]
        out = out.reshape(F, 3, 3)
        out.setflags(write=False)
        self.__dict__["_corner_normals"] = out
        return out

    def interpolate_normals(self, face_ids, bary):
        """Unit normals at points given by face ids and (N, 3) barycentric weights."""
        cn = self.corner_normals()[face_ids]
        n = np.einsum("nij,ni->nj", cn, bary)
        length = np.linalg.norm(n, axis=1, keepdims=True)
        fallback = self.face_normals[face_ids]
        return np.divide(n, length, out=fallback.copy(), where=length > 1e-12)

    def is_watertight(self):
        """Closed, consistently oriented 2-manifold: every directed edge pairs with its reverse once."""
        if not len(self.faces):
            return False
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        n = self.n_vertices
        keys = directed[:, 0] * n + directed[:, 1]
        rev = directed[:, 1] * n + directed[:, 0]
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts != 1):
            return False
        return bool(np.all(np.isin(rev, uniq)))

    def euler_characteristic(self):
        edges = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        n_edges = len(np.unique(edges, axis=0))
        used = len(np.unique(self.faces))
        return used - n_edges + self.n_faces


def load_mesh(path, scale=1.0) -> TriangleMesh:
    """Read a triangle mesh; coordinates are multiplied by `scale` to get meters."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"mesh file not found: {path}")
    vertices, faces, face_lines = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise MeshFormatError(path, lineno, "vertex line needs three coordinates")
                try:
                    vertices.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise MeshFormatError(path, lineno, f"bad vertex coordinate in {line!r}") from None
            elif tag == "f":
                corners = tokens[1:]
                if len(corners) != 3:
                    raise MeshFormatError(path, lineno, f"face has {len(corners)} corners, only triangles are accepted")
                face = []
                for c in corners:
                    head = c.split("/", 1)[0]
                    try:
                        idx = int(head)
                    except ValueError:
                        raise MeshFormatError(path, lineno, f"bad face index {c!r}") from None
                    if idx == 0:
                        raise MeshFormatError(path, lineno, "face index 0 is invalid (indices are 1-based)")
                    if idx < 0:
                        # relative indices resolve against vertices read so far
                        idx = len(vertices) + idx
                        if idx < 0:
                            raise MeshFormatError(path, lineno, f"relative face index {c} out of range")
                    else:
                        idx -= 1
                    face.append(idx)
                faces.append(face)
                face_lines.append(lineno)
    if not faces:
        raise MeshFormatError(path, 0, "no faces")
    faces = np.array(faces)
    bad = np.flatnonzero(faces.max(axis=1) >= len(vertices))
    if len(bad):
        i = bad[0]
        raise MeshFormatError(path, face_lines[i], f"face index {faces[i].max() + 1} out of range ({len(vertices)} vertices)")
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3) * scale, faces)


def save_mesh(mesh: TriangleMesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {mesh.n_vertices} vertices, {mesh.n_faces} faces, meters\n")
        for v in mesh.vertices:
            fh.write("v {!r} {!r} {!r}\n".format(*map(float, v)))
        for f in mesh.faces:
            fh.write("f {} {} {}\n".format(*(int(i) + 1 for i in f)))
