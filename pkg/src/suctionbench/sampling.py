"""Deterministic surface sampling: dense barycentric lattices and voxel candidates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    points: np.ndarray
    face_ids: np.ndarray
    bary: np.ndarray

    def __len__(self):
        return len(self.points)


def _lattice(m):
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = i + j <= m
    i, j = i[keep], j[keep]
    return np.stack([m - i - j, i, j], axis=1) / m


def sample_surface(mesh: TriangleMesh, spacing: float) -> SurfaceSamples:
    """Barycentric lattice on every triangle with neighbour spacing <= `spacing`.

    Lattices include triangle edges and corners, so points on shared edges
    appear once per adjacent face.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if mesh.n_faces == 0:
        return SurfaceSamples(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 3)))
    V = mesh.vertices[mesh.faces]  # (F, 3, 3)
    edges = np.linalg.norm(V[:, [1, 2, 0]] - V, axis=2)
    m = np.maximum(1, np.ceil(edges.max(axis=1) / spacing - 1e-9)).astype(np.int64)
    pts, fids, bys = [], [], []
    for mi in np.unique(m):
        faces = np.flatnonzero(m == mi)
        lat = _lattice(int(mi))
        pts.append(np.einsum("kc,fcd->fkd", lat, V[faces]).reshape(-1, 3))
        fids.append(np.repeat(faces, len(lat)))
        bys.append(np.tile(lat, (len(faces), 1)))
    fids = np.concatenate(fids)
    # face-major order regardless of how faces were grouped
    order = np.argsort(fids, kind="stable")
    return SurfaceSamples(np.concatenate(pts)[order], fids[order], np.concatenate(bys)[order])


@dataclass(frozen=True, eq=False)
class Candidates:
    """Voxel-sampled suction candidates in the mesh frame."""

    points: np.ndarray
    normals: np.ndarray
    voxels: np.ndarray

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(zip(self.points, self.normals))


def voxel_keys(points, voxel):
    # voxel centers sit on integer multiples of the voxel size
    return np.floor(np.asarray(points) / voxel + 0.5).astype(np.int64)


def voxel_sample_surface(mesh: TriangleMesh, voxel: float = 0.005, spacing: float | None = None,
                         samples: SurfaceSamples | None = None) -> Candidates:
    """One candidate per occupied surface voxel.

    Occupancy comes from a dense lattice (default spacing voxel/4). Each
    voxel's representative is the lattice point inside it closest to the
    voxel center; its normal is the crease-aware interpolated mesh normal.
    Output is ordered by voxel index (x, then y, then z).
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if samples is None:
        if mesh.n_faces == 0:
            return Candidates(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        samples = sample_surface(mesh, spacing if spacing is not None else voxel / 4)
    keys = voxel_keys(samples.points, voxel)
    d2 = np.sum((samples.points - keys * voxel) ** 2, axis=1)
    order = np.lexsort((np.arange(len(keys)), d2, keys[:, 2], keys[:, 1], keys[:, 0]))
    k = keys[order]
    first = np.ones(len(k), dtype=bool)
    first[1:] = np.any(k[1:] != k[:-1], axis=1)
    pick = order[first]
    normals = mesh.interpolate_normals(samples.face_ids[pick], samples.bary[pick])
    return Candidates(samples.points[pick], normals, keys[pick])
