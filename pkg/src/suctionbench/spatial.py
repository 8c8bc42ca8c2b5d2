"""Spatial acceleration structures.

`MeshIndex` answers ray casts through a bounding-volume hierarchy and
surface neighbourhood queries through a k-d tree over a dense surface
lattice. `PointIndex` is the k-d tree alone, for plain point clouds.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh
from .sampling import SurfaceSamples, sample_surface


def ray_triangle(origins, dirs, v0, v1, v2):
    """Two-sided Moller-Trumbore; returns t per (ray, triangle) row, inf on miss."""
    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(dirs, e2)
    det = np.einsum("ij,ij->i", e1, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        s = origins - v0
        a = np.einsum("ij,ij->i", s, p) * inv
        q = np.cross(s, e1)
        b = np.einsum("ij,ij->i", dirs, q) * inv
        t = np.einsum("ij,ij->i", e2, q) * inv
        hit = (det != 0) & (a >= 0) & (b >= 0) & (a + b <= 1) & (t > 0)
    return np.where(hit, t, np.inf)


class PointIndex:
    """Nearest-neighbour and radius queries over a fixed point set."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def nearest(self, queries, k=1):
        return self.tree.query(np.asarray(queries, dtype=np.float64), k=k)

    def within(self, query, radius):
        """Sorted indices of points within `radius` (inclusive) of one query point."""
        return np.array(sorted(self.tree.query_ball_point(np.asarray(query, dtype=np.float64), radius)),
                        dtype=np.int64)


class MeshIndex:
    """Immutable ray/neighbourhood index over a triangle mesh."""

    def __init__(self, mesh: TriangleMesh, leaf_size: int = 4, surface_spacing: float = 1.5e-3):
        self.mesh = mesh
        self.leaf_size = leaf_size
        self.surface_spacing = surface_spacing
        self._surface = None
        self._build()

    # -- BVH -------------------------------------------------------------
    def _build(self):
        tris = self.mesh.vertices[self.mesh.faces]
        tmin, tmax = tris.min(axis=1), tris.max(axis=1)
        cent = tris.mean(axis=1)
        F = len(tris)
        order = np.arange(F)
        lo, hi, left, right, start, count = [], [], [], [], [], []
        scale = float(np.abs(tris).max()) if F else 1.0
        pad = 1e-9 * max(scale, 1e-3)

        def new_node():
            lo.append(None)
            hi.append(None)
            left.append(-1)
            right.append(-1)
            start.append(-1)
            count.append(0)
            return len(lo) - 1

        if F == 0:
            self.lo = np.full((1, 3), np.inf)
            self.hi = np.full((1, 3), -np.inf)
            self.left = self.right = np.full(1, -1)
            self.start = np.zeros(1, dtype=np.int64)
            self.count = np.zeros(1, dtype=np.int64)
            self.order = order
            return
        stack = [(new_node(), 0, F)]
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo[node] = tmin[idx].min(axis=0) - pad
            hi[node] = tmax[idx].max(axis=0) + pad
            if e - s <= self.leaf_size:
                start[node], count[node] = s, e - s
                continue
            c = cent[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (e - s) // 2
            part = np.argpartition(c[:, axis], mid, kind="introselect")
            order[s:e] = idx[part]
            l, r = new_node(), new_node()
            left[node], right[node] = l, r
            stack.append((r, s + mid, e))
            stack.append((l, s, s + mid))
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.order = order
        self._tris = tris

    def ray_cast(self, origins, directions, t_max=np.inf):
        """Nearest hit per ray with 0 < t <= t_max.

        Directions need not be unit length; t is in units of the direction
        vector. Returns (t, face) with t = inf and face = -1 on a miss.
        Exact ties in t resolve to the lower face id.
        """
        O = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        D = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
        n = len(O)
        best_t = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=np.int64)
        if n == 0 or self.count.sum() == 0:
            return best_t, best_f
        limit = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,))
        with np.errstate(divide="ignore"):
            inv = 1.0 / D
        rays = np.arange(n)
        nodes = np.zeros(n, dtype=np.int64)
        while len(rays):
            with np.errstate(invalid="ignore"):
                t1 = (self.lo[nodes] - O[rays]) * inv[rays]
                t2 = (self.hi[nodes] - O[rays]) * inv[rays]
            tn = np.fmax.reduce(np.fmin(t1, t2), axis=1)
            tf = np.fmin.reduce(np.fmax(t1, t2), axis=1)
            tn = np.where(np.isnan(tn), -np.inf, tn)
            tf = np.where(np.isnan(tf), np.inf, tf)
            bound = np.minimum(best_t[rays], limit[rays])
            alive = (tn <= tf) & (tf > 0) & (tn <= bound)
            rays, nodes = rays[alive], nodes[alive]
            is_leaf = self.count[nodes] > 0
            lr, ln = rays[is_leaf], nodes[is_leaf]
            if len(lr):
                c = self.count[ln]
                rep = np.repeat(np.arange(len(lr)), c)
                offs = np.arange(len(rep)) - np.repeat(np.cumsum(c) - c, c)
                tri = self.order[self.start[ln][rep] + offs]
                rr = lr[rep]
                V = self._tris[tri]
                t = ray_triangle(O[rr], D[rr], V[:, 0], V[:, 1], V[:, 2])
                ok = np.isfinite(t) & (t <= limit[rr])
                self._update(best_t, best_f, rr[ok], t[ok], tri[ok])
            ir, inn = rays[~is_leaf], nodes[~is_leaf]
            rays = np.concatenate([ir, ir])
            nodes = np.concatenate([self.left[inn], self.right[inn]])
        return best_t, best_f

    @staticmethod
    def _update(best_t, best_f, r, t, f):
        if not len(r):
            return
        o = np.lexsort((f, t, r))
        r, t, f = r[o], t[o], f[o]
        first = np.ones(len(r), dtype=bool)
        first[1:] = r[1:] != r[:-1]
        r, t, f = r[first], t[first], f[first]
        bt, bf = best_t[r], best_f[r]
        better = (t < bt) | ((t == bt) & ((bf < 0) | (f < bf)))
        best_t[r[better]] = t[better]
        best_f[r[better]] = f[better]

    def first_hit(self, origin, direction, t_max=np.inf):
        t, f = self.ray_cast(origin, direction, t_max)
        if f[0] < 0:
            return None
        return np.asarray(origin, dtype=np.float64) + t[0] * np.asarray(direction, dtype=np.float64), int(f[0])

    # -- surface lattice -------------------------------------------------
    @property
    def surface(self):
        if self._surface is None:
            raw = sample_surface(self.mesh, self.surface_spacing)
            # lattice points on shared edges appear once per face; keep the first
            q = np.round(raw.points / (self.surface_spacing * 1e-6)).astype(np.int64)
            _, first = np.unique(q, axis=0, return_index=True)
            first.sort()
            self._surface = SurfaceSamples(raw.points[first], raw.face_ids[first], raw.bary[first])
            self._surface_index = PointIndex(self._surface.points)
        return self._surface

    @property
    def surface_index(self) -> PointIndex:
        self.surface
        return self._surface_index

    def surface_near(self, point, radius):
        """Dense surface points within `radius` of `point`."""
        idx = self.surface_index.within(point, radius)
        return self.surface.points[idx]

    def distance_to_surface(self, points):
        d, _ = self.surface_index.nearest(points)
        return d


def ray_cast(index: MeshIndex, origin, direction):
    """Single-ray convenience wrapper: (hit point, face id) or None."""
    return index.first_hit(origin, direction)
