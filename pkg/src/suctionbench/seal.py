"""Seal formation scoring with a perimeter-spring suction cup model.

The cup lip is a regular n-gon of radius r. Its vertices are dropped onto
the surface along the approach direction; the relative length change of
every perimeter spring and the flatness of the surface patch under the
lip together give the seal score.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import orthonormal_basis
from .sampling import voxel_sample_surface
from .spatial import MeshIndex


@dataclass(frozen=True, eq=False)
class SuctionPose:
    """Contact point p and unit direction u pointing away from the surface."""

    p: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).reshape(3)
        u = np.asarray(self.u, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(u))):
            raise ValueError("pose has non-finite components")
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit length, |u| = {np.linalg.norm(u)}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "u", u)

    def transformed(self, T):
        return SuctionPose(T.apply(self.p), T.apply_directions(self.u))


@dataclass(frozen=True)
class CupModel:
    radius: float = 0.010
    n_vertices: int = 8

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("cup radius must be positive")
        if self.n_vertices < 4:
            raise ValueError("cup needs at least 4 perimeter vertices")

    @property
    def rest_length(self):
        return 2 * self.radius * np.sin(np.pi / self.n_vertices)

    @property
    def rest_lengths(self):
        return np.full(self.n_vertices, self.rest_length)


@dataclass(frozen=True)
class SealParams:
    # plane-fit decay, 1/m^2 (0.5 per mm^2)
    c: float = 5e5
    # plane-fit neighbourhood radius, as a multiple of the cup radius
    neighborhood_factor: float = 1.25
    # ring starts this many cup radii above p ...
    standoff_factor: float = 2.0
    # ... and a ray that travels this many radii without a hit is a miss
    max_travel_factor: float = 4.0
    # DexNet-style 0/1 deformation term: every spring within `binary_threshold`
    binary: bool = False
    binary_threshold: float = 0.1

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("plane-fit coefficient c must be positive")
        if self.neighborhood_factor <= 0 or self.standoff_factor <= 0 or self.max_travel_factor <= 0:
            raise ValueError("seal geometry factors must be positive")


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    ring: np.ndarray          # (n, 3) ring vertices before projection
    hits: np.ndarray          # (n, 3) projected points, NaN where missed
    hit_mask: np.ndarray      # (n,) bool
    lengths: np.ndarray       # (n,) deformed spring lengths, NaN unless both ends hit
    rest_length: float

    @property
    def any_miss(self):
        return not bool(self.hit_mask.all())


@dataclass(frozen=True, eq=False)
class PlaneFit:
    score: float
    e_square: float
    normal: np.ndarray | None
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class SealResult:
    score: float
    deform: float
    fit: float
    e_square: float
    projection: ProjectionResult | None = None
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))


def change_ratio(rest, deformed):
    """Relative spring length change, clamped to 1."""
    rest = np.asarray(rest, dtype=np.float64)
    if np.any(rest <= 0):
        raise ValueError("rest length must be positive")
    r = np.minimum(1.0, np.abs(np.asarray(deformed, dtype=np.float64) - rest) / rest)
    return float(r) if r.ndim == 0 else r


def deformation_score(ratios):
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size == 0:
        raise ValueError("no springs evaluated")
    return float(1.0 - ratios.max())


def plane_fit_score(points, params: SealParams = SealParams()) -> PlaneFit:
    """Least-squares plane through `points`; score = exp(-c * mean squared residual)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        return PlaneFit(0.0, np.nan, None, degenerate=True)
    d = pts - pts.mean(axis=0)
    w, v = np.linalg.eigh(d.T @ d / len(pts))
    if w[1] <= 1e-12 * max(w[2], np.finfo(float).tiny):
        return PlaneFit(0.0, np.nan, None, degenerate=True)
    e = max(float(w[0]), 0.0)
    return PlaneFit(float(np.exp(-params.c * e)), e, v[:, 0])


# ---------------------------------------------------------------------------
# batched implementation

_QUAD_EXP = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def _neighborhood_stats(index: MeshIndex, points, normals, radius):
    """Per-candidate plane-fit residual and ring orientation.

    The ring's angular phase follows the dominant principal direction of
    a quadric fitted to the neighbourhood in the tangent frame, so ring
    placement is a property of the local surface, not of the world axes.
    Returns (e_square, degenerate, ring_dir, phase_free) with ring_dir
    (N, 3) unit; phase_free marks candidates without a usable direction.
    """
    N = len(points)
    e_sq = np.full(N, np.nan)
    degenerate = np.ones(N, dtype=bool)
    phase_free = np.ones(N, dtype=bool)
    a, b = orthonormal_basis(normals)
    ring_dir = a.copy()
    if N == 0:
        return e_sq, degenerate, ring_dir, phase_free
    surf = index.surface.points
    surf_n = index.mesh.face_normals[index.surface.face_ids]
    # points exactly on the sphere (lattice coincidences) must not flip in or
    # out with round-off, so the boundary gets a tiny relative margin
    groups = index.surface_index.tree.query_ball_point(points, radius * (1 + 1e-9))
    sizes = np.array([len(g) for g in groups])
    if sizes.sum() == 0:
        return e_sq, degenerate, ring_dir, phase_free
    cat = np.concatenate([np.asarray(g, dtype=np.int64) for g in groups])
    owner_all = np.repeat(np.arange(N), sizes)
    # back-facing surface (e.g. the far side of a thin plate) is not under the lip
    facing = np.einsum("ij,ij->i", surf_n[cat], normals[owner_all]) > 1e-9
    cat, owner_all = cat[facing], owner_all[facing]
    counts = np.bincount(owner_all, minlength=N)
    ok = counts >= 3
    if not ok.any():
        return e_sq, degenerate, ring_dir, phase_free
    keep = ok[owner_all]
    cat, owner_all = cat[keep], owner_all[keep]
    sel = np.flatnonzero(ok)
    c = counts[sel]
    starts = np.concatenate([[0], np.cumsum(c)[:-1]])
    owner = np.repeat(np.arange(len(sel)), c)
    # local coordinates scaled to O(1): tangent x, y and height h along u
    rel = (surf[cat] - points[sel][owner]) / radius
    x = np.einsum("ij,ij->i", rel, a[sel][owner])
    y = np.einsum("ij,ij->i", rel, b[sel][owner])
    h = np.einsum("ij,ij->i", rel, normals[sel][owner])
    xy_pow = [(i, d - i) for d in range(5) for i in range(d, -1, -1)]
    M = np.empty((len(x), len(xy_pow) + len(_QUAD_EXP) + 1))
    xp = [np.ones_like(x), x, x * x]
    xp += [xp[2] * x, xp[2] * xp[2]]
    yp = [np.ones_like(y), y, y * y]
    yp += [yp[2] * y, yp[2] * yp[2]]
    for k, (i, j) in enumerate(xy_pow):
        np.multiply(xp[i], yp[j], out=M[:, k])
    for k, (i, j) in enumerate(_QUAD_EXP):
        np.multiply(M[:, xy_pow.index((i, j))], h, out=M[:, len(xy_pow) + k])
    np.multiply(h, h, out=M[:, -1])
    S = np.add.reduceat(M, starts, axis=0) / c[:, None]
    mom = {e: S[:, k] for k, e in enumerate(xy_pow)}
    hmom = {e: S[:, len(xy_pow) + k] for k, e in enumerate(_QUAD_EXP)}
    hh = S[:, -1]

    # plane fit: smallest eigenvalue of the neighbourhood covariance
    mu = np.stack([mom[1, 0], mom[0, 1], hmom[0, 0]], axis=1)
    second = np.stack([mom[2, 0], mom[1, 1], hmom[1, 0],
                       mom[1, 1], mom[0, 2], hmom[0, 1],
                       hmom[1, 0], hmom[0, 1], hh], axis=1).reshape(-1, 3, 3)
    cov = second - mu[:, :, None] * mu[:, None, :]
    w = np.linalg.eigvalsh(cov)
    good = w[:, 1] > 1e-12 * np.maximum(w[:, 2], np.finfo(float).tiny)
    e_sq[sel] = np.where(good, np.maximum(w[:, 0], 0.0) * radius ** 2, np.nan)
    degenerate[sel] = ~good

    # quadric h = k0 + k1 x + k2 y + k3 x^2 + k4 xy + k5 y^2; its Hessian's
    # dominant axis orients the ring
    A = np.stack([mom[i1 + i2, j1 + j2] for i1, j1 in _QUAD_EXP for i2, j2 in _QUAD_EXP], axis=1).reshape(-1, 6, 6)
    rhs = np.stack([hmom[e] for e in _QUAD_EXP], axis=1)
    coef = np.einsum("nij,nj->ni", np.linalg.pinv(A), rhs)
    H = np.stack([2 * coef[:, 3], coef[:, 4], coef[:, 4], 2 * coef[:, 5]], axis=1).reshape(-1, 2, 2)
    dvec, fixed = _ring_phase(H, mom, hmom)
    enough = c >= 6
    rd = dvec[:, :1] * a[sel] + dvec[:, 1:] * b[sel]
    ring_dir[sel[enough]] = rd[enough]
    phase_free[sel[enough & fixed]] = False
    return e_sq, degenerate, ring_dir, phase_free


def _major_axis(M, rel_gap=1e-3, floor=1e-9):
    """Eigenvector of the larger eigenvalue of symmetric 2x2 stacks, plus a usability mask.

    Usable means the two eigenvalues are clearly separated, so the
    direction is stable against round-off.
    """
    w, v = np.linalg.eigh(M)
    scale = np.abs(w).max(axis=1)
    usable = (scale > floor) & (w[:, 1] - w[:, 0] > rel_gap * scale)
    return v[:, :, 1].copy(), usable


def _ring_phase(H, mom, hmom):
    """Reference direction of the ring in tangent (a, b) coordinates.

    Cues in order of preference, each used only when well conditioned so
    the choice survives rigid motion of the input: the axis of largest
    curvature, the offset of the neighbourhood centroid (truncated patches near
    boundaries) and the long axis of the in-plane scatter.
    """
    k = len(H)
    out = np.tile([1.0, 0.0], (k, 1))
    done = np.zeros(k, dtype=bool)
    d, ok = _major_axis(H)
    # orient with the first height moment; only matters for odd n
    flip = d[:, 0] * hmom[1, 0] + d[:, 1] * hmom[0, 1] < 0
    d[flip] *= -1
    out[ok], done[ok] = d[ok], True
    cen = np.stack([mom[1, 0], mom[0, 1]], axis=1)
    norm = np.linalg.norm(cen, axis=1)
    ok = ~done & (norm > 1e-6)
    out[ok] = cen[ok] / norm[ok, None]
    done |= ok
    scatter = np.stack([mom[2, 0], mom[1, 1], mom[1, 1], mom[0, 2]], axis=1).reshape(-1, 2, 2)
    d, ok = _major_axis(scatter)
    ok &= ~done
    out[ok] = d[ok]
    return out, done | ok


def _ring_vertices(points, normals, ring_dir, cup: CupModel, standoff):
    # half-step offset: no vertex points straight along the reference direction
    theta = 2 * np.pi * (np.arange(cup.n_vertices) + 0.5) / cup.n_vertices
    e = np.cross(normals, ring_dir)
    offs = cup.radius * (np.cos(theta)[None, :, None] * ring_dir[:, None, :]
                         + np.sin(theta)[None, :, None] * e[:, None, :])
    return points[:, None, :] + standoff * normals[:, None, :] + offs


def _cast_ring(index: MeshIndex, P, U, ring_dir, cup: CupModel, params: SealParams):
    n = cup.n_vertices
    rest = cup.rest_length
    ring = _ring_vertices(P, U, ring_dir, cup, params.standoff_factor * cup.radius)
    t, _ = index.ray_cast(ring.reshape(-1, 3), np.repeat(-U, n, axis=0), t_max=params.max_travel_factor * cup.radius)
    t = t.reshape(len(P), n)
    hit = np.isfinite(t)
    hits = ring - np.where(hit, t, np.nan)[:, :, None] * U[:, None, :]
    lengths = np.linalg.norm(np.roll(hits, -1, axis=1) - hits, axis=2)
    any_miss = ~hit.all(axis=1)
    with np.errstate(invalid="ignore"):
        ratios = np.minimum(1.0, np.abs(lengths - rest) / rest)
        if params.binary:
            deform = np.where(np.all(ratios <= params.binary_threshold, axis=1), 1.0, 0.0)
        else:
            deform = 1.0 - ratios.max(axis=1)
    deform = np.where(any_miss, 0.0, deform)
    return {"ring": ring, "hits": hits, "lengths": lengths, "any_miss": any_miss, "deform": deform}


def seal_scores(index: MeshIndex, points, normals, cup: CupModel = CupModel(), params: SealParams = SealParams(),
                chunk: int = 2000, return_projection: bool = False, phase_sweep: int = 16):
    """Seal score for many poses at once.

    Where the local surface offers no direction to orient the ring (e.g.
    exactly symmetric vertices), the worst score over `phase_sweep` ring
    rotations spanning one vertex step is used.

    Returns a dict of arrays: score, deform, fit, e_square, any_miss and,
    if requested, ring/hits/lengths.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    N, n = len(points), cup.n_vertices
    out = {k: np.zeros(N) for k in ("score", "deform", "fit", "e_square")}
    out["any_miss"] = np.zeros(N, dtype=bool)
    out["phase_free"] = np.zeros(N, dtype=bool)
    if return_projection:
        out["ring"] = np.zeros((N, n, 3))
        out["hits"] = np.zeros((N, n, 3))
        out["lengths"] = np.zeros((N, n))
    for s in range(0, N, chunk):
        P, U = points[s:s + chunk], normals[s:s + chunk]
        e_sq, degenerate, ring_dir, free = _neighborhood_stats(index, P, U, params.neighborhood_factor * cup.radius)
        fit = np.where(degenerate, 0.0, np.exp(-params.c * np.nan_to_num(e_sq)))
        res = _cast_ring(index, P, U, ring_dir, cup, params)
        score = np.where(res["any_miss"], 0.0, res["deform"] * fit)
        rows = np.flatnonzero(free)
        if len(rows) and phase_sweep > 1:
            Pf, Uf, Df = P[rows], U[rows], ring_dir[rows]
            side = np.cross(Uf, Df)
            for j in range(1, phase_sweep):
                phi = 2 * np.pi / n * j / phase_sweep
                alt = _cast_ring(index, Pf, Uf, np.cos(phi) * Df + np.sin(phi) * side, cup, params)
                alt_score = np.where(alt["any_miss"], 0.0, alt["deform"] * fit[rows])
                worse = alt_score < score[rows]
                w = rows[worse]
                score[w] = alt_score[worse]
                for key in res:
                    res[key][w] = alt[key][worse]
        sl = slice(s, s + len(P))
        out["score"][sl] = score
        out["deform"][sl] = res["deform"]
        out["fit"][sl] = np.where(res["any_miss"], 0.0, fit)
        out["e_square"][sl] = e_sq
        out["any_miss"][sl] = res["any_miss"]
        out["phase_free"][sl] = free
        if return_projection:
            out["ring"][sl] = res["ring"]
            out["hits"][sl] = res["hits"]
            out["lengths"][sl] = res["lengths"]
    return out


def project_cup(index: MeshIndex, pose: SuctionPose, cup: CupModel = CupModel(),
                params: SealParams = SealParams()) -> ProjectionResult:
    """Drop the cup's lip polygon onto the mesh along -u."""
    res = seal_scores(index, pose.p[None], pose.u[None], cup, params, return_projection=True)
    hits = res["hits"][0]
    return ProjectionResult(res["ring"][0], hits, ~np.isnan(hits[:, 0]), res["lengths"][0], cup.rest_length)


def seal_score(index: MeshIndex, pose: SuctionPose, cup: CupModel = CupModel(),
               params: SealParams = SealParams()) -> SealResult:
    res = seal_scores(index, pose.p[None], pose.u[None], cup, params, return_projection=True)
    hits = res["hits"][0]
    proj = ProjectionResult(res["ring"][0], hits, ~np.isnan(hits[:, 0]), res["lengths"][0], cup.rest_length)
    ratios = np.minimum(1.0, np.abs(proj.lengths - cup.rest_length) / cup.rest_length)
    return SealResult(float(res["score"][0]), float(res["deform"][0]), float(res["fit"][0]),
                      float(res["e_square"][0]), proj, ratios)


@dataclass(frozen=True, eq=False)
class ObjectAnnotation:
    """Seal labels for every voxel-sampled candidate of one object, in its own frame."""

    points: np.ndarray
    normals: np.ndarray
    s_seal: np.ndarray
    s_deform: np.ndarray
    s_fit: np.ndarray

    def __len__(self):
        return len(self.points)


def annotate_object(mesh, voxel: float = 0.005, cup: CupModel = CupModel(), params: SealParams = SealParams(),
                    index: MeshIndex | None = None) -> ObjectAnnotation:
    if index is None:
        index = MeshIndex(mesh)
    cand = voxel_sample_surface(mesh, voxel)
    res = seal_scores(index, cand.points, cand.normals, cup, params)
    return ObjectAnnotation(cand.points, cand.normals, res["score"], res["deform"], res["fit"])
