"""Scene composition, label projection, collision filtering and depth rendering.

Conventions: object poses map object frame -> world; camera poses map
camera -> world with OpenCV axes (x right, y down, z forward). The table
is the plane z = 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import CameraIntrinsics, PointCloud, RigidTransform, look_at, project
from .sampling import sample_surface
from .seal import ObjectAnnotation
from .spatial import MeshIndex, PointIndex
from .wrench import WrenchParams, center_of_mass, wrench_scores


class InterpenetrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ObjectInstance:
    object_id: str
    pose: RigidTransform = field(default_factory=RigidTransform.identity)


@dataclass(frozen=True, eq=False)
class Scene:
    instances: tuple
    meshes: dict
    camera_poses: tuple = ()
    gravity: tuple = (0.0, 0.0, -1.0)
    intrinsics: CameraIntrinsics | None = None
    table: bool = True

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "camera_poses", tuple(self.camera_poses))
        for inst in self.instances:
            if inst.object_id not in self.meshes:
                raise KeyError(f"object id {inst.object_id!r} is not in the mesh registry")

    def transformed(self, T: RigidTransform):
        """The same scene moved rigidly by T (objects, cameras and gravity; the table stays at z = 0)."""
        return Scene(
            [ObjectInstance(i.object_id, T @ i.pose) for i in self.instances],
            self.meshes,
            [T @ c for c in self.camera_poses],
            tuple(T.apply_directions(self.gravity)),
            self.intrinsics,
            self.table,
        )


def tabletop_scene(meshes: dict, placements, eye=(0.0, -0.25, 0.6), target=(0.0, 0.0, 0.0),
                   intrinsics: CameraIntrinsics | None = None) -> Scene:
    """Objects resting on the table plus one look-at camera.

    `placements` lists (object_id, (x, y)) or (object_id, (x, y), yaw);
    each object is rotated about z and lifted so its lowest vertex is at z = 0.
    """
    instances = []
    for item in placements:
        oid, (x, y), yaw = (item + (0.0,))[:3] if len(item) == 2 else item
        R = RigidTransform.from_axis_angle((0.0, 0.0, 1.0), yaw).rotation
        z = -float((meshes[oid].vertices @ R.T)[:, 2].min())
        instances.append(ObjectInstance(oid, RigidTransform(R, (x, y, z))))
    return Scene(instances, meshes, [look_at(eye, target)], intrinsics=intrinsics or CameraIntrinsics.default())


def synthetic_scene(kind="smooth", **kwargs) -> Scene:
    """Five-object reference scenes.

    ``smooth``: box, sphere, cylinder, slab and brick. ``bumpy``: five
    plates with a 3 mm sinusoidal top. Extra arguments go to tabletop_scene.
    """
    from .primitives import bumpy_plate, cuboid, cylinder, icosphere

    spots = [(0.0, 0.0), (0.13, 0.0), (-0.13, 0.0), (0.0, 0.13), (0.0, -0.13)]
    if kind == "smooth":
        meshes = {"box": cuboid((0.08, 0.06, 0.05)), "ball": icosphere(0.04, 4), "can": cylinder(0.035, 0.1),
                  "slab": cuboid((0.1, 0.1, 0.02)), "brick": cuboid((0.05, 0.1, 0.04))}
    elif kind == "bumpy":
        plate = bumpy_plate((0.1, 0.1, 0.02), amplitude=0.003, wavelength=0.02)
        meshes = {f"plate{i}": plate for i in range(5)}
    else:
        raise ValueError(f"unknown synthetic scene {kind!r}")
    return tabletop_scene(meshes, list(zip(meshes, spots)), **kwargs)


@dataclass(frozen=True)
class CollisionParams:
    radius: float = 0.012
    height: float = 0.05
    offset: float = 0.002
    exclusion: float = 0.005
    # object sample spacing; include_table adds the solid half-space z < 0
    cloud_spacing: float = 0.002
    include_table: bool = True

    def __post_init__(self):
        for name in ("radius", "height", "offset", "exclusion", "cloud_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"collision {name} must be positive")


@dataclass(frozen=True, eq=False)
class SceneAnnotation:
    """Per-candidate scene labels, sorted by (object id, instance, candidate)."""

    object_ids: np.ndarray      # (N,) str
    instances: np.ndarray       # (N,) int, index into the scene's instance list
    candidates: np.ndarray      # (N,) int, row in the object's annotation
    points: np.ndarray          # (N, 3) world
    normals: np.ndarray         # (N, 3) world
    s_seal: np.ndarray
    s_wrench: np.ndarray
    score: np.ndarray
    collision_free: np.ndarray  # (N,) bool
    object_centers: np.ndarray  # (n_instances, 3) world centers of mass

    def __len__(self):
        return len(self.points)

    def select(self, mask):
        mask = np.asarray(mask)
        return SceneAnnotation(self.object_ids[mask], self.instances[mask], self.candidates[mask],
                               self.points[mask], self.normals[mask], self.s_seal[mask], self.s_wrench[mask],
                               self.score[mask], self.collision_free[mask], self.object_centers)


# ---------------------------------------------------------------------------
# pose algebra

def propagate_pose(cam_i: RigidTransform, cam_0: RigidTransform, P_0: RigidTransform) -> RigidTransform:
    """Object pose in camera i from its pose in camera 0: cam_i^-1 cam_0 P_0."""
    return cam_i.inverse() @ cam_0 @ P_0


def project_suctions(instance: ObjectInstance | RigidTransform, points, normals, cam_0: RigidTransform | None = None):
    """Object-frame suctions -> world (or camera-0-relative poses composed with cam_0)."""
    T = instance.pose if isinstance(instance, ObjectInstance) else instance
    if cam_0 is not None:
        T = cam_0 @ T
    return T.apply(points), T.apply_directions(normals)


# ---------------------------------------------------------------------------
# collision

def in_cylinder(points, p, u, params: CollisionParams = CollisionParams()):
    """Mask of points inside the gripper cylinder and outside the exclusion ball."""
    d = np.asarray(points, dtype=np.float64) - p
    s = d @ u - params.offset
    radial2 = np.einsum("ij,ij->i", d, d) - (d @ u) ** 2
    outside_ball = np.einsum("ij,ij->i", d, d) > params.exclusion ** 2
    return outside_ball & (s >= 0) & (s <= params.height) & (radial2 <= params.radius ** 2)


def check_collision(cloud, pose, params: CollisionParams = CollisionParams()) -> bool:
    """True if any scene point sits inside the gripper cylinder of `pose`."""
    index = cloud if isinstance(cloud, PointIndex) else PointIndex(cloud.points if isinstance(cloud, PointCloud) else cloud)
    return bool(check_collisions(index, pose.p[None], pose.u[None], params)[0])


def below_table(points, normals, params: CollisionParams = CollisionParams()):
    """Mask of gripper cylinders reaching below the table plane z = 0."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    # lowest point of a cap disc sits R * |horizontal part of u| below its center
    drop = params.radius * np.sqrt(np.maximum(0.0, 1.0 - u[:, 2] ** 2))
    near = points[:, 2] + params.offset * u[:, 2]
    far = near + params.height * u[:, 2]
    return np.minimum(near, far) - drop < 0


def check_collisions(index: PointIndex, points, normals, params: CollisionParams = CollisionParams(), chunk=2000):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(points), dtype=bool)
    if len(index) == 0:
        return out
    half = params.height / 2
    centers = points + (params.offset + half) * normals
    reach = np.hypot(half, params.radius) * (1 + 1e-9) + 1e-12
    cloud = index.points
    for s in range(0, len(points), chunk):
        groups = index.tree.query_ball_point(centers[s:s + chunk], reach)
        for k, g in enumerate(groups):
            if g:
                i = s + k
                out[i] = bool(in_cylinder(cloud[g], points[i], normals[i], params).any())
    return out


# ---------------------------------------------------------------------------
# cached scene geometry

class SceneGeometry:
    """Per-scene derived data built once and shared read-only."""

    def __init__(self, scene: Scene, collision: CollisionParams = CollisionParams(),
                 association_spacing: float = 0.001, surface_spacing: float = 1.5e-3):
        self.scene = scene
        self.surface_spacing = surface_spacing
        self.collision = collision
        self.association_spacing = association_spacing
        self._indices = {}
        self._coms = {}

    def mesh_index(self, object_id) -> MeshIndex:
        if object_id not in self._indices:
            self._indices[object_id] = MeshIndex(self.scene.meshes[object_id], surface_spacing=self.surface_spacing)
        return self._indices[object_id]

    def object_com(self, object_id):
        if object_id not in self._coms:
            self._coms[object_id] = center_of_mass(self.scene.meshes[object_id])
        return self._coms[object_id]

    @cached_property
    def instance_coms(self):
        return np.array([i.pose.apply(self.object_com(i.object_id)) for i in self.scene.instances]).reshape(-1, 3)

    def _instance_samples(self, spacing):
        pts, labels = [], []
        for k, inst in enumerate(self.scene.instances):
            p = inst.pose.apply(sample_surface(self.scene.meshes[inst.object_id], spacing).points)
            pts.append(p)
            labels.append(np.full(len(p), k))
        if not pts:
            return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
        return np.vstack(pts), np.concatenate(labels)

    @cached_property
    def collision_cloud(self) -> PointCloud:
        """Object surface samples, labelled with their instance index."""
        pts, labels = self._instance_samples(self.collision.cloud_spacing)
        return PointCloud(pts, labels=labels)

    @cached_property
    def collision_index(self) -> PointIndex:
        return PointIndex(self.collision_cloud.points)

    @cached_property
    def association_cloud(self):
        return self._instance_samples(self.association_spacing)

    @cached_property
    def association_index(self) -> PointIndex:
        return PointIndex(self.association_cloud[0])

    def check_collisions(self, points, normals, params: CollisionParams | None = None):
        """Gripper cylinder against object samples and, if enabled, the solid table."""
        params = params or self.collision
        hit = check_collisions(self.collision_index, points, normals, params)
        if params.include_table and self.scene.table:
            hit |= below_table(points, normals, params)
        return hit

    def associate(self, points, max_distance=0.05):
        """Instance index nearest to each point, -1 beyond `max_distance`; also returns distances."""
        q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self.association_index) == 0:
            return np.full(len(q), -1), np.full(len(q), np.inf)
        d, i = self.association_index.nearest(q)
        inst = self.association_cloud[1][i]
        return np.where(d <= max_distance, inst, -1), d


# ---------------------------------------------------------------------------
# annotation

def check_interpenetration(geom: SceneGeometry, tolerance=0.002):
    """Pairs of instances whose surfaces penetrate each other deeper than `tolerance`."""
    scene = geom.scene
    pts, labels = geom.collision_cloud.points, geom.collision_cloud.labels
    bad = []
    for b, inst in enumerate(scene.instances):
        idx = geom.mesh_index(inst.object_id)
        local = inst.pose.inverse().apply(pts)
        lo, hi = idx.mesh.bounds()
        near = np.flatnonzero((labels >= 0) & (labels != b) & np.all((local >= lo) & (local <= hi), axis=1))
        if not len(near):
            continue
        d, j = idx.surface_index.nearest(local[near])
        surf = idx.surface
        n = idx.mesh.interpolate_normals(surf.face_ids[j], surf.bary[j])
        inside = np.einsum("ij,ij->i", local[near] - surf.points[j], n) < 0
        deep = inside & (d > tolerance)
        for a in np.unique(labels[near][deep]):
            bad.append((int(a), b))
    return sorted({tuple(sorted(p)) for p in bad})


def annotate_scene(scene: Scene, annotations: dict, wrench: WrenchParams = WrenchParams(),
                   collision: CollisionParams = CollisionParams(), geometry: SceneGeometry | None = None,
                   penetration_tolerance=0.002) -> SceneAnnotation:
    """Project per-object seal labels into the scene and add wrench and collision labels.

    `annotations` maps object id -> ObjectAnnotation. Scene gravity
    overrides the direction in `wrench`.
    """
    if not scene.instances:
        raise ValueError("scene has no object instances")
    missing = sorted({i.object_id for i in scene.instances} - set(annotations))
    if missing:
        raise KeyError(f"no seal annotation for object(s): {', '.join(missing)}")
    geom = geometry or SceneGeometry(scene, collision)
    pairs = check_interpenetration(geom, penetration_tolerance)
    for a, b in pairs:
        warnings.warn(f"instances {a} ({scene.instances[a].object_id}) and {b} ({scene.instances[b].object_id}) "
                      f"interpenetrate by more than {penetration_tolerance * 1000:g} mm", InterpenetrationWarning)
    wp = WrenchParams(wrench.radius, wrench.k, wrench.mass, wrench.g, scene.gravity)
    coms = geom.instance_coms
    order = sorted(range(len(scene.instances)), key=lambda k: (scene.instances[k].object_id, k))
    parts = []
    for k in order:
        inst = scene.instances[k]
        ann: ObjectAnnotation = annotations[inst.object_id]
        pts, nrm = project_suctions(inst, ann.points, ann.normals)
        s_wrench = wrench_scores(pts, nrm, coms[k], wp)
        free = ~geom.check_collisions(pts, nrm, collision)
        m = len(pts)
        parts.append((np.full(m, inst.object_id, dtype=object), np.full(m, k), np.arange(m), pts, nrm,
                      np.asarray(ann.s_seal, dtype=np.float64), s_wrench, free))
    cols = list(zip(*parts))
    s_seal = np.concatenate(cols[5])
    s_wrench = np.concatenate(cols[6])
    return SceneAnnotation(
        np.concatenate(cols[0]), np.concatenate(cols[1]), np.concatenate(cols[2]),
        np.vstack(cols[3]), np.vstack(cols[4]), s_seal, s_wrench, s_seal * s_wrench,
        np.concatenate(cols[7]), coms,
    )


# ---------------------------------------------------------------------------
# rendering

def render_depth(scene: Scene, intr: CameraIntrinsics, camera_pose: RigidTransform,
                 geometry: SceneGeometry | None = None):
    """Ray-cast depth image (meters along the optical axis); 0 where nothing is hit."""
    geom = geometry or SceneGeometry(scene)
    H, W = intr.height, intr.width
    rays = intr.pixel_rays().reshape(-1, 3)
    origin = camera_pose.translation
    dirs = camera_pose.apply_directions(rays)
    depth = np.full(H * W, np.inf)
    world_to_cam = camera_pose.inverse()
    for inst in scene.instances:
        idx = geom.mesh_index(inst.object_id)
        lo, hi = idx.mesh.bounds()
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        cam_pts = world_to_cam.apply(inst.pose.apply(corners))
        if np.all(cam_pts[:, 2] > 1e-9):
            uv = project(intr, cam_pts)
            u0, v0 = np.floor(uv.min(axis=0)).astype(int) - 1
            u1, v1 = np.ceil(uv.max(axis=0)).astype(int) + 1
            u0, v0, u1, v1 = max(u0, 0), max(v0, 0), min(u1, W - 1), min(v1, H - 1)
            if u0 > u1 or v0 > v1:
                continue
            vv, uu = np.meshgrid(np.arange(v0, v1 + 1), np.arange(u0, u1 + 1), indexing="ij")
            pix = (vv * W + uu).ravel()
        elif np.all(cam_pts[:, 2] <= 0):
            continue
        else:
            pix = np.arange(H * W)
        inv = inst.pose.inverse()
        t, _ = idx.ray_cast(np.broadcast_to(inv.apply(origin), (len(pix), 3)), inv.apply_directions(dirs[pix]))
        depth[pix] = np.minimum(depth[pix], t)
    if scene.table:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_table = -origin[2] / dirs[:, 2]
        t_table = np.where((dirs[:, 2] != 0) & (t_table > 0), t_table, np.inf)
        depth = np.minimum(depth, t_table)
    depth[~np.isfinite(depth)] = 0.0
    return depth.reshape(H, W)
