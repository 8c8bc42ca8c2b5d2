"""Gravity-wrench resistance of a suction pose.

Only the elastic restoring torque limit is modelled: the tangential part
of the gravity torque about the contact point is compared to
tau_thre = pi * r * k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import orthonormal_basis
from .mesh import NotWatertightError, TriangleMesh


@dataclass(frozen=True)
class WrenchParams:
    radius: float = 0.010
    k: float = 31.8          # N
    mass: float = 1.0        # kg
    g: float = 9.8           # m/s^2
    gravity: tuple = (0.0, 0.0, -1.0)

    def __post_init__(self):
        for name in ("radius", "k", "mass", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        gv = np.asarray(self.gravity, dtype=np.float64)
        if gv.shape != (3,) or not np.isfinite(gv).all() or np.linalg.norm(gv) == 0:
            raise ValueError("gravity must be a non-zero 3-vector")
        object.__setattr__(self, "gravity", tuple(float(x) for x in gv / np.linalg.norm(gv)))

    @property
    def torque_threshold(self):
        return np.pi * self.radius * self.k

    def force(self):
        return self.mass * self.g * np.asarray(self.gravity)


@dataclass(frozen=True)
class WrenchResult:
    tau_x: float
    tau_y: float
    tau_e: float
    score: float


def center_of_mass(mesh: TriangleMesh):
    """Uniform-density centroid from signed tetrahedra against the origin."""
    if not mesh.is_watertight():
        raise NotWatertightError(
            "center of mass needs a closed mesh; use the mean of a dense surface sample as a fallback")
    v = mesh.vertices[mesh.faces]
    # shift to the vertex mean to keep the volume sums well conditioned
    o = mesh.vertices.mean(axis=0)
    a, b, c = v[:, 0] - o, v[:, 1] - o, v[:, 2] - o
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    total = vol.sum()
    if abs(total) < 1e-18:
        raise NotWatertightError("mesh encloses no volume")
    return o + (vol[:, None] * (a + b + c) / 4.0).sum(axis=0) / total


def gravity_torque(p, com, params: WrenchParams = WrenchParams()):
    """Torque of gravity about p; accepts single points or (N, 3) arrays."""
    return np.cross(np.asarray(com, dtype=np.float64) - np.asarray(p, dtype=np.float64), params.force())


def tangential_torque(p, u, com, params: WrenchParams = WrenchParams(), basis=None):
    """(tau_x, tau_y, |tau_e|): torque components in the plane orthogonal to u."""
    u = np.asarray(u, dtype=np.float64)
    tau = gravity_torque(p, com, params)
    if basis is None:
        basis = orthonormal_basis(u)
    ex, ey = basis
    tx = np.sum(tau * ex, axis=-1)
    ty = np.sum(tau * ey, axis=-1)
    # norm of the u-orthogonal part, independent of the in-plane basis
    perp = tau - np.sum(tau * u, axis=-1)[..., None] * u
    return tx, ty, np.linalg.norm(perp, axis=-1)


def wrench_scores(points, normals, com, params: WrenchParams = WrenchParams()):
    _, _, te = tangential_torque(points, normals, com, params)
    return 1.0 - np.minimum(1.0, te / params.torque_threshold)


def wrench_score(pose, com, params: WrenchParams = WrenchParams()) -> WrenchResult:
    tx, ty, te = tangential_torque(pose.p, pose.u, com, params)
    return WrenchResult(float(tx), float(ty), float(te), float(1.0 - min(1.0, te / params.torque_threshold)))
