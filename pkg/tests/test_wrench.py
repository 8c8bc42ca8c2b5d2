import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suctionbench.geometry import RigidTransform
from suctionbench.mesh import NotWatertightError, TriangleMesh
from suctionbench.primitives import cuboid, icosphere, prism
from suctionbench.seal import SuctionPose
from suctionbench.wrench import (
    WrenchParams,
    center_of_mass,
    gravity_torque,
    tangential_torque,
    wrench_score,
    wrench_scores,
)

L_POLYGON = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], dtype=float) * 0.05


def monte_carlo_l_centroid(n, rng):
    """Uniform samples in the bounding box, rejected outside the L."""
    xy = rng.uniform(0, 0.1, size=(n, 2))
    inside = (xy[:, 1] <= 0.05) | (xy[:, 0] <= 0.05)
    z = rng.uniform(-0.015, 0.015, size=n)
    return np.array([xy[inside, 0].mean(), xy[inside, 1].mean(), z[inside].mean()])


def test_hand_case():
    params = WrenchParams()
    res = wrench_score(SuctionPose((0.05, 0, 0.05), (1, 0, 0)), center_of_mass(cuboid((0.1, 0.1, 0.1))), params)
    assert res.tau_e == pytest.approx(0.49, abs=1e-12)
    assert params.torque_threshold == pytest.approx(np.pi * 0.01 * 31.8)
    assert res.score == pytest.approx(1 - 0.49 / (np.pi * 0.01 * 31.8), abs=1e-12)


def test_torque_along_approach_is_ignored():
    # hanging straight below the contact: no tangential torque
    res = wrench_score(SuctionPose((0, 0, 0.05), (0, 0, 1)), np.zeros(3))
    assert res.tau_e == 0.0 and res.score == 1.0


def test_clamped_at_zero():
    res = wrench_score(SuctionPose((1.0, 0, 0), (1, 0, 0)), np.zeros(3))
    assert res.score == 0.0


def test_components_consistent(rng):
    p = rng.normal(size=(50, 3))
    u = rng.normal(size=(50, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    tx, ty, te = tangential_torque(p, u, np.zeros(3))
    assert np.allclose(np.hypot(tx, ty), te)
    tau = gravity_torque(p, np.zeros(3))
    assert np.allclose(tau, np.cross(-p, [0, 0, -9.8]))


def test_unit_cube_com():
    box = cuboid((1.0, 1.0, 1.0)).transformed(RigidTransform(np.eye(3), (0.5, 0.5, 0.5)))
    assert np.abs(center_of_mass(box) - 0.5).max() <= 1e-9


def test_l_solid_com_against_monte_carlo(rng):
    com = center_of_mass(prism(L_POLYGON, 0.03))
    exact = np.array([5 / 6 * 0.05, 5 / 6 * 0.05, 0.0])
    assert np.abs(com - exact).max() <= 1e-12
    assert np.linalg.norm(com - monte_carlo_l_centroid(1_000_000, rng)) <= 1e-3


def test_com_translation_far_from_origin():
    s = icosphere(0.05, 2, center=(100.0, -50.0, 20.0))
    assert np.abs(center_of_mass(s) - (100.0, -50.0, 20.0)).max() < 1e-9


def test_open_mesh_rejected():
    with pytest.raises(NotWatertightError):
        center_of_mass(TriangleMesh(np.eye(3), np.array([[0, 1, 2]])))


def test_params_validation():
    with pytest.raises(ValueError):
        WrenchParams(mass=0)
    with pytest.raises(ValueError):
        WrenchParams(gravity=(0, 0, 0))
    assert WrenchParams(gravity=(0, 0, -5)).gravity == (0.0, 0.0, -1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_does_not_change_ranking(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-0.1, 0.1, size=(100, 3))
    u = rng.normal(size=(100, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    com = rng.uniform(-0.05, 0.05, size=3)
    orders = [np.argsort(tangential_torque(p, u, com, WrenchParams(mass=m))[2], kind="stable") for m in (0.1, 1, 10)]
    assert np.array_equal(orders[0], orders[1]) and np.array_equal(orders[1], orders[2])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_co_rotated_gravity_invariance(seed):
    rng = np.random.default_rng(seed)
    T = RigidTransform.random(rng)
    p = rng.uniform(-0.1, 0.1, size=(20, 3))
    u = rng.normal(size=(20, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    com = rng.uniform(-0.05, 0.05, size=3)
    a = wrench_scores(p, u, com)
    b = wrench_scores(T.apply(p), T.apply_directions(u), T.apply(com),
                      WrenchParams(gravity=tuple(T.apply_directions([0, 0, -1.0]))))
    assert np.abs(a - b).max() <= 1e-9
