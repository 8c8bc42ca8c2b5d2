import numpy as np
import pytest

from suctionbench.primitives import bumpy_plate, cuboid, cylinder, icosphere
from suctionbench.scene import SceneGeometry, synthetic_scene
from suctionbench.spatial import MeshIndex


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def plate():
    return cuboid((0.1, 0.1, 0.008))


@pytest.fixture(scope="session")
def plate_index(plate):
    return MeshIndex(plate)


@pytest.fixture(scope="session")
def small_meshes():
    return {
        "box": cuboid((0.1, 0.06, 0.04)),
        "sphere": icosphere(0.04, 3),
        "cylinder": cylinder(0.03, 0.08, 32),
        "bumpy": bumpy_plate((0.06, 0.06, 0.01), amplitude=0.002, wavelength=0.02, resolution=0.004),
    }


@pytest.fixture(scope="session")
def smooth_scene():
    return synthetic_scene("smooth")


@pytest.fixture(scope="session")
def smooth_geometry(smooth_scene):
    return SceneGeometry(smooth_scene)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
