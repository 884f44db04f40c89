# tests/conftest.py
from __future__ import annotations

import numpy as np
import pytest

from pickplace.sim.motion import MotionParams
from pickplace.sim.scene import Scene
from pickplace.spatial import WorkspaceCalib


@pytest.fixture
def calib() -> WorkspaceCalib:
    return WorkspaceCalib()


@pytest.fixture
def small_calib() -> WorkspaceCalib:
    # 16 x 32 px over the default 0.5 x 1.0 m table
    return WorkspaceCalib(img_h=16, img_w=32)


@pytest.fixture
def params() -> MotionParams:
    return MotionParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def empty_scene(calib: WorkspaceCalib) -> Scene:
    return Scene(calib)


@pytest.fixture(scope="session")
def fabric_cover_dataset(tmp_path_factory):
    """Two demonstrations of fabric-cover, written once per session."""
    from pickplace.dataset import generate_dataset
    from pickplace.tasks.registry import get_task

    root = tmp_path_factory.mktemp("fabric-cover")
    manifest = generate_dataset(get_task("fabric-cover"), 2, 0, root)
    return root, manifest
