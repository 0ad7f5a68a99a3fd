import numpy as np
import pytest

from src.config import Config
from src.geometry import PointCloud, center_cloud
from src.net.params import ModelParams
from src.training.gradcheck import TOY_ARCHITECTURE, toy_architecture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_arch():
    return toy_architecture()


@pytest.fixture
def toy_model(toy_arch):
    return ModelParams.initialize(toy_arch, seed=0, dtype=np.float64)


def random_cloud(rng, n=40, scale=2.0, centered=True) -> PointCloud:
    cloud = PointCloud(rng.uniform(-scale, scale, size=(n, 3)))
    return center_cloud(cloud)[0] if centered else cloud


@pytest.fixture
def cloud(rng):
    return random_cloud(rng)


def toy_pipeline(**sections) -> Config:
    """A configuration with the toy architecture and small training/eval sizes."""
    data = {
        "architecture": dict(TOY_ARCHITECTURE),
        "training": {
            "points_per_cloud": 64,
            "anchors_per_pair": 24,
            "pairs_per_batch": 2,
            "voxel_grid": 0.05,
            "local_steps": 5,
            "local_steps_per_epoch": 2,
            "global_steps": 5,
            "global_steps_per_epoch": 2,
            "checkpoint_every": 0,
        },
        "eval": {"keypoints": 16, "nms_radius": 0.0, "inlier_threshold": 0.3},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return Config.from_dict(data)


@pytest.fixture
def toy_config():
    return toy_pipeline()
