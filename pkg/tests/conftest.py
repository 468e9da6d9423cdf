import numpy as np
import pytest
from hypothesis import settings

from projectile_splat.gaussians import GaussianCloud
from projectile_splat.render import Camera
from projectile_splat.se3 import Pose

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_iso_cloud(rng, n, shell=True):
    if shell:
        pos = rng.normal(size=(n, 3))
        pos = 0.5 * pos / np.linalg.norm(pos, axis=1, keepdims=True)
    else:
        pos = rng.uniform(-0.5, 0.5, (n, 3))
    return GaussianCloud(pos, rng.uniform(0, 1, (n, 3)), rng.uniform(0.3, 0.9, n),
                         radii=rng.uniform(0.04, 0.1, n))


@pytest.fixture
def cam128():
    # looks down world -z from z = 5, image v pointing along world -y
    return Camera(150.0, (64.0, 64.0), (128, 128), Pose([0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 5.0]))


@pytest.fixture
def cam64():
    return Camera(80.0, (32.0, 32.0), (64, 64), Pose([0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 5.0]))
