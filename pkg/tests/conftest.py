import numpy as np
import pytest

from numerics.tensor import Tensor
from transformer.config import ModelConfig, StageConfig


def toy_config(num_layers=2, embed_dim=4, num_heads=2, mlp_dim=8, image_size=8, patch_size=4, num_classes=3):
    return ModelConfig(
        stages=[StageConfig(num_layers=num_layers, embed_dim=embed_dim, num_heads=num_heads, mlp_dim=mlp_dim)],
        image_size=image_size,
        patch_size=patch_size,
        in_channels=1,
        num_classes=num_classes,
    )


def deit_b_config():
    return ModelConfig(
        stages=[StageConfig(num_layers=12, embed_dim=768, num_heads=12, mlp_dim=3072)],
        image_size=224,
        patch_size=16,
        in_channels=3,
        num_classes=1000,
    )


def randomize(model, rng, std=0.5):
    """Replace every parameter value in place by N(0, std); keeps aliasing."""
    for t in model.params.values():
        t.data[...] = rng.normal(0.0, std, size=t.shape)
    return model


def t64(x):
    return Tensor(np.asarray(x, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy_cfg():
    return toy_config()


@pytest.fixture
def images(rng, toy_cfg):
    return rng.normal(size=(3, toy_cfg.image_size, toy_cfg.image_size, 1))
