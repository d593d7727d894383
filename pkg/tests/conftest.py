import numpy as np
import pytest

from mmdm.datagen import GeneratorConfig, generate_synthetic_dataset
from mmdm.skeleton import Skeleton, chain_skeleton, toy_skeleton


@pytest.fixture(scope="session")
def toy_sk() -> Skeleton:
    return toy_skeleton()


@pytest.fixture(scope="session")
def chain3_rot() -> Skeleton:
    """Root + two links of length 1 along x, rotations mode."""
    offsets = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return Skeleton(
        parents=(-1, 0, 1),
        offsets=offsets,
        part_of=("Torso", "Torso", "Torso"),
        foot_joints=frozenset({2}),
        representation_mode="rotations",
    )


@pytest.fixture(scope="session")
def micro_dataset():
    """8 short synthetic motions, 2 per archetype."""
    config = GeneratorConfig(samples_per_archetype=2, length=16)
    return generate_synthetic_dataset(config, seed=7), config


@pytest.fixture(scope="session")
def desk_dataset():
    """A small but non-trivial dataset for evaluator and metric tests."""
    config = GeneratorConfig(samples_per_archetype=25, length=24)
    return generate_synthetic_dataset(config, seed=0), config
