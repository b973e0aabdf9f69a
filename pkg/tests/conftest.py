import random

import pytest

from src.backend.datasets import TaskFilter, generate_corpus, make_splits, sample_task
from src.backend.world import FrequencyTable, generate_house
from src.config import CorpusConfig, SplitConfig, WorldGenConfig


@pytest.fixture(scope="session")
def world_cfg():
    return WorldGenConfig(num_nodes=16, nodes_per_room=4, min_objects_per_node=1, max_objects_per_node=3)


@pytest.fixture(scope="session")
def world(world_cfg):
    return generate_house(7, world_cfg)


@pytest.fixture(scope="session")
def task(world):
    return sample_task(world, TaskFilter(min_len=2, max_len=5), random.Random(0), split="train", task_id="t-0")


@pytest.fixture(scope="session")
def corpus(world_cfg):
    return generate_corpus(0, CorpusConfig(num_worlds=6), world_cfg)


@pytest.fixture(scope="session")
def world_map(corpus):
    return {w.id: w for w in corpus}


@pytest.fixture(scope="session")
def freq(corpus):
    return FrequencyTable.from_worlds(corpus)


@pytest.fixture(scope="session")
def split_cfg():
    return SplitConfig(
        train_only_worlds=1,
        val_env_worlds=1,
        test_env_worlds=1,
        num_held_out_objects=5,
        pretrain_size=20,
        pretrain_val_size=5,
        train_size=10,
        eval_size=4,
        pretrain_lengths=(1, 4),
        task_lengths=(2, 4),
    )


@pytest.fixture(scope="session")
def splits(corpus, split_cfg):
    return make_splits(corpus, split_cfg, seed=0)


@pytest.fixture(scope="session")
def houses():
    return [generate_house(seed, WorldGenConfig(num_nodes=40)) for seed in range(5)]
