import json
import random

import pytest

from src.backend.classes import SPLIT_NAMES, Constants, DatasetSplits, DescriptionOrigin, FeatureKind
from src.backend.datasets import (
    TaskFilter,
    check_splits,
    make_splits,
    read_splits,
    read_worlds,
    sample_task,
    task_record,
    write_splits,
    write_worlds,
)
from src.backend.errors import SchemaError, SplitError, TaskSamplingError
from src.backend.records import read_jsonl, read_records
from src.backend.world import FrequencyTable, distance


def test_sample_task(world, task):
    assert 2 <= task.path_length <= 5
    assert task.path_length == distance(world, task.start, task.goal)
    assert task.target_object in [obj.name for obj in world.objects_at(task.goal)]
    assert task.target_room == world.room_of(task.goal)
    assert task.goal_desc.origin == DescriptionOrigin.TASK_REQUEST
    assert task.goal_desc.room().name == task.target_room
    assert task.goal_desc.object_names() == [task.target_object]


def test_sample_task_is_seeded(world):
    first = sample_task(world, TaskFilter(min_len=1, max_len=6), random.Random(5))
    second = sample_task(world, TaskFilter(min_len=1, max_len=6), random.Random(5))
    assert first == second


def test_sample_task_impossible_length(world):
    with pytest.raises(TaskSamplingError):
        sample_task(world, TaskFilter(min_len=50, max_len=60, max_tries=5), random.Random(0))


def test_split_sizes(splits, split_cfg):
    assert len(splits.pretrain) == split_cfg.pretrain_size
    assert len(splits.pretrain_val) == split_cfg.pretrain_val_size
    assert len(splits.train) == split_cfg.train_size
    for name in SPLIT_NAMES[3:]:
        assert len(splits.tasks(name)) == split_cfg.eval_size
        assert all(task.split == name for task in splits.tasks(name))


def test_split_held_out_conditions(splits, corpus, split_cfg, world_map):
    check_splits(splits, corpus)
    frequent = set(FrequencyTable.from_worlds(corpus[:-2]).top(split_cfg.top_k))
    assert splits.held_out_objects
    assert not set(splits.held_out_objects) & frequent
    assert splits.held_out_worlds == [corpus[-2].id, corpus[-1].id]
    for task in splits.val_unseen_obj + splits.test_unseen_obj:
        assert task.target_object in splits.held_out_objects
    for task in splits.val_unseen_env:
        assert task.world == corpus[-2].id
    for task in splits.test_unseen_env:
        assert task.world == corpus[-1].id
    for task in splits.val_unseen_str + splits.test_unseen_str:
        assert world_map[task.world].room_of(task.start) == splits.held_out_start_rooms[task.world]
    for task in splits.pretrain + splits.train:
        held_out_room = splits.held_out_start_rooms.get(task.world)
        assert world_map[task.world].room_of(task.start) != held_out_room


def test_task_lengths(splits, split_cfg):
    low, high = split_cfg.task_lengths
    assert all(low <= task.path_length <= high for task in splits.train)
    low, high = split_cfg.pretrain_lengths
    assert all(low <= task.path_length <= high for task in splits.pretrain)


def test_make_splits_is_deterministic(corpus, split_cfg, splits):
    again = make_splits(corpus, split_cfg, seed=0)
    for name in SPLIT_NAMES:
        assert [task_record(t) for t in again.tasks(name)] == [task_record(t) for t in splits.tasks(name)]


def test_make_splits_needs_seen_worlds(corpus, split_cfg):
    with pytest.raises(SplitError):
        make_splits(corpus[:3], split_cfg, seed=0)


def test_check_splits_detects_leak(task):
    with pytest.raises(SplitError):
        check_splits(DatasetSplits(train=[task], held_out_objects=[task.target_object]))
    with pytest.raises(SplitError):
        check_splits(DatasetSplits(pretrain=[task], held_out_worlds=[task.world]))


def test_check_splits_detects_held_out_start_room(splits, corpus, world_map):
    task = next(t for t in splits.pretrain + splits.train if t.world in splits.held_out_start_rooms)
    world = world_map[task.world]
    room = splits.held_out_start_rooms[task.world]
    start = next(node.id for node in world.nodes if world.room_of(node.id) == room)
    leaked = splits.model_copy(update={"train": splits.train + [task.model_copy(update={"start": start})]})
    check_splits(leaked)
    with pytest.raises(SplitError):
        check_splits(leaked, corpus)


def test_unknown_split_name(splits):
    with pytest.raises(KeyError):
        splits.tasks("holdout")


def test_world_and_split_files(tmp_path, corpus, splits):
    write_worlds(tmp_path / "worlds.jsonl", corpus)
    worlds = read_worlds(tmp_path / "worlds.jsonl")
    assert [w.model_dump() for w in worlds] == [w.model_dump() for w in corpus]

    write_splits(tmp_path / "splits.jsonl", splits)
    loaded = read_splits(tmp_path / "splits.jsonl", worlds)
    assert loaded.held_out_objects == splits.held_out_objects
    assert loaded.held_out_start_rooms == splits.held_out_start_rooms
    assert loaded.test_unseen_obj == splits.test_unseen_obj


def test_read_jsonl_checks_header(tmp_path, corpus):
    path = tmp_path / "worlds.jsonl"
    write_worlds(path, corpus[:1])
    with pytest.raises(SchemaError):
        read_jsonl(path, "splits")

    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["schema_version"] = Constants.schema_version + 1
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(SchemaError):
        read_worlds(path)


def test_read_splits_unknown_world(tmp_path, corpus, splits):
    write_splits(tmp_path / "splits.jsonl", splits)
    with pytest.raises(SplitError):
        read_splits(tmp_path / "splits.jsonl", corpus[:1])


def test_read_records_missing_file(tmp_path):
    assert read_records(tmp_path / "nothing.jsonl") == []


def test_goal_description_kinds(task):
    kinds = sorted(f.kind.value for f in task.goal_desc.features)
    assert kinds == sorted([FeatureKind.ROOM.value, FeatureKind.OBJECT.value])
