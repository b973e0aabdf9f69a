import logging
import random
from typing import Dict, List, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, Field

from src.config import CorpusConfig, SplitConfig, WorldGenConfig

from .classes import (
    SPLIT_NAMES,
    DatasetSplits,
    Description,
    DescriptionOrigin,
    FeatureKind,
    FeatureSet,
    Node,
    PlacedObject,
    Task,
    WorldGraph,
)
from .errors import SplitError, TaskSamplingError
from .records import PathLike, read_jsonl, write_jsonl
from .world import FrequencyTable, discretize, distances, generate_house, object_position, relative_geometry

logger = logging.getLogger("intention_nav")


class TaskFilter(BaseModel):
    min_len: int = Field(5, ge=0)
    max_len: int = Field(10, ge=0)
    start_room: Optional[str] = None
    excluded_start_room: Optional[str] = None
    # None admits every target object
    allowed_objects: Optional[Set[str]] = None
    excluded_objects: Set[str] = set()
    max_tries: int = Field(200, ge=1)

    def admits_object(self, name: str) -> bool:
        if name in self.excluded_objects:
            return False
        return self.allowed_objects is None or name in self.allowed_objects

    def admits_start(self, room: str) -> bool:
        if self.start_room is not None and room != self.start_room:
            return False
        return room != self.excluded_start_room


def generate_corpus(seed: int, corpus: CorpusConfig, world_cfg: WorldGenConfig) -> List[WorldGraph]:
    return [
        generate_house(seed * 1000 + i, world_cfg, world_id=f"{corpus.world_prefix}{i:02d}")
        for i in range(corpus.num_worlds)
    ]


def target_instance(world: WorldGraph, goal: int, name: str) -> PlacedObject:
    """The lowest-id object called `name` placed at `goal`."""
    for obj in sorted(world.objects_at(goal), key=lambda o: o.id):
        if obj.name == name:
            return obj
    raise TaskSamplingError(f"Goal description not built, no {name} at node {goal} of world {world.id}")


def goal_description(world: WorldGraph, goal: int, target_object: str) -> Description:
    """What a task request says: the goal room and the target object, seen from the goal node."""
    node = world.node(goal)
    obj = target_instance(world, goal, target_object)
    horz, vert, dist = discretize(*relative_geometry(node.pos, object_position(world, node, obj)))
    return Description(
        features=(
            FeatureSet(name=node.room, kind=FeatureKind.ROOM),
            FeatureSet(name=obj.name, horz=horz, vert=vert, dist=dist),
        ),
        origin=DescriptionOrigin.TASK_REQUEST,
    )


def sample_task(
    world: WorldGraph, task_filter: TaskFilter, rng: random.Random, split: str = "", task_id: str = ""
) -> Task:
    goals = [
        node.id for node in world.nodes if any(task_filter.admits_object(obj.name) for obj in node.objects)
    ]
    starts = [node.id for node in world.nodes if task_filter.admits_start(node.room)]
    if not goals or not starts:
        raise TaskSamplingError(f"Task not sampled, world {world.id} has no admissible start or goal")

    dist = distances(world)
    for _ in range(task_filter.max_tries):
        start = rng.choice(starts)
        reachable = [g for g in goals if task_filter.min_len <= dist[start, g] <= task_filter.max_len]
        if not reachable:
            continue
        goal = rng.choice(reachable)
        names = sorted({obj.name for obj in world.objects_at(goal) if task_filter.admits_object(obj.name)})
        target = rng.choice(names)
        return Task(
            task_id=task_id,
            world=world.id,
            start=start,
            goal=goal,
            goal_desc=goal_description(world, goal, target),
            target_object=target,
            target_room=world.room_of(goal),
            path_length=int(dist[start, goal]),
            split=split,
        )
    raise TaskSamplingError(
        f"Task not sampled, no goal within [{task_filter.min_len}, {task_filter.max_len}] steps "
        f"in world {world.id} after {task_filter.max_tries} tries"
    )


def _sample_split(
    name: str,
    size: int,
    pool: Sequence[WorldGraph],
    filters: Dict[str, TaskFilter],
    rng: random.Random,
) -> List[Task]:
    if size and not pool:
        raise SplitError(f"Split {name} not built, no world is assigned to it")
    tasks = []
    for i in range(size):
        for attempt in range(len(pool)):
            world = pool[(i + attempt) % len(pool)]
            try:
                tasks.append(sample_task(world, filters[world.id], rng, split=name, task_id=f"{name}-{i:05d}"))
                break
            except TaskSamplingError as e:
                logger.debug(f"{e}; trying the next world")
        else:
            raise SplitError(f"Split {name} not built, no world yields task {i}")
    return tasks


def make_splits(
    worlds: Sequence[WorldGraph], cfg: SplitConfig, seed: int, freq: Optional[FrequencyTable] = None
) -> DatasetSplits:
    held_out_env = cfg.val_env_worlds + cfg.test_env_worlds
    num_seen = len(worlds) - cfg.train_only_worlds - held_out_env
    if num_seen < 1:
        raise SplitError(
            f"Splits not built, {len(worlds)} worlds leave no seen world after "
            f"{cfg.train_only_worlds} train-only and {held_out_env} held-out worlds"
        )
    seen = list(worlds[:num_seen])
    train_only = list(worlds[num_seen : num_seen + cfg.train_only_worlds])
    val_env = list(worlds[num_seen + cfg.train_only_worlds : num_seen + cfg.train_only_worlds + cfg.val_env_worlds])
    test_env = list(worlds[num_seen + cfg.train_only_worlds + cfg.val_env_worlds :])
    training_pool = seen + train_only

    rng = random.Random(f"{seed}:held-out")
    freq = freq or FrequencyTable.from_worlds(training_pool)
    frequent = set(freq.top(cfg.top_k))
    rare = sorted({obj.name for w in seen for n in w.nodes for obj in n.objects} - frequent)
    held_out_objects = sorted(rng.sample(rare, min(cfg.num_held_out_objects, len(rare))))
    held_out_rooms = {w.id: rng.choice(w.rooms()) for w in seen}
    excluded = set(held_out_objects)

    def filters(lengths: Tuple[int, int], **kwargs) -> Dict[str, TaskFilter]:
        result = {}
        for w in worlds:
            options = dict(min_len=lengths[0], max_len=lengths[1], max_tries=cfg.max_tries)
            options.update(kwargs)
            if w.id in held_out_rooms and "start_room" not in kwargs:
                options["excluded_start_room"] = held_out_rooms[w.id]
            result[w.id] = TaskFilter(**options)
        return result

    training = filters(cfg.pretrain_lengths, excluded_objects=excluded)
    training_tasks = filters(cfg.task_lengths, excluded_objects=excluded)
    unseen_obj = filters(cfg.task_lengths, allowed_objects=excluded)
    unseen_env = filters(cfg.task_lengths)
    unseen_str = {
        w.id: TaskFilter(
            min_len=cfg.task_lengths[0],
            max_len=cfg.task_lengths[1],
            start_room=held_out_rooms[w.id],
            excluded_objects=excluded,
            max_tries=cfg.max_tries,
        )
        for w in seen
    }

    plan = {
        "pretrain": (cfg.pretrain_size, training_pool, training),
        "pretrain_val": (cfg.pretrain_val_size, training_pool, training),
        "train": (cfg.train_size, training_pool, training_tasks),
        "val_unseen_str": (cfg.eval_size, seen, unseen_str),
        "val_unseen_obj": (cfg.eval_size, seen, unseen_obj),
        "val_unseen_env": (cfg.eval_size, val_env, unseen_env),
        "test_unseen_str": (cfg.eval_size, seen, unseen_str),
        "test_unseen_obj": (cfg.eval_size, seen, unseen_obj),
        "test_unseen_env": (cfg.eval_size, test_env, unseen_env),
    }
    built = {}
    for name in SPLIT_NAMES:
        size, pool, split_filters = plan[name]
        built[name] = _sample_split(name, size, pool, split_filters, random.Random(f"{seed}:{name}"))
        logger.info(f"Split {name}: {len(built[name])} tasks over {len(pool)} worlds")

    return DatasetSplits(
        **built,
        held_out_objects=held_out_objects,
        held_out_worlds=[w.id for w in val_env + test_env],
        held_out_start_rooms=held_out_rooms,
    )


def check_splits(splits: DatasetSplits, worlds: Optional[Sequence[WorldGraph]] = None) -> None:
    """Raises SplitError when a held-out object, world or start room leaks into training tasks.

    Start rooms are only checked when `worlds` is given, since tasks do not record the room they start in.
    """
    objects = set(splits.held_out_objects)
    held_out_worlds = set(splits.held_out_worlds)
    by_id = worlds_by_id(worlds) if worlds is not None else {}
    for name in ("pretrain", "pretrain_val", "train"):
        for task in splits.tasks(name):
            if task.target_object in objects:
                raise SplitError(f"Split {name} task {task.task_id} targets held-out object {task.target_object}")
            if task.world in held_out_worlds:
                raise SplitError(f"Split {name} task {task.task_id} uses held-out world {task.world}")
            room = splits.held_out_start_rooms.get(task.world)
            if room is not None and task.world in by_id and by_id[task.world].room_of(task.start) == room:
                raise SplitError(f"Split {name} task {task.task_id} starts in held-out room {room} of {task.world}")


def world_record(world: WorldGraph) -> Dict:
    return {
        "world_id": world.id,
        "max_degree": world.max_degree,
        "nodes": [node.model_dump(mode="json") for node in world.nodes],
    }


def write_worlds(path: PathLike, worlds: Sequence[WorldGraph]) -> None:
    write_jsonl(path, "worlds", [world_record(w) for w in worlds])


def read_worlds(path: PathLike) -> List[WorldGraph]:
    _, records = read_jsonl(path, "worlds")
    return [
        WorldGraph(
            id=record["world_id"],
            max_degree=record["max_degree"],
            nodes=[Node.model_validate(node) for node in record["nodes"]],
        )
        for record in records
    ]


def task_record(task: Task) -> Dict:
    return {
        "task_id": task.task_id,
        "world_id": task.world,
        "start": task.start,
        "goal": task.goal,
        "target_object": task.target_object,
        "target_room": task.target_room,
        "path_length": task.path_length,
        "split": task.split,
    }


def write_splits(path: PathLike, splits: DatasetSplits) -> None:
    records = [task_record(task) for _, tasks in splits.items() for task in tasks]
    header = {
        "held_out_objects": splits.held_out_objects,
        "held_out_worlds": splits.held_out_worlds,
        "held_out_start_rooms": splits.held_out_start_rooms,
    }
    write_jsonl(path, "splits", records, header)


def read_splits(path: PathLike, worlds: Sequence[WorldGraph]) -> DatasetSplits:
    header, records = read_jsonl(path, "splits")
    by_id = {w.id: w for w in worlds}
    tasks: Dict[str, List[Task]] = {name: [] for name in SPLIT_NAMES}
    for record in records:
        world = by_id.get(record["world_id"])
        if world is None:
            raise SplitError(f"Split file task {record['task_id']} names unknown world {record['world_id']}")
        if record["split"] not in tasks:
            raise SplitError(f"Split file task {record['task_id']} names unknown split {record['split']}")
        tasks[record["split"]].append(
            Task(
                task_id=record["task_id"],
                world=world.id,
                start=record["start"],
                goal=record["goal"],
                goal_desc=goal_description(world, record["goal"], record["target_object"]),
                target_object=record["target_object"],
                target_room=record["target_room"],
                path_length=record["path_length"],
                split=record["split"],
            )
        )
    return DatasetSplits(
        **tasks,
        held_out_objects=header.get("held_out_objects", []),
        held_out_worlds=header.get("held_out_worlds", []),
        held_out_start_rooms=header.get("held_out_start_rooms", {}),
    )


def worlds_by_id(worlds: Sequence[WorldGraph]) -> Dict[str, WorldGraph]:
    return {w.id: w for w in worlds}
