import logging
import math
import random
from collections import deque
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, PrivateAttr

from src.config import WorldGenConfig

from .classes import (
    Constants,
    Description,
    DescriptionOrigin,
    DescriptionRole,
    ExecAction,
    FeatureKind,
    FeatureSet,
    Node,
    PlacedObject,
    WorldGraph,
)
from .errors import FrequencyTableError, IllegalMoveError, NoPathError, NodeNotFoundError, WorldGenerationError

logger = logging.getLogger("intention_nav")

Vector = Tuple[float, float, float]


def discretize(horz_rad: float, vert_rad: float, dist_m: float) -> Tuple[int, int, int]:
    if dist_m < 0:
        raise ValueError(f"Distance must be non-negative, got {dist_m}")
    step = Constants.angle_step
    horz = int(math.floor((horz_rad % (2 * math.pi)) / step)) % Constants.horz_buckets
    vert = min(max(int(math.floor(vert_rad / step + 0.5)), -1), 1) + 1
    dist = min(int(math.floor(dist_m)), Constants.dist_buckets - 1)
    return horz, vert, dist


def relative_geometry(origin: Vector, target: Vector) -> Tuple[float, float, float]:
    """Heading, elevation and 3D distance of `target` seen from `origin`."""
    dx, dy, dz = (t - o for t, o in zip(target, origin))
    planar = math.hypot(dx, dy)
    heading = math.atan2(dy, dx) if planar > 0 else 0.0
    elevation = math.atan2(dz, planar) if (planar > 0 or dz != 0) else 0.0
    return heading, elevation, math.sqrt(planar * planar + dz * dz)


def _zipf_weights(count: int, exponent: float) -> List[float]:
    return [1.0 / (rank + 1) ** exponent for rank in range(count)]


def generate_house(seed: int, cfg: Optional[WorldGenConfig] = None, world_id: Optional[str] = None) -> WorldGraph:
    cfg = cfg or WorldGenConfig()
    if cfg.num_nodes < 2:
        raise WorldGenerationError(f"World not generated, {cfg.num_nodes} nodes cannot form a connected house")
    if not cfg.room_names or not cfg.object_names:
        raise WorldGenerationError("World not generated, room and object catalogs must be non-empty")
    if cfg.min_objects_per_node > cfg.max_objects_per_node:
        raise WorldGenerationError(
            f"World not generated, min objects {cfg.min_objects_per_node} > max objects {cfg.max_objects_per_node}"
        )

    rng = random.Random(seed)
    n = cfg.num_nodes
    num_rooms = max(1, math.ceil(n / cfg.nodes_per_room))
    columns = math.ceil(math.sqrt(num_rooms))
    jitter = 0.15 * cfg.room_size

    labels = rng.sample(cfg.room_names, min(num_rooms, len(cfg.room_names)))
    while len(labels) < num_rooms:
        labels.append(rng.choice(cfg.room_names))

    centers = []
    for r in range(num_rooms):
        row, col = divmod(r, columns)
        centers.append(
            (col * cfg.room_size + rng.uniform(-jitter, jitter), row * cfg.room_size + rng.uniform(-jitter, jitter))
        )

    half = 0.4 * cfg.room_size
    room_of = [i % num_rooms for i in range(n)]
    positions: List[Vector] = []
    for i in range(n):
        cx, cy = centers[room_of[i]]
        positions.append((round(cx + rng.uniform(-half, half), 4), round(cy + rng.uniform(-half, half), 4), 0.0))

    def planar(u: int, v: int) -> float:
        return math.hypot(positions[u][0] - positions[v][0], positions[u][1] - positions[v][1])

    adjacency: List[set] = [set() for _ in range(n)]
    order = list(range(n))
    rng.shuffle(order)
    placed = [order[0]]
    for u in order[1:]:
        candidates = [v for v in placed if len(adjacency[v]) < cfg.max_degree]
        if not candidates:
            raise WorldGenerationError(f"World not generated, no node with free degree left for node {u}")
        v = min(candidates, key=lambda c: (planar(u, c), c))
        adjacency[u].add(v)
        adjacency[v].add(u)
        placed.append(u)

    close_pairs = sorted(
        (planar(u, v), u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if v not in adjacency[u] and planar(u, v) < cfg.extra_edge_radius
    )
    for _, u, v in close_pairs:
        if rng.random() < cfg.extra_edge_prob and len(adjacency[u]) < cfg.max_degree and len(adjacency[v]) < cfg.max_degree:
            adjacency[u].add(v)
            adjacency[v].add(u)

    names = list(cfg.object_names)
    weights = _zipf_weights(len(names), cfg.zipf_exponent)
    affine: Dict[int, Tuple[List[str], List[float]]] = {}
    for r, label in enumerate(labels):
        label_index = cfg.room_names.index(label)
        picked = [k for k in range(len(names)) if k % len(cfg.room_names) == label_index]
        affine[r] = ([names[k] for k in picked], [weights[k] for k in picked])

    nodes = []
    next_object = 0
    for i in range(n):
        objects = []
        for _ in range(rng.randint(cfg.min_objects_per_node, cfg.max_objects_per_node)):
            pool, pool_weights = affine[room_of[i]]
            if pool and rng.random() < cfg.room_affinity:
                name = rng.choices(pool, weights=pool_weights)[0]
            else:
                name = rng.choices(names, weights=weights)[0]
            objects.append(
                PlacedObject(
                    id=next_object,
                    name=name,
                    dx=round(rng.uniform(-cfg.object_spread, cfg.object_spread), 4),
                    dy=round(rng.uniform(-cfg.object_spread, cfg.object_spread), 4),
                    dz=round(rng.uniform(-1.0, 1.5), 4),
                )
            )
            next_object += 1
        nodes.append(
            Node(id=i, room=labels[room_of[i]], pos=positions[i], objects=objects, neighbors=sorted(adjacency[i]))
        )

    world = WorldGraph(id=world_id or f"house{seed}", nodes=nodes, max_degree=cfg.max_degree)
    validate_world(world)
    logger.debug(f"Generated world {world.id}: {n} nodes, {len(world.edges())} edges, {next_object} objects")
    return world


def validate_world(g: WorldGraph, room_catalog: Optional[Sequence[str]] = None) -> None:
    """Checks the invariants pydantic cannot see on a single node: connectivity, degree >= 1, room catalog."""
    if g.num_nodes < 2:
        raise WorldGenerationError(f"World {g.id} has {g.num_nodes} nodes")
    for node in g.nodes:
        if not node.neighbors:
            raise WorldGenerationError(f"World {g.id} node {node.id} has no neighbor")
        if room_catalog is not None and node.room not in room_catalog:
            raise WorldGenerationError(f"World {g.id} node {node.id} has unknown room {node.room}")
    if (distances(g)[0] < 0).any():
        raise WorldGenerationError(f"World {g.id} is not connected")


def _bfs(g: WorldGraph, source: int) -> np.ndarray:
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.nodes[u].neighbors:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def distances(g: WorldGraph) -> np.ndarray:
    """All-pairs hop distances, -1 where unreachable. Cached on the world."""
    if "dist" not in g._cache:
        g._cache["dist"] = np.stack([_bfs(g, u) for u in range(g.num_nodes)])
    return g._cache["dist"]


def distance(g: WorldGraph, u: int, v: int) -> int:
    g.node(u), g.node(v)
    d = int(distances(g)[u, v])
    if d < 0:
        raise NoPathError(f"Path not found, node {v} is unreachable from node {u} in world {g.id}")
    return d


def shortest_path(g: WorldGraph, frm: int, to: int) -> List[int]:
    """Shortest path, ties broken towards the lexicographically smallest node sequence."""
    remaining = distance(g, frm, to)
    to_goal = distances(g)[to]
    path = [frm]
    current = frm
    while remaining > 0:
        current = min(v for v in g.nodes[current].neighbors if to_goal[v] == remaining - 1)
        path.append(current)
        remaining -= 1
    return path


def task_error(g: WorldGraph, s: int, goal: int) -> float:
    return float(distance(g, s, goal))


def legal_actions(g: WorldGraph, s: int) -> List[ExecAction]:
    return [ExecAction.move(v) for v in sorted(g.neighbors(s))] + [ExecAction.done()]


def exec_step(g: WorldGraph, s: int, a: ExecAction) -> int:
    g.node(s)
    if a.is_done:
        return s
    if a.target not in g.nodes[s].neighbors:
        raise IllegalMoveError(f"Move not executed, node {a.target} is not adjacent to node {s}")
    return a.target


def action_feature(g: WorldGraph, s: int, a: ExecAction) -> FeatureSet:
    if a.is_done:
        return FeatureSet(name=Constants.action_stop, kind=FeatureKind.ACTION)
    if a.target not in g.neighbors(s):
        raise IllegalMoveError(f"Action feature not built, node {a.target} is not adjacent to node {s}")
    horz, vert, dist = discretize(*relative_geometry(g.nodes[s].pos, g.nodes[a.target].pos))
    return FeatureSet(name=Constants.action_go, horz=horz, vert=vert, dist=dist, kind=FeatureKind.ACTION)


def action_description(
    g: WorldGraph, s: int, a: ExecAction, origin: DescriptionOrigin = DescriptionOrigin.ASSISTANT_ACTION
) -> Description:
    return Description(features=(action_feature(g, s, a),), origin=origin)


def object_position(g: WorldGraph, node: Node, obj: PlacedObject) -> Vector:
    x, y, z = node.pos
    return (x + obj.dx, y + obj.dy, z + obj.dz)


def _radius(role: DescriptionRole) -> float:
    return Constants.state_radius if role == DescriptionRole.CURRENT_STATE else Constants.goal_radius


def objects_within(g: WorldGraph, at: int, radius: float) -> List[Tuple[float, PlacedObject, Tuple[int, int, int]]]:
    """(distance, object, buckets) for every object of the world within `radius` of `at`, nearest first."""
    origin = g.node(at).pos
    found = []
    for node in g.nodes:
        for obj in node.objects:
            heading, elevation, dist = relative_geometry(origin, object_position(g, node, obj))
            if dist <= radius:
                found.append((dist, obj, discretize(heading, elevation, dist)))
    found.sort(key=lambda item: (item[0], item[1].id))
    return found


def dense_description(
    g: WorldGraph,
    at: int,
    role: DescriptionRole = DescriptionRole.CURRENT_STATE,
    origin: DescriptionOrigin = DescriptionOrigin.PERCEIVED,
) -> Description:
    key = ("dense", at, role)
    if key not in g._cache:
        features = [FeatureSet(name=g.room_of(at), kind=FeatureKind.ROOM)]
        for _, obj, (horz, vert, dist) in objects_within(g, at, _radius(role))[: Constants.max_objects]:
            features.append(FeatureSet(name=obj.name, horz=horz, vert=vert, dist=dist))
        g._cache[key] = Description(features=tuple(features))
    described = g._cache[key]
    return described if described.origin == origin else described.model_copy(update={"origin": origin})


class FrequencyTable(BaseModel):
    """Object-name counts over a world collection."""

    counts: Dict[str, int] = {}

    _top: Dict[int, frozenset] = PrivateAttr(default_factory=dict)

    @classmethod
    def from_worlds(cls, worlds: Iterable[WorldGraph]) -> "FrequencyTable":
        counts: Dict[str, int] = {}
        for world in worlds:
            for node in world.nodes:
                for obj in node.objects:
                    counts[obj.name] = counts.get(obj.name, 0) + 1
        return cls(counts=counts)

    def ranked(self) -> List[Tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda item: (-item[1], item[0]))

    def top(self, k: int) -> List[str]:
        return [name for name, _ in self.ranked()[:k]]

    def top_set(self, k: int) -> frozenset:
        if k not in self._top:
            self._top[k] = frozenset(self.top(k))
        return self._top[k]

    def write(self, path: Union[str, Path]) -> None:
        with open(path, "w") as file:
            for name, count in self.ranked():
                file.write(f"{name} {count}\n")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "FrequencyTable":
        if not Path(path).exists():
            raise FrequencyTableError(f"Frequency table not read, {path} does not exist")
        counts = {}
        with open(path, "r") as file:
            for number, line in enumerate(file, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                name, _, count = line.rpartition(" ")
                if not name or not count.isdigit():
                    raise FrequencyTableError(f"Frequency table not read, malformed line {number}: {line!r}")
                counts[name] = int(count)
        return cls(counts=counts)


def sparsify(
    d: Description, role: DescriptionRole, top_k: int = Constants.top_k, freq: Optional[FrequencyTable] = None
) -> Description:
    if freq is None:
        raise FrequencyTableError("Description not sparsified, no frequency table loaded")
    frequent = freq.top_set(top_k)
    kept = []
    for feature in d.features:
        if feature.kind == FeatureKind.ROOM and role == DescriptionRole.CURRENT_STATE:
            continue
        if feature.kind == FeatureKind.OBJECT and feature.name not in frequent:
            continue
        kept.append(feature)
    return Description(features=tuple(kept), origin=d.origin)


def perceive(
    g: WorldGraph,
    at: int,
    role: DescriptionRole,
    mode: str,
    freq: Optional[FrequencyTable],
    top_k: int = Constants.top_k,
    origin: DescriptionOrigin = DescriptionOrigin.PERCEIVED,
) -> Description:
    """Description of `at` in the given perception mode ("dense" or "sparse")."""
    dense = dense_description(g, at, role, origin)
    if mode == "dense":
        return dense
    return sparsify(dense, role, top_k, freq)


def check_node(g: WorldGraph, u: int) -> int:
    if not g.has_node(u):
        raise NodeNotFoundError(f"Node {u} is not in world {g.id}")
    return int(u)
