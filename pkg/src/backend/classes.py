import math
from numbers import Integral
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from .errors import NodeNotFoundError, StackError


class Constants:
    horz_buckets = 12
    vert_buckets = 3
    dist_buckets = 5
    angle_step = math.pi / 6
    # buckets of a zero vector, used by Room and ActionStop feature sets
    zero_buckets: Tuple[int, int, int] = (0, 1, 0)
    max_objects = 20
    state_radius = 5.0  # meters, current-state descriptions
    goal_radius = 3.0  # meters, goal descriptions
    max_degree = 5
    top_k = 30
    l_max = 3
    stack_size = 2
    max_stack_size = 3
    subgoal_budget_factor = 3
    action_cost = 0.01
    horizon = 30
    exec_horizon = 15
    action_stop = "ActionStop"
    action_go = "ActionGo"
    action_names: Tuple[str, str] = ("ActionStop", "ActionGo")
    room_names: List[str] = [
        "kitchen",
        "living room",
        "bedroom",
        "bathroom",
        "dining room",
        "office",
        "hallway",
        "laundry room",
        "garage",
        "closet",
        "porch",
        "family room",
    ]
    object_names: List[str] = [f"object{i:03d}" for i in range(200)]
    schema_version = 1


class FeatureKind(str, Enum):
    OBJECT = "Object"
    ROOM = "Room"
    ACTION = "Action"

    @property
    def position(self) -> int:
        return list(FeatureKind).index(self)


class DescriptionOrigin(str, Enum):
    PERCEIVED = "Perceived"
    ASSISTANT_STATE = "AssistantState"
    ASSISTANT_GOAL = "AssistantGoal"
    ASSISTANT_ACTION = "AssistantAction"
    TASK_REQUEST = "TaskRequest"


class DescriptionRole(str, Enum):
    CURRENT_STATE = "CurrentState"
    GOAL = "Goal"


class IntentKind(str, Enum):
    CUR = "CUR"
    GOAL = "GOAL"
    SUB = "SUB"
    DO = "DO"
    DONE = "DONE"

    @property
    def position(self) -> int:
        return list(IntentKind).index(self)


INTENT_KINDS: List[IntentKind] = list(IntentKind)
REQUEST_KINDS: Tuple[IntentKind, ...] = (IntentKind.CUR, IntentKind.GOAL, IntentKind.SUB)


class ReplyKind(str, Enum):
    STATE_DESC = "StateDesc"
    GOAL_DESC = "GoalDesc"
    SUBGOAL_DESC = "SubgoalDesc"


class FeatureSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    horz: int = Field(0, ge=0, lt=Constants.horz_buckets)
    vert: int = Field(1, ge=0, lt=Constants.vert_buckets)
    dist: int = Field(0, ge=0, lt=Constants.dist_buckets)
    kind: FeatureKind = FeatureKind.OBJECT

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == FeatureKind.ROOM and self.buckets != Constants.zero_buckets:
            raise ValueError(f"Room feature set {self.name} must use the zero buckets")
        if self.kind == FeatureKind.ACTION and self.name not in Constants.action_names:
            raise ValueError(f"Action feature set cannot be named {self.name}")
        return self

    @property
    def buckets(self) -> Tuple[int, int, int]:
        return (self.horz, self.vert, self.dist)


class Description(BaseModel):
    """Bag of feature sets; the order of `features` carries no meaning."""

    model_config = ConfigDict(frozen=True)

    features: Tuple[FeatureSet, ...] = ()
    origin: DescriptionOrigin = DescriptionOrigin.PERCEIVED

    @model_validator(mode="after")
    def check_features(self):
        if len(self.features) > Constants.max_objects + 1:
            raise ValueError(
                f"Description has {len(self.features)} feature sets, at most {Constants.max_objects + 1} allowed"
            )
        rooms = self.of_kind(FeatureKind.ROOM)
        actions = self.of_kind(FeatureKind.ACTION)
        if len(rooms) > 1:
            raise ValueError("Description holds more than one Room feature set")
        if len(actions) > 1:
            raise ValueError("Description holds more than one Action feature set")
        if actions and self.of_kind(FeatureKind.OBJECT):
            raise ValueError("Action and Object feature sets cannot share a description")
        return self

    @property
    def size(self) -> int:
        return len(self.features)

    def of_kind(self, kind: FeatureKind) -> List[FeatureSet]:
        return [f for f in self.features if f.kind == kind]

    def room(self) -> Optional[FeatureSet]:
        rooms = self.of_kind(FeatureKind.ROOM)
        return rooms[0] if rooms else None

    def action(self) -> Optional[FeatureSet]:
        actions = self.of_kind(FeatureKind.ACTION)
        return actions[0] if actions else None

    def object_names(self) -> List[str]:
        return [f.name for f in self.of_kind(FeatureKind.OBJECT)]


class PlacedObject(BaseModel):
    id: int
    name: str
    dx: float
    dy: float
    dz: float


class Node(BaseModel):
    id: int
    room: str
    pos: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    objects: List[PlacedObject] = []
    neighbors: List[int] = []


class WorldGraph(BaseModel):
    """A house: an undirected graph of located nodes with rooms and objects."""

    id: str
    nodes: List[Node]
    max_degree: int = Constants.max_degree

    # distance matrix and description caches, filled lazily by world.py
    _cache: Dict = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_structure(self):
        for index, node in enumerate(self.nodes):
            if node.id != index:
                raise ValueError(f"Node at position {index} has id {node.id}")
        for node in self.nodes:
            if len(set(node.neighbors)) != len(node.neighbors):
                raise ValueError(f"Node {node.id} lists a neighbor twice")
            if len(node.neighbors) > self.max_degree:
                raise ValueError(f"Node {node.id} has degree {len(node.neighbors)} > {self.max_degree}")
            for other in node.neighbors:
                if other == node.id:
                    raise ValueError(f"Node {node.id} has a self-loop")
                if not 0 <= other < len(self.nodes):
                    raise ValueError(f"Node {node.id} points at unknown node {other}")
                if node.id not in self.nodes[other].neighbors:
                    raise ValueError(f"Edge {node.id}-{other} is not symmetric")
        return self

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node(self, u: int) -> Node:
        if not isinstance(u, Integral) or not 0 <= u < len(self.nodes):
            raise NodeNotFoundError(f"Node {u} is not in world {self.id}")
        return self.nodes[u]

    def has_node(self, u: int) -> bool:
        return isinstance(u, Integral) and 0 <= u < len(self.nodes)

    def neighbors(self, u: int) -> List[int]:
        return self.node(u).neighbors

    def room_of(self, u: int) -> str:
        return self.node(u).room

    def objects_at(self, u: int) -> List[PlacedObject]:
        return self.node(u).objects

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((n.id, m) for n in self.nodes for m in n.neighbors if n.id < m)

    def rooms(self) -> List[str]:
        return sorted({n.room for n in self.nodes})


class ExecAction(BaseModel):
    """A move to `target`, or `a_done` when target is None."""

    model_config = ConfigDict(frozen=True)

    target: Optional[int] = None

    @property
    def is_done(self) -> bool:
        return self.target is None

    @classmethod
    def done(cls) -> "ExecAction":
        return cls()

    @classmethod
    def move(cls, target: int) -> "ExecAction":
        return cls(target=target)


class Task(BaseModel):
    task_id: str = ""
    world: str
    start: int
    goal: int
    goal_desc: Description
    target_object: str
    target_room: str
    path_length: int = 0
    split: str = ""


SPLIT_NAMES: Tuple[str, ...] = (
    "pretrain",
    "pretrain_val",
    "train",
    "val_unseen_str",
    "val_unseen_obj",
    "val_unseen_env",
    "test_unseen_str",
    "test_unseen_obj",
    "test_unseen_env",
)


class DatasetSplits(BaseModel):
    pretrain: List[Task] = []
    pretrain_val: List[Task] = []
    train: List[Task] = []
    val_unseen_str: List[Task] = []
    val_unseen_obj: List[Task] = []
    val_unseen_env: List[Task] = []
    test_unseen_str: List[Task] = []
    test_unseen_obj: List[Task] = []
    test_unseen_env: List[Task] = []
    held_out_objects: List[str] = []
    held_out_worlds: List[str] = []
    held_out_start_rooms: Dict[str, str] = {}

    def tasks(self, name: str) -> List[Task]:
        if name not in SPLIT_NAMES:
            raise KeyError(f"Unknown split {name}")
        return getattr(self, name)

    def items(self):
        return [(name, getattr(self, name)) for name in SPLIT_NAMES]


class GoalEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    goal: int
    desc: Description
    # step budget of a subgoal; None on the main goal
    budget: Optional[int] = None
    initial_budget: Optional[int] = None


class GoalStack(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[GoalEntry, ...] = ()
    capacity: int = Field(Constants.stack_size, ge=1)

    @model_validator(mode="after")
    def check_capacity(self):
        if len(self.entries) > self.capacity:
            raise ValueError(f"Goal stack holds {len(self.entries)} entries, capacity is {self.capacity}")
        return self

    @property
    def depth(self) -> int:
        return len(self.entries)

    @property
    def is_full(self) -> bool:
        return len(self.entries) >= self.capacity

    def top(self) -> GoalEntry:
        if not self.entries:
            raise StackError("Goal stack is empty")
        return self.entries[-1]

    def main_goal(self) -> GoalEntry:
        if not self.entries:
            raise StackError("Goal stack is empty")
        return self.entries[0]

    def descriptions(self) -> Tuple[Description, ...]:
        return tuple(entry.desc for entry in self.entries)


class IntentionState(BaseModel):
    model_config = ConfigDict(frozen=True)

    world: str
    exec_node: int
    cur_desc: Description
    stack: GoalStack
    t: int = 1
    terminated: bool = False

    @property
    def goal(self) -> Optional[int]:
        return self.stack.top().goal if self.stack.entries else None


class IntentionObservation(BaseModel):
    """What the intention policy may see: descriptions only, never goal nodes."""

    model_config = ConfigDict(frozen=True)

    cur_desc: Description
    goal_descs: Tuple[Description, ...]
    t: int


class AssistantReply(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ReplyKind
    desc: Description
    subgoal: Optional[int] = None

    @model_validator(mode="after")
    def check_subgoal(self):
        if (self.kind == ReplyKind.SUBGOAL_DESC) != (self.subgoal is not None):
            raise ValueError("A subgoal is present exactly when the reply is a SubgoalDesc")
        return self


class StepOutcome(BaseModel):
    next_state: IntentionState
    raw_cost: float
    shaped_cost: float
    reply: Optional[AssistantReply] = None
    exec_action: Optional[ExecAction] = None
    answered: Optional[IntentKind] = None
    timed_out: bool = False


class StepRecord(BaseModel):
    t: int
    action: IntentKind
    # node after the step; stack depth before it
    exec_node: int
    stack_depth: int
    raw_cost: float
    shaped_cost: float
    reply_kind: Optional[ReplyKind] = None
    answered: Optional[IntentKind] = None
    forced: bool = False


class EpisodeTrace(BaseModel):
    task_id: str
    world_id: str
    seed: int = 0
    start: int
    goal: int
    steps: List[StepRecord] = []
    final_node: int
    success: bool = False
    total_raw: float = 0.0
    total_shaped: float = 0.0
    initial_potential: float = 0.0

    def action_counts(self) -> Dict[IntentKind, int]:
        counts = {kind: 0 for kind in INTENT_KINDS}
        for step in self.steps:
            counts[step.action] += 1
        return counts
