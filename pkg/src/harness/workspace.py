import logging
from pathlib import Path
from typing import Dict, List, Union

from src.backend.classes import DatasetSplits, WorldGraph
from src.backend.datasets import read_splits, read_worlds, worlds_by_id
from src.backend.errors import CheckpointError, SplitError, WorldGenerationError
from src.backend.world import FrequencyTable
from src.clients.execution import ExecutionPolicy

logger = logging.getLogger("intention_nav")


class Workspace:
    """Files of one run under an output root."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @property
    def worlds(self) -> Path:
        return self.root / "worlds.jsonl"

    @property
    def splits(self) -> Path:
        return self.root / "splits.jsonl"

    @property
    def frequencies(self) -> Path:
        return self.root / "frequencies.txt"

    @property
    def exec_policy(self) -> Path:
        return self.root / "exec_policy.npz"

    @property
    def config(self) -> Path:
        return self.root / "config.yaml"

    def actor(self, tag: str = "") -> Path:
        return self.root / f"actor{'_' + tag if tag else ''}.npz"

    def critic(self, tag: str = "") -> Path:
        return self.root / f"critic{'_' + tag if tag else ''}.npz"

    def metrics(self, name: str) -> Path:
        return self.root / f"{name}_metrics.jsonl"

    def csv(self, name: str) -> Path:
        return self.root / f"{name}.csv"

    def traces(self, policy: str, condition: str) -> Path:
        return self.root / "traces" / policy / condition

    def load_worlds(self) -> List[WorldGraph]:
        if not self.worlds.exists():
            raise WorldGenerationError(f"Worlds not loaded, {self.worlds} is missing (run gen-world first)")
        return read_worlds(self.worlds)

    def load_world_map(self) -> Dict[str, WorldGraph]:
        return worlds_by_id(self.load_worlds())

    def load_splits(self, worlds: List[WorldGraph]) -> DatasetSplits:
        if not self.splits.exists():
            raise SplitError(f"Splits not loaded, {self.splits} is missing (run make-splits first)")
        return read_splits(self.splits, worlds)

    def load_frequencies(self) -> FrequencyTable:
        return FrequencyTable.read(self.frequencies)

    def load_exec_policy(self) -> ExecutionPolicy:
        if not self.exec_policy.exists():
            raise CheckpointError(f"Execution policy not loaded, {self.exec_policy} is missing (run pretrain first)")
        policy, manifest, _ = ExecutionPolicy.load(self.exec_policy)
        logger.debug(f"Loaded execution policy trained for {manifest.get('iteration', '?')} iterations")
        return policy
