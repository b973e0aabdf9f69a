from collections import deque
from typing import Dict


def bfs_distances(world, source: int) -> Dict[int, int]:
    """Hop counts from `source`, computed from the raw neighbor lists."""
    seen = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in world.nodes[u].neighbors:
            if v not in seen:
                seen[v] = seen[u] + 1
                queue.append(v)
    return seen
