"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from scratch against the documented
semantics, without importing the production tick, so agreement between the two
is meaningful.
"""

from __future__ import annotations

import random
from collections import deque

from chainbt.bt import Action, Condition, Fallback, Node, Sequence, Status

SUCCESS = "success"
FAILURE = "failure"
RUNNING = "running"


def oracle_tick(node, cond_values, action_status):
    """Reference tick. `cond_values` maps condition id -> bool, `action_status`
    maps action id -> one of the status strings. Returns (status, executing)."""
    if isinstance(node, Condition):
        return (SUCCESS if cond_values[node.condition_id] else FAILURE), None
    if isinstance(node, Action):
        s = action_status[node.action_id]
        return s, (node.action_id if s == RUNNING else None)
    if isinstance(node, Sequence):
        for child in node.children:
            s, ex = oracle_tick(child, cond_values, action_status)
            if s != SUCCESS:
                return s, ex
        return SUCCESS, None
    if isinstance(node, Fallback):
        for child in node.children:
            s, ex = oracle_tick(child, cond_values, action_status)
            if s != FAILURE:
                return s, ex
        return FAILURE, None
    raise TypeError(node)


def random_tree(rng: random.Random, max_depth=4, max_children=3, n_conditions=8,
                n_actions=4) -> Node:
    """Random tree over condition ids c0..c{n-1} and action ids a0..a{n-1}."""

    def build(depth):
        if depth >= max_depth or rng.random() < 0.35:
            if rng.random() < 0.7:
                return Condition(f"c{rng.randrange(n_conditions)}")
            return Action(f"a{rng.randrange(n_actions)}")
        cls = Sequence if rng.random() < 0.5 else Fallback
        n = rng.randint(1, max_children)
        return cls([build(depth + 1) for _ in range(n)])

    root = build(0)
    if not root.children:  # keep the root a composite so ticks are non-trivial
        root = Sequence([root])
    return root


def grid_bfs(start, goals, width, height, blocked):
    """Shortest path length on a 4-connected grid, or None if unreachable."""
    goals = set(goals)
    if start in goals:
        return 0
    seen = {start}
    q = deque([(start, 0)])
    while q:
        (x, y), d = q.popleft()
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if not (0 <= nx < width and 0 <= ny < height):
                continue
            if (nx, ny) in seen or (nx, ny) in blocked:
                continue
            if (nx, ny) in goals:
                return d + 1
            seen.add((nx, ny))
            q.append(((nx, ny), d + 1))
    return None
