"""Behavior tree representation and tick engine.

Trees are memoryless: a tick is a pure function of (tree, state, bindings).
Composites are Sequence (advance past a child only on Success) and Fallback
(advance past a child only on Failure). Condition leaves are binary; action
leaves report Success when their postcondition holds, Failure when their
preconditions are broken while the postcondition is false, Running otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional


class Status(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


class BTError(Exception):
    pass


class UnresolvedId(BTError):
    def __init__(self, leaf_id: str):
        super().__init__(f"no binding for leaf id {leaf_id!r}")
        self.leaf_id = leaf_id


class EmptyTree(BTError):
    pass


class EnvironmentFault(BTError):
    pass


class Node:
    """Base node. Subclasses: Sequence, Fallback, Condition, Action."""

    kind = "node"

    def __init__(self):
        self.node_id: Optional[str] = None
        self.children: list[Node] = []

    def iter_preorder(self) -> Iterable["Node"]:
        yield self
        for child in self.children:
            yield from child.iter_preorder()


class Sequence(Node):
    kind = "sequence"

    def __init__(self, children: list[Node]):
        super().__init__()
        if not children:
            raise EmptyTree("Sequence requires at least one child")
        self.children = list(children)


class Fallback(Node):
    kind = "fallback"

    def __init__(self, children: list[Node]):
        super().__init__()
        if not children:
            raise EmptyTree("Fallback requires at least one child")
        self.children = list(children)


class Condition(Node):
    kind = "condition"

    def __init__(self, condition_id: str):
        super().__init__()
        self.condition_id = condition_id


class Action(Node):
    kind = "action"

    def __init__(self, action_id: str, impl_kind: str = "scripted"):
        super().__init__()
        self.action_id = action_id
        self.impl_kind = impl_kind


def assign_ids(root: Node) -> Node:
    """Number nodes in preorder so ids are stable for equal structures."""
    for i, node in enumerate(root.iter_preorder()):
        node.node_id = f"n{i:03d}"
    return root


@dataclass
class ActionBinding:
    """Controller plus status function for one action leaf."""

    policy: Callable[[object], object]
    status: Callable[[object], Status]


@dataclass
class Bindings:
    conditions: dict[str, Callable[[object], bool]] = field(default_factory=dict)
    actions: dict[str, ActionBinding] = field(default_factory=dict)


@dataclass
class TickResult:
    status: Status
    executing_action: Optional[str]
    visited_path: list[str]


def tick(tree: Node, state, bindings: Bindings) -> TickResult:
    """Evaluate the tree on `state`, returning status, the selected action
    (when the tick terminates at a Running action leaf) and the decision path."""
    if tree.node_id is None:
        assign_ids(tree)
    status, executing, path = _tick(tree, state, bindings)
    return TickResult(status, executing, path)


def _tick(node: Node, state, b: Bindings):
    if isinstance(node, Condition):
        try:
            pred = b.conditions[node.condition_id]
        except KeyError:
            raise UnresolvedId(node.condition_id) from None
        status = Status.SUCCESS if pred(state) else Status.FAILURE
        return status, None, [node.node_id]
    if isinstance(node, Action):
        try:
            binding = b.actions[node.action_id]
        except KeyError:
            raise UnresolvedId(node.action_id) from None
        status = binding.status(state)
        executing = node.action_id if status is Status.RUNNING else None
        return status, executing, [node.node_id]
    if not node.children:
        raise EmptyTree(f"composite {node.node_id} has no children")
    skip = Status.SUCCESS if isinstance(node, Sequence) else Status.FAILURE
    result = None
    for child in node.children:
        result = _tick(child, state, b)
        if result[0] is not skip:
            break
    status, executing, sub = result
    return status, executing, [node.node_id] + sub


def regions(tree: Node, states, bindings: Bindings) -> dict[Status, list]:
    """Partition an enumerable state set by tick status."""
    out: dict[Status, list] = {Status.RUNNING: [], Status.SUCCESS: [], Status.FAILURE: []}
    for state in states:
        out[tick(tree, state, bindings).status].append(state)
    return out


class TerminalReason(Enum):
    ALREADY_SUCCEEDED = "already_succeeded"
    ROOT_SUCCESS = "root_success"
    ROOT_FAILURE = "root_failure"
    DEATH = "death"
    STEP_LIMIT = "step_limit"


@dataclass
class MissionStep:
    t: int
    state_digest: str
    executing_action: str
    root_status: Status
    conditions: dict[str, bool]


@dataclass
class MissionTrace:
    steps: list[MissionStep]
    reason: TerminalReason
    final_conditions: dict[str, bool]
    final_state: object

    def to_jsonl(self) -> str:
        lines = []
        for s in self.steps:
            lines.append(json.dumps({
                "t": s.t,
                "state": s.state_digest,
                "executing": s.executing_action,
                "status": s.root_status.value,
                "conditions": s.conditions,
            }, sort_keys=True))
        lines.append(json.dumps({"reason": self.reason.value,
                                 "conditions": self.final_conditions}, sort_keys=True))
        return "\n".join(lines) + "\n"


def step_mission(tree: Node, env, bindings: Bindings, max_steps: int) -> MissionTrace:
    """Run the root controller on a mutable environment until the root leaves
    its Running region, the agent dies, or the step budget runs out.

    `env` exposes: state, alive(), digest(), apply(primitive)."""
    steps: list[MissionStep] = []
    cond_names = sorted(bindings.conditions)

    def truth(state):
        return {c: bool(bindings.conditions[c](state)) for c in cond_names}

    first = tick(tree, env.state, bindings)
    if first.status is Status.SUCCESS:
        return MissionTrace([], TerminalReason.ALREADY_SUCCEEDED, truth(env.state), env.state)
    if first.status is Status.FAILURE:
        return MissionTrace([], TerminalReason.ROOT_FAILURE, truth(env.state), env.state)

    result = first
    while True:
        if result.executing_action is None:
            raise EnvironmentFault("root Running without a selected action leaf")
        action_id = result.executing_action
        binding = bindings.actions[action_id]
        primitive = binding.policy(env.state)
        steps.append(MissionStep(env.state.t, env.digest(), action_id,
                                 result.status, truth(env.state)))
        try:
            env.apply(primitive)
        except Exception as exc:  # invalid primitive signals a policy bug
            raise EnvironmentFault(str(exc)) from exc
        if not env.alive():
            return MissionTrace(steps, TerminalReason.DEATH, truth(env.state), env.state)
        if len(steps) >= max_steps:
            return MissionTrace(steps, TerminalReason.STEP_LIMIT, truth(env.state), env.state)
        result = tick(tree, env.state, bindings)
        if result.status is Status.SUCCESS:
            return MissionTrace(steps, TerminalReason.ROOT_SUCCESS, truth(env.state), env.state)
        if result.status is Status.FAILURE:
            return MissionTrace(steps, TerminalReason.ROOT_FAILURE, truth(env.state), env.state)


# --- serialization ---------------------------------------------------------

def node_to_dict(node: Node) -> dict:
    if isinstance(node, Condition):
        return {"kind": "condition", "id": node.node_id, "condition": node.condition_id}
    if isinstance(node, Action):
        return {"kind": "action", "id": node.node_id, "action": node.action_id,
                "impl": node.impl_kind}
    return {"kind": node.kind, "id": node.node_id,
            "children": [node_to_dict(c) for c in node.children]}


def tree_to_json(root: Node) -> str:
    assign_ids(root)
    return json.dumps(node_to_dict(root), indent=2, sort_keys=True)


def node_from_dict(d: dict) -> Node:
    kind = d["kind"]
    if kind == "condition":
        node = Condition(d["condition"])
    elif kind == "action":
        node = Action(d["action"], d.get("impl", "scripted"))
    elif kind == "sequence":
        node = Sequence([node_from_dict(c) for c in d["children"]])
    elif kind == "fallback":
        node = Fallback([node_from_dict(c) for c in d["children"]])
    else:
        raise ValueError(f"unknown node kind {kind!r}")
    return node


def tree_from_json(text: str) -> Node:
    return assign_ids(node_from_dict(json.loads(text)))
