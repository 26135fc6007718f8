"""Action-spec DSL, backward chaining and active-constraint derivation.

The DSL is line oriented:

    goal "Safe from fire"
    action "Kill Cow" { pre: ["Has sword", "Is close to cow"]; post: "Has food" }

Actions may carry `impl: scripted|learned` (default scripted). Condition names
are matched after trimming and case folding; declaration order is preserved
everywhere and is semantically significant (goal priority, precondition order,
and the order of alternative actions under a fallback).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .bt import Action, Condition, Fallback, Node, Sequence, assign_ids


class CompileError(Exception):
    pass


class DslSyntaxError(CompileError):
    def __init__(self, line: int, expected: str):
        super().__init__(f"line {line}: expected {expected}")
        self.line = line
        self.expected = expected


class DuplicateAction(CompileError):
    def __init__(self, name: str):
        super().__init__(f"duplicate action {name!r}")
        self.name = name


class EmptyGoalList(CompileError):
    pass


class CyclicDependency(CompileError):
    def __init__(self, path: list[str]):
        super().__init__("cyclic action dependency: " + " -> ".join(path))
        self.path = path


class NotBackchained(CompileError):
    pass


def canon(name: str) -> str:
    return name.strip().casefold()


@dataclass
class ActionSpec:
    name: str
    preconditions: list[str]
    postcondition: str
    impl_kind: str = "scripted"


@dataclass
class SpecFile:
    goals: list[str]
    actions: list[ActionSpec]

    def action(self, name: str) -> ActionSpec:
        key = canon(name)
        for a in self.actions:
            if canon(a.name) == key:
                return a
        raise KeyError(name)

    @property
    def condition_names(self) -> list[str]:
        """All condition names mentioned anywhere, in first-seen order."""
        seen: dict[str, str] = {}
        for g in self.goals:
            seen.setdefault(canon(g), g)
        for a in self.actions:
            for p in a.preconditions:
                seen.setdefault(canon(p), p)
            seen.setdefault(canon(a.postcondition), a.postcondition)
        return list(seen.values())


def spec_to_dict(spec: SpecFile) -> dict:
    return {
        "goals": list(spec.goals),
        "actions": [
            {"name": a.name, "pre": list(a.preconditions),
             "post": a.postcondition, "impl": a.impl_kind}
            for a in spec.actions
        ],
    }


def spec_from_dict(d: dict) -> SpecFile:
    return SpecFile(
        goals=list(d["goals"]),
        actions=[ActionSpec(a["name"], list(a["pre"]), a["post"], a.get("impl", "scripted"))
                 for a in d["actions"]],
    )


_GOAL_RE = re.compile(r'^goal\s+"([^"]+)"\s*$')
_ACTION_OPEN_RE = re.compile(r'^action\s+"([^"]+)"\s*\{(.*)$')
_PRE_RE = re.compile(r'pre\s*:\s*\[([^\]]*)\]')
_POST_RE = re.compile(r'post\s*:\s*"([^"]+)"')
_IMPL_RE = re.compile(r'impl\s*:\s*(scripted|learned)')
_QUOTED_RE = re.compile(r'"([^"]+)"')


def parse_spec(text: str) -> SpecFile:
    goals: list[str] = []
    actions: list[ActionSpec] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        m = _GOAL_RE.match(line)
        if m:
            goals.append(m.group(1).strip())
            continue
        m = _ACTION_OPEN_RE.match(line)
        if m:
            name = m.group(1).strip()
            body = m.group(2)
            while "}" not in body:
                if i >= len(lines):
                    raise DslSyntaxError(lineno, "closing '}' for action block")
                body += " " + lines[i].strip()
                i += 1
            body = body[:body.index("}")]
            mpost = _POST_RE.search(body)
            if not mpost:
                raise DslSyntaxError(lineno, 'post: "<condition>"')
            mpre = _PRE_RE.search(body)
            if not mpre:
                raise DslSyntaxError(lineno, 'pre: ["<condition>", ...]')
            pres = [s.strip() for s in _QUOTED_RE.findall(mpre.group(1))]
            mimpl = _IMPL_RE.search(body)
            impl = mimpl.group(1) if mimpl else "scripted"
            if any(canon(a.name) == canon(name) for a in actions):
                raise DuplicateAction(name)
            actions.append(ActionSpec(name, pres, mpost.group(1).strip(), impl))
            continue
        raise DslSyntaxError(lineno, 'goal "<condition>" or action "<name>" { ... }')
    if not goals:
        raise EmptyGoalList("spec declares no goals")
    return SpecFile(goals, actions)


def backchain(goals: list[str], actions: list[ActionSpec],
              warnings: list[str] | None = None) -> Node:
    """Expand condition checks under Sequence parents into
    Fallback(guard, Seq(preconditions..., action), ...) subtrees, recursively,
    in file order. Guards (fallback children) are never re-expanded."""
    if not goals:
        raise EmptyGoalList("backchain requires at least one goal")
    achievers: dict[str, list[ActionSpec]] = {}
    for a in actions:
        achievers.setdefault(canon(a.postcondition), []).append(a)

    def expand(cond: str, ancestors: list[str]) -> Node:
        key = canon(cond)
        options = achievers.get(key)
        if not options:
            if warnings is not None and ancestors:
                warnings.append(f"no action achieves {cond!r}; left as a plain check")
            return Condition(cond)
        if key in (canon(c) for c in ancestors):
            raise CyclicDependency(ancestors + [cond])
        branches: list[Node] = [Condition(cond)]
        for a in options:
            children: list[Node] = [expand(p, ancestors + [cond]) for p in a.preconditions]
            children.append(Action(a.name, a.impl_kind))
            branches.append(Sequence(children))
        return Fallback(branches)

    root = Sequence([expand(g, []) for g in goals])
    return assign_ids(root)


def _success_requirement(node: Node) -> str:
    """The condition a left sibling must satisfy for the tick to pass it."""
    if isinstance(node, Condition):
        return node.condition_id
    if isinstance(node, Fallback) and node.children and isinstance(node.children[0], Condition):
        return node.children[0].condition_id
    raise NotBackchained(f"node {node.node_id} is not a condition or PPA subtree")


def derive_acc(tree: Node, specs: SpecFile | None = None) -> dict[str, list[str]]:
    """For each action leaf, the conditions above its immediate precondition
    sequence that must hold for the tick traversal to reach it."""
    table: dict[str, list[str]] = {}

    def walk(node: Node, above: list[str]):
        if isinstance(node, (Condition, Action)):
            return
        if isinstance(node, Sequence):
            for i, child in enumerate(node.children):
                if isinstance(child, Action):
                    if child.action_id in table:
                        raise NotBackchained(f"action {child.action_id!r} appears twice")
                    acc: list[str] = []
                    for c in above:
                        if canon(c) not in (canon(x) for x in acc):
                            acc.append(c)
                    table[child.action_id] = acc
                else:
                    reqs = [_success_requirement(node.children[j]) for j in range(i)]
                    walk(child, above + reqs)
        else:  # Fallback: left siblings must fail, contributing no requirements
            for child in node.children:
                walk(child, above)

    walk(tree, [])
    return table


def export_dot(tree: Node, acc_table: dict[str, list[str]] | None = None,
               highlight: str | None = None) -> str:
    """Deterministic Graphviz rendering; when `highlight` names an action, its
    constraint conditions are drawn with a double border."""
    assign_ids(tree)
    marked: set[str] = set()
    if highlight and acc_table:
        marked = {canon(c) for c in acc_table.get(highlight, [])}
    lines = ["digraph bt {", "  node [fontname=\"Helvetica\"];"]
    for node in tree.iter_preorder():
        nid = node.node_id
        if isinstance(node, Condition):
            attrs = f'label="{node.condition_id}", shape=ellipse'
            if canon(node.condition_id) in marked:
                attrs += ", peripheries=2, color=darkgreen"
        elif isinstance(node, Action):
            attrs = f'label="{node.action_id}", shape=box'
            if highlight and canon(node.action_id) == canon(highlight):
                attrs += ", peripheries=2, color=goldenrod"
        elif isinstance(node, Sequence):
            attrs = 'label="&#8594;", shape=square'
        else:
            attrs = 'label="?", shape=square'
        lines.append(f"  {nid} [{attrs}];")
    for node in tree.iter_preorder():
        for child in node.children:
            lines.append(f"  {node.node_id} -> {child.node_id};")
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass
class CompileResult:
    spec: SpecFile
    tree: Node
    acc: dict[str, list[str]]
    warnings: list[str] = field(default_factory=list)


def compile_spec(text: str) -> CompileResult:
    spec = parse_spec(text)
    warnings: list[str] = []
    tree = backchain(spec.goals, spec.actions, warnings)
    acc = derive_acc(tree, spec)
    return CompileResult(spec, tree, acc, warnings)
