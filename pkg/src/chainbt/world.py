"""Discrete seedable gridworld with fire, a hostile, a cow, hunger and a sword.

All numeric constants live in EnvConfig and are implementation choices for
this simulator; they are not calibrated against any external game engine.
Distances are Chebyshev throughout. The y axis points south (MoveN is y-1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Optional

import numpy as np

from .bt import ActionBinding, Bindings, Node, Status
from .compiler import SpecFile, canon


class UnknownCondition(Exception):
    pass


class UnknownAction(Exception):
    pass


class InvalidScenario(Exception):
    pass


class PrimitiveAction(Enum):
    # enumeration order is the tie-break order for greedy policy extraction
    MOVE_N = "move_n"
    MOVE_S = "move_s"
    MOVE_E = "move_e"
    MOVE_W = "move_w"
    ATTACK = "attack"
    EAT = "eat"
    PICK_UP = "pick_up"
    CRAFT = "craft"
    WAIT = "wait"


_MOVE_DELTA = {
    PrimitiveAction.MOVE_N: (0, -1),
    PrimitiveAction.MOVE_S: (0, 1),
    PrimitiveAction.MOVE_E: (1, 0),
    PrimitiveAction.MOVE_W: (-1, 0),
}


@dataclass(frozen=True)
class EnvConfig:
    width: int = 12
    height: int = 12
    max_hp: int = 30
    hostile_max_hp: int = 16
    attack_damage: int = 2
    hostile_damage: int = 1
    sword_break_prob: float = 0.005
    fire_damage: int = 2
    aggro_radius: int = 3
    deaggro_radius: int = 6
    see_radius: int = 10
    near_radius: int = 1
    cow_move_prob: float = 0.5
    food_from_cow: int = 2
    knockback_prob: float = 0.5
    hostile_avoids_fire: bool = True
    cow_avoids_fire: bool = True
    cow_avoids_hostile: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EnvConfig":
        return EnvConfig(**json.loads(text))


@dataclass
class WorldState:
    config: EnvConfig
    fire_cells: frozenset
    agent_pos: tuple[int, int]
    agent_hp: int
    hungry: bool
    food: int
    sword: bool
    materials: bool
    cow_pos: tuple[int, int]
    cow_alive: bool
    hostile_pos: tuple[int, int]
    hostile_hp: int
    hostile_aggro: bool
    apple_pos: Optional[tuple[int, int]]
    table_pos: tuple[int, int]
    t: int = 0

    @property
    def agent_alive(self) -> bool:
        return self.agent_hp > 0

    @property
    def hostile_alive(self) -> bool:
        return self.hostile_hp > 0

    def digest(self) -> str:
        ax, ay = self.agent_pos
        cx, cy = self.cow_pos
        hx, hy = self.hostile_pos
        return (f"t{self.t} a{ax},{ay} hp{self.agent_hp} f{self.food}"
                f" s{int(self.sword)} m{int(self.materials)} hu{int(self.hungry)}"
                f" c{cx},{cy},{int(self.cow_alive)} h{hx},{hy},{self.hostile_hp},{int(self.hostile_aggro)}"
                f" ap{self.apple_pos}")


def cheb(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def state_to_dict(state: WorldState) -> dict:
    d = asdict(state)
    d["fire_cells"] = sorted(list(c) for c in state.fire_cells)
    d["apple_pos"] = list(state.apple_pos) if state.apple_pos else None
    for key in ("agent_pos", "cow_pos", "hostile_pos", "table_pos"):
        d[key] = list(d[key])
    return d


def state_from_dict(d: dict) -> WorldState:
    d = dict(d)
    d["config"] = EnvConfig(**d["config"])
    d["fire_cells"] = frozenset(tuple(c) for c in d["fire_cells"])
    d["apple_pos"] = tuple(d["apple_pos"]) if d["apple_pos"] else None
    for key in ("agent_pos", "cow_pos", "hostile_pos", "table_pos"):
        d[key] = tuple(d[key])
    return WorldState(**d)


def state_to_json(state: WorldState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True)


def state_from_json(text: str) -> WorldState:
    return state_from_dict(json.loads(text))


# --- transition model ------------------------------------------------------

def _clip_pos(pos, cfg: EnvConfig):
    return (min(max(pos[0], 0), cfg.width - 1), min(max(pos[1], 0), cfg.height - 1))


def step(state: WorldState, action: PrimitiveAction, rng: np.random.Generator) -> WorldState:
    """One environment transition: agent action, then world dynamics.

    Invalid actions (eating without food, attacking air) are no-ops that still
    advance time."""
    cfg = state.config
    s = replace(state)

    # agent action
    if s.agent_alive:
        if action in _MOVE_DELTA:
            dx, dy = _MOVE_DELTA[action]
            target = _clip_pos((s.agent_pos[0] + dx, s.agent_pos[1] + dy), cfg)
            blocked = ((s.cow_alive and target == s.cow_pos)
                       or (s.hostile_alive and target == s.hostile_pos))
            if not blocked:
                s.agent_pos = target
        elif action is PrimitiveAction.ATTACK:
            hit = False
            if s.hostile_alive and cheb(s.agent_pos, s.hostile_pos) <= 1:
                s.hostile_hp = max(0, s.hostile_hp - cfg.attack_damage)
                hit = True
            elif s.cow_alive and cheb(s.agent_pos, s.cow_pos) <= 1:
                s.cow_alive = False
                s.food += cfg.food_from_cow
                hit = True
            if hit and s.sword and rng.random() < cfg.sword_break_prob:
                s.sword = False
        elif action is PrimitiveAction.EAT:
            if s.food >= 1:
                s.food -= 1
                s.hungry = False
        elif action is PrimitiveAction.PICK_UP:
            if s.apple_pos is not None and cheb(s.agent_pos, s.apple_pos) <= 1:
                s.apple_pos = None
                s.food += 1
        elif action is PrimitiveAction.CRAFT:
            if s.materials and cheb(s.agent_pos, s.table_pos) <= 1:
                s.sword = True
                s.materials = False
        elif action is PrimitiveAction.WAIT:
            pass
        else:
            raise UnknownAction(str(action))

    # cow random walk
    if s.cow_alive and rng.random() < cfg.cow_move_prob:
        d = int(rng.integers(0, 4))
        dx, dy = list(_MOVE_DELTA.values())[d]
        target = _clip_pos((s.cow_pos[0] + dx, s.cow_pos[1] + dy), cfg)
        shy = (cfg.cow_avoids_hostile and s.hostile_alive
               and cheb(target, s.hostile_pos) <= cfg.aggro_radius)
        if not (cfg.cow_avoids_fire and target in s.fire_cells) and not shy \
                and target != s.agent_pos and target != s.hostile_pos:
            s.cow_pos = target

    # hostile aggro / chase / attack
    if s.hostile_alive:
        d = cheb(s.hostile_pos, s.agent_pos)
        if d <= cfg.aggro_radius:
            s.hostile_aggro = True
        elif d > cfg.deaggro_radius:
            s.hostile_aggro = False
        if s.hostile_aggro and s.agent_alive:
            if d <= 1:
                s.agent_hp = max(0, s.agent_hp - cfg.hostile_damage)
                if rng.random() < cfg.knockback_prob:
                    push = (int(np.sign(s.agent_pos[0] - s.hostile_pos[0])),
                            int(np.sign(s.agent_pos[1] - s.hostile_pos[1])))
                    if push != (0, 0):
                        target = _clip_pos((s.agent_pos[0] + push[0],
                                            s.agent_pos[1] + push[1]), cfg)
                        if target != s.hostile_pos and (not s.cow_alive or target != s.cow_pos):
                            s.agent_pos = target
            else:
                best = None
                for delta in _MOVE_DELTA.values():
                    target = _clip_pos((s.hostile_pos[0] + delta[0],
                                        s.hostile_pos[1] + delta[1]), cfg)
                    if cfg.hostile_avoids_fire and target in s.fire_cells:
                        continue
                    if target == s.cow_pos and s.cow_alive:
                        continue
                    nd = cheb(target, s.agent_pos)
                    if best is None or nd < best[0]:
                        best = (nd, target)
                if best is not None and best[0] < d:
                    s.hostile_pos = best[1]

    # fire damage at step end
    if s.agent_pos in s.fire_cells:
        s.agent_hp = max(0, s.agent_hp - cfg.fire_damage)

    s.agent_hp = min(s.agent_hp, cfg.max_hp)
    s.t += 1
    return s


class Environment:
    """Single mission wrapper: one mutable state plus one rng stream."""

    def __init__(self, state: WorldState, rng: np.random.Generator):
        self.state = state
        self.rng = rng

    def apply(self, primitive: PrimitiveAction) -> None:
        self.state = step(self.state, primitive, self.rng)

    def alive(self) -> bool:
        return self.state.agent_alive

    def digest(self) -> str:
        return self.state.digest()


# --- condition predicates --------------------------------------------------

def _safe_from_fire(s: WorldState) -> bool:
    return s.agent_pos not in s.fire_cells


def _safe_from_hostiles(s: WorldState) -> bool:
    return (not s.hostile_alive) or cheb(s.agent_pos, s.hostile_pos) > s.config.aggro_radius


CONDITIONS = {
    "safe from fire": _safe_from_fire,
    "safe from hostiles": _safe_from_hostiles,
    "not hungry": lambda s: not s.hungry,
    "has food": lambda s: s.food >= 1,
    "is close to cow": lambda s: s.cow_alive and cheb(s.agent_pos, s.cow_pos) <= s.config.near_radius,
    "can see cow": lambda s: s.cow_alive and cheb(s.agent_pos, s.cow_pos) <= s.config.see_radius,
    "is close to apple": lambda s: s.apple_pos is not None
        and cheb(s.agent_pos, s.apple_pos) <= s.config.near_radius,
    "has sword": lambda s: s.sword,
    "has materials": lambda s: s.materials,
    "has crafting table": lambda s: cheb(s.agent_pos, s.table_pos) <= s.config.near_radius,
}


def condition(name: str, state: WorldState) -> bool:
    try:
        return CONDITIONS[canon(name)](state)
    except KeyError:
        raise UnknownCondition(name) from None


# --- scripted policies -----------------------------------------------------

_MOVE_ORDER = [PrimitiveAction.MOVE_N, PrimitiveAction.MOVE_S,
               PrimitiveAction.MOVE_E, PrimitiveAction.MOVE_W]


def _occupied(s: WorldState, cell: tuple[int, int]) -> bool:
    return ((s.cow_alive and cell == s.cow_pos)
            or (s.hostile_alive and cell == s.hostile_pos))


def _path_step(s: WorldState, goal: tuple[int, int]) -> PrimitiveAction:
    """First move of a BFS shortest path to any cell adjacent to `goal`,
    avoiding fire and occupied cells. Deterministic: fixed expansion order.
    Falls back to a straight-line step when no safe path exists."""
    from collections import deque

    if cheb(s.agent_pos, goal) <= 1:
        return PrimitiveAction.WAIT
    start = s.agent_pos
    seen = {start}
    frontier = deque([(start, None)])
    while frontier:
        cell, first = frontier.popleft()
        for act in _MOVE_ORDER:
            dx, dy = _MOVE_DELTA[act]
            nxt = _clip_pos((cell[0] + dx, cell[1] + dy), s.config)
            if nxt in seen:
                continue
            seen.add(nxt)
            move = first or act
            if cheb(nxt, goal) <= 1 and nxt not in s.fire_cells and not _occupied(s, nxt):
                return move
            if nxt in s.fire_cells or _occupied(s, nxt):
                continue
            frontier.append((nxt, move))
    # boxed in: head straight at the goal and let the environment sort it out
    dx, dy = goal[0] - start[0], goal[1] - start[1]
    if abs(dx) >= abs(dy) and dx != 0:
        return PrimitiveAction.MOVE_E if dx > 0 else PrimitiveAction.MOVE_W
    if dy != 0:
        return PrimitiveAction.MOVE_S if dy > 0 else PrimitiveAction.MOVE_N
    return PrimitiveAction.WAIT


def _escape_from_fire(s: WorldState) -> PrimitiveAction:
    # fixed evaluation order makes the tie-break deterministic
    order = [PrimitiveAction.MOVE_E, PrimitiveAction.MOVE_W,
             PrimitiveAction.MOVE_N, PrimitiveAction.MOVE_S]
    best = None
    for act in order:
        delta = _MOVE_DELTA[act]
        target = _clip_pos((s.agent_pos[0] + delta[0], s.agent_pos[1] + delta[1]), s.config)
        if target == s.agent_pos or _occupied(s, target):
            continue
        on_fire = target in s.fire_cells
        dist = min((cheb(target, f) for f in s.fire_cells), default=99)
        score = (not on_fire, dist)
        if best is None or score > best[0]:
            best = (score, act)
    return best[1] if best else PrimitiveAction.WAIT


_SPIRAL = []
_side = 1
_dirs = [PrimitiveAction.MOVE_E, PrimitiveAction.MOVE_S,
         PrimitiveAction.MOVE_W, PrimitiveAction.MOVE_N]
_k = 0
while len(_SPIRAL) < 48:
    for _ in range(2):
        _SPIRAL.extend([_dirs[_k % 4]] * _side)
        _k += 1
    _side += 1


def _search_for_cow(s: WorldState) -> PrimitiveAction:
    return _SPIRAL[s.t % len(_SPIRAL)]


def _chase_cow(s: WorldState) -> PrimitiveAction:
    return _path_step(s, s.cow_pos)


def _defeat_hostile(s: WorldState) -> PrimitiveAction:
    if cheb(s.agent_pos, s.hostile_pos) <= 1:
        return PrimitiveAction.ATTACK
    return _path_step(s, s.hostile_pos)


SCRIPTED = {
    "escape from fire": _escape_from_fire,
    "search for cow": _search_for_cow,
    "chase cow": _chase_cow,
    "defeat hostile": _defeat_hostile,
    "kill cow": lambda s: PrimitiveAction.ATTACK,
    "eat": lambda s: PrimitiveAction.EAT,
    "pick apple": lambda s: PrimitiveAction.PICK_UP,
    "craft sword": lambda s: PrimitiveAction.CRAFT,
}


def scripted_policy(action_name: str, state: WorldState) -> PrimitiveAction:
    try:
        return SCRIPTED[canon(action_name)](state)
    except KeyError:
        raise UnknownAction(action_name) from None


# --- scenarios -------------------------------------------------------------

# A north-south fire wall at x=6 with a two-cell doorway at y=1..2. Crossing
# anywhere else means standing in fire for a step.
FIRE_WALL = frozenset((6, y) for y in range(12) if y not in (1, 2))


def make_scenario(scenario_id: int, seed: int, config: EnvConfig | None = None) -> WorldState:
    """Seeded starting states. Scenario 1: not hungry, hostile two cells away
    with the agent pinned against the fire wall. Scenario 2: hungry with sword,
    cow on the far side of the wall, hostile guarding the direct crossing; the
    doorway route around the hostile is longer but hazard free."""
    cfg = config or EnvConfig()
    rng = np.random.default_rng(seed)
    if scenario_id == 1:
        y0 = 4 + int(rng.integers(0, 4))          # 4..7
        dy = int(rng.integers(-1, 2))             # hostile jitter, keeps distance 2
        return WorldState(
            config=cfg, fire_cells=FIRE_WALL,
            agent_pos=(5, y0), agent_hp=cfg.max_hp,
            hungry=False, food=1, sword=True, materials=True,
            cow_pos=(9, 6 + int(rng.integers(0, 3))), cow_alive=True,
            # the scenario-1 hostile starts wounded, so standing and fighting
            # is time-competitive with retreating across the fire wall
            hostile_pos=(3, y0 + dy), hostile_hp=8, hostile_aggro=False,
            apple_pos=None, table_pos=(7, 4),
        )
    if scenario_id == 2:
        ay = 5 + int(rng.integers(0, 3))          # 5..7
        cy = 8 + int(rng.integers(0, 2))          # 8..9
        return WorldState(
            config=cfg, fire_cells=FIRE_WALL,
            agent_pos=(2, ay), agent_hp=cfg.max_hp,
            hungry=True, food=0, sword=True, materials=True,
            cow_pos=(11, cy), cow_alive=True,
            hostile_pos=(7, 7), hostile_hp=cfg.hostile_max_hp, hostile_aggro=False,
            apple_pos=None, table_pos=(7, 4),
        )
    raise InvalidScenario(scenario_id)


# --- bindings between a compiled tree and this world -----------------------

def make_bindings(tree: Node, spec: SpecFile,
                  policies: dict[str, object] | None = None) -> Bindings:
    """Bind every leaf id in `tree` to predicates and policies over WorldState.

    `policies` maps canonical action names to callables WorldState -> primitive
    and overrides the scripted defaults (used for learned actions)."""
    from .bt import Action as ActionLeaf, Condition as ConditionLeaf

    policies = policies or {}
    b = Bindings()
    for node in tree.iter_preorder():
        if isinstance(node, ConditionLeaf):
            key = canon(node.condition_id)
            if key not in CONDITIONS:
                raise UnknownCondition(node.condition_id)
            b.conditions[node.condition_id] = CONDITIONS[key]
        elif isinstance(node, ActionLeaf):
            a = spec.action(node.action_id)
            post = canon(a.postcondition)
            pres = [canon(p) for p in a.preconditions]

            def status(s, post=post, pres=pres):
                if CONDITIONS[post](s):
                    return Status.SUCCESS
                if any(not CONDITIONS[p](s) for p in pres):
                    return Status.FAILURE
                return Status.RUNNING

            key = canon(node.action_id)
            policy = policies.get(key)
            if policy is None:
                if key not in SCRIPTED:
                    raise UnknownAction(node.action_id)
                policy = SCRIPTED[key]
            b.actions[node.action_id] = ActionBinding(policy=policy, status=status)
    return b
