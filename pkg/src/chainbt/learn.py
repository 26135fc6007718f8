"""Constraint-aware tabular Q-learning for selected tree actions.

An episode is the span during which the trained action is the one selected by
the tick traversal. Episodes end on postcondition, agent death, a step cap, or
(optionally) on constraint violation. The world is never reset between
episodes: after a non-death episode end the rest of the tree keeps executing
until the trained action is selected again, which opens the next episode.
Missions reset only on agent death or when the root leaves its Running region.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .bt import Node, Status, tick
from .compiler import SpecFile, canon
from .world import (CONDITIONS, PrimitiveAction, WorldState, condition,
                    make_bindings, step)


class NoAccTable(Exception):
    pass


class NonLearnedAction(Exception):
    pass


class PolicyLoadError(Exception):
    pass


CODEC_VERSION = 1


@dataclass(frozen=True)
class RewardConfig:
    """Reward constants: postcondition bonus, per-step cost, constraint
    penalty, and whether a constraint violation ends the episode."""
    m_post: float = 1000.0
    m_time: float = -0.1
    m_acc: float = 0.0
    end_episode_on_acc: bool = False
    preset_name: str = "custom"

    def __post_init__(self):
        if not (self.m_post > 0 >= self.m_time):
            raise ValueError("require m_post > 0 >= m_time")
        if self.m_acc > self.m_time and self.m_acc != 0.0:
            raise ValueError("m_acc must be <= m_time, or exactly 0 to ignore ACCs")


PRESETS = {
    "standard": RewardConfig(1000.0, -0.1, 0.0, False, "standard"),
    "neg_reward": RewardConfig(1000.0, -0.1, -10.0, False, "neg_reward"),
    "end_episode": RewardConfig(1000.0, -0.1, 0.0, True, "end_episode"),
    "nr_ee": RewardConfig(1000.0, -0.1, -1000.0, True, "nr_ee"),
}


# --- feature codecs --------------------------------------------------------

def _clip(v: int, lim: int) -> int:
    return max(-lim, min(lim, v))


def _chase_cow_features(s: WorldState) -> tuple:
    """Agent cell plus the cow's clipped offset. The grid layout (fire, the
    hostile camp) is fixed per scenario, so absolute position carries the
    hazard information while the offset steers the final approach."""
    ax, ay = s.agent_pos
    if s.cow_alive:
        cd = (_clip(s.cow_pos[0] - ax, 2), _clip(s.cow_pos[1] - ay, 2))
    else:
        cd = (3, 3)
    return (ax, ay) + cd


def _defeat_hostile_features(s: WorldState) -> tuple:
    ax, ay = s.agent_pos
    if s.hostile_alive:
        hd = (_clip(s.hostile_pos[0] - ax, 2), _clip(s.hostile_pos[1] - ay, 2))
    else:
        hd = (3, 3)
    return (ax, ay) + hd


_MOVES = [PrimitiveAction.MOVE_N, PrimitiveAction.MOVE_S,
          PrimitiveAction.MOVE_E, PrimitiveAction.MOVE_W]

CODECS: dict[str, Callable[[WorldState], tuple]] = {
    "chase cow": _chase_cow_features,
    "defeat hostile": _defeat_hostile_features,
}

ACTION_SPACES: dict[str, list[PrimitiveAction]] = {
    "chase cow": list(_MOVES),
    "defeat hostile": list(_MOVES) + [PrimitiveAction.ATTACK],
}


# --- Q-table ---------------------------------------------------------------

@dataclass
class QTable:
    action_id: str
    primitives: list[PrimitiveAction]
    alpha: float = 0.1
    gamma: float = 0.99
    alpha_decay: float = 0.0
    q_init: float = 0.0
    codec_version: int = CODEC_VERSION
    q: dict = field(default_factory=dict)
    visits: dict = field(default_factory=dict)

    def row(self, feat: tuple) -> list[float]:
        r = self.q.get(feat)
        if r is None:
            r = [self.q_init] * len(self.primitives)
            self.q[feat] = r
            self.visits[feat] = [0] * len(self.primitives)
        return r

    def greedy_index(self, feat: tuple) -> int:
        row = self.q.get(feat)
        if row is None:
            return 0
        best = 0
        for i in range(1, len(row)):
            if row[i] > row[best]:
                best = i
        return best

    def to_json(self) -> str:
        entries = sorted((list(k), v, self.visits.get(k, [0] * len(v)))
                         for k, v in self.q.items())
        return json.dumps({
            "action_id": self.action_id,
            "codec_version": self.codec_version,
            "hyperparameters": {"alpha": self.alpha, "gamma": self.gamma,
                                "alpha_decay": self.alpha_decay,
                                "q_init": self.q_init},
            "primitives": [p.value for p in self.primitives],
            "entries": entries,
        }, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "QTable":
        try:
            d = json.loads(text)
            qt = QTable(
                action_id=d["action_id"],
                primitives=[PrimitiveAction(v) for v in d["primitives"]],
                alpha=d["hyperparameters"]["alpha"],
                gamma=d["hyperparameters"]["gamma"],
                alpha_decay=d["hyperparameters"].get("alpha_decay", 0.0),
                q_init=d["hyperparameters"].get("q_init", 0.0),
                codec_version=d["codec_version"],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise PolicyLoadError(str(exc)) from exc
        if qt.codec_version != CODEC_VERSION:
            raise PolicyLoadError(
                f"codec version {qt.codec_version} != supported {CODEC_VERSION}")
        for feat, row, vis in d["entries"]:
            qt.q[tuple(feat)] = list(row)
            qt.visits[tuple(feat)] = list(vis)
        return qt


def q_update(qtable: QTable, s_feat: tuple, a_idx: int, r: float,
             s2_feat: Optional[tuple], terminal: bool) -> None:
    """One-step update: Q(s,a) += lr * (r + gamma*max_a' Q(s',a') - Q(s,a)),
    with the bootstrap term dropped on terminal transitions. The learning rate
    shrinks with the visit count of (s,a) so estimates settle."""
    row = qtable.row(s_feat)
    target = r
    if not terminal:
        nxt = qtable.q.get(s2_feat)
        target += qtable.gamma * (max(nxt) if nxt else qtable.q_init)
    n = qtable.visits[s_feat][a_idx]
    lr = qtable.alpha / (1.0 + qtable.alpha_decay * n)
    row[a_idx] += lr * (target - row[a_idx])
    qtable.visits[s_feat][a_idx] = n + 1


def extract_policy(qtable: QTable,
                   tie_tol: float = 2.0) -> Callable[[WorldState], PrimitiveAction]:
    """Greedy policy with deterministic dithering: actions whose value is
    within `tie_tol` of the maximum count as tied, and the choice among them
    is a stable hash of (features, time). Near-ties are where estimate noise
    exceeds the true value gap; strict argmax there produces livelock cycles,
    while the time-dependent pick stays reproducible and order-independent."""
    codec = CODECS[canon(qtable.action_id)]

    def policy(state: WorldState) -> PrimitiveAction:
        feat = codec(state)
        row = qtable.q.get(feat)
        if row is None:
            return qtable.primitives[0]
        # optimistic initial values are a training device: a rarely tried
        # action keeps an inflated value long after the well-trodden one has
        # converged, so at evaluation time only actions with a meaningful
        # share of the row's visits are trusted
        vis = qtable.visits.get(feat, [0] * len(row))
        floor = max(1, max(vis) // 10)
        pool = [i for i in range(len(row)) if vis[i] >= floor] or list(range(len(row)))
        cutoff = max(row[i] for i in pool) - tie_tol
        tied = [i for i in pool if row[i] >= cutoff]
        if len(tied) == 1:
            return qtable.primitives[tied[0]]
        h = zlib.crc32(repr((feat, state.t)).encode())
        return qtable.primitives[tied[h % len(tied)]]

    return policy


# --- reward ----------------------------------------------------------------

def reward(action_id: str, state_after: WorldState, config: RewardConfig,
           acc_table: dict[str, list[str]], spec: SpecFile,
           cond: Callable[[str, WorldState], bool] = condition) -> float:
    """Postcondition reached beats everything; otherwise a broken constraint
    pays the penalty; otherwise the per-step cost."""
    try:
        post = spec.action(action_id).postcondition
    except KeyError:
        raise NonLearnedAction(action_id) from None
    if action_id not in acc_table:
        raise NoAccTable(action_id)
    if cond(post, state_after):
        return config.m_post
    if any(not cond(c, state_after) for c in acc_table[action_id]):
        return config.m_acc
    return config.m_time


# --- training --------------------------------------------------------------

class EpisodeEnd(Enum):
    POSTCONDITION = "postcondition"
    ACC_VIOLATION = "acc_violation"
    DEATH = "death"
    STEP_LIMIT = "step_limit"


@dataclass
class EpisodeLog:
    index: int
    mission: int
    t_start: int
    t_end: int
    steps: int
    cum_reward: float
    reason: EpisodeEnd
    acc_violation_steps: int
    rewards: Optional[list[float]] = None


def write_training_csv(logs: list[EpisodeLog], fh) -> None:
    w = csv.writer(fh)
    w.writerow(["episode", "mission", "t_start", "t_end", "steps",
                "cum_reward", "reason", "acc_steps"])
    for e in logs:
        w.writerow([e.index, e.mission, e.t_start, e.t_end, e.steps,
                    f"{e.cum_reward:.6f}", e.reason.value, e.acc_violation_steps])


def training_csv(logs: list[EpisodeLog]) -> str:
    buf = io.StringIO()
    write_training_csv(logs, buf)
    return buf.getvalue()


def train(action_id: str, config: RewardConfig, total_steps: int, seed: int,
          scenario_sampler: Callable[[int], WorldState], tree: Node,
          spec: SpecFile, acc_table: dict[str, list[str]], *,
          alpha: float = 0.1, alpha_end: Optional[float] = None, gamma: float = 0.99,
          alpha_decay: float = 0.0, q_init: float = 1000.0,
          episode_step_limit: int = 500, mission_step_cap: int = 2000,
          eps_start: float = 1.0, eps_end: float = 0.05,
          record_rewards: bool = False) -> tuple[QTable, list[EpisodeLog]]:
    """Run full missions, learning only on steps where `action_id` is the
    selected action. Counts toward `total_steps` are steps taken by the
    trained action itself; steps spent in other parts of the tree (fights,
    fire escapes, eating) do not draw down the budget."""
    key = canon(action_id)
    if spec.action(action_id).impl_kind != "learned":
        raise NonLearnedAction(action_id)
    acc_key = _acc_lookup(acc_table, action_id)
    if acc_key is None:
        raise NoAccTable(action_id)
    acc_conditions = acc_table[acc_key]
    post_name = spec.action(action_id).postcondition
    post_fn = CONDITIONS[canon(post_name)]
    acc_fns = [CONDITIONS[canon(c)] for c in acc_conditions]
    codec = CODECS[key]
    primitives = ACTION_SPACES[key]
    # optimistic initialization drives systematic exploration and keeps the
    # greedy policy from settling into low-value oscillation loops
    qtable = QTable(action_id=spec.action(action_id).name, primitives=primitives,
                    alpha=alpha, gamma=gamma, alpha_decay=alpha_decay,
                    q_init=q_init)
    bindings = make_bindings(tree, spec)  # scripted fallbacks for every action

    explore_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    half = max(1, total_steps // 2)

    logs: list[EpisodeLog] = []
    learner_steps = 0
    mission = 0
    while learner_steps < total_steps:
        scen_seed = int(np.random.SeedSequence(seed, spawn_key=(1, mission)).generate_state(1)[0])
        env_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, mission)))
        state = scenario_sampler(scen_seed)
        ep: Optional[EpisodeLog] = None
        pending: Optional[tuple] = None  # (feat, a_idx, r) awaiting bootstrap
        mission_steps = 0

        def close(reason: EpisodeEnd, t_end: int):
            nonlocal ep
            ep.reason = reason
            ep.t_end = t_end
            logs.append(ep)
            ep = None

        while learner_steps < total_steps and mission_steps < mission_step_cap:
            result = tick(tree, state, bindings)
            if result.status is not Status.RUNNING:
                break
            acting = result.executing_action
            if canon(acting) == key:
                if alpha_end is not None:
                    # optional learning-rate anneal
                    qtable.alpha = alpha - (alpha - alpha_end) * min(
                        1.0, learner_steps / max(1, total_steps))
                feat = codec(state)
                if pending is not None:
                    q_update(qtable, pending[0], pending[1], pending[2], feat, False)
                    pending = None
                if ep is None:
                    ep = EpisodeLog(len(logs), mission, state.t, state.t, 0, 0.0,
                                    EpisodeEnd.STEP_LIMIT, 0,
                                    [] if record_rewards else None)
                eps = max(eps_end, eps_start - (eps_start - eps_end) * learner_steps / half)
                if explore_rng.random() < eps:
                    a_idx = int(explore_rng.integers(0, len(primitives)))
                else:
                    a_idx = qtable.greedy_index(feat)
                primitive = primitives[a_idx]
                learner_steps += 1
            else:
                a_idx = None
                primitive = bindings.actions[acting].policy(state)
            state2 = step(state, primitive, env_rng)
            mission_steps += 1

            if a_idx is not None:
                post_holds = post_fn(state2)
                violated = any(not f(state2) for f in acc_fns)
                # same three-case rule as reward(), with precomputed predicates
                if post_holds:
                    r = config.m_post
                elif violated:
                    r = config.m_acc
                else:
                    r = config.m_time
                ep.steps += 1
                ep.cum_reward += r
                if ep.rewards is not None:
                    ep.rewards.append(r)
                if violated:
                    ep.acc_violation_steps += 1
                if post_holds:
                    end = EpisodeEnd.POSTCONDITION
                elif not state2.agent_alive:
                    end = EpisodeEnd.DEATH
                elif config.end_episode_on_acc and violated:
                    end = EpisodeEnd.ACC_VIOLATION
                elif ep.steps >= episode_step_limit:
                    end = EpisodeEnd.STEP_LIMIT
                else:
                    end = None
                if end is not None:
                    q_update(qtable, feat, a_idx, r, None, True)
                    close(end, state2.t)
                    if end is EpisodeEnd.DEATH:
                        state = state2
                        break
                else:
                    pending = (feat, a_idx, r)
            elif not state2.agent_alive:
                if pending is not None:
                    q_update(qtable, pending[0], pending[1], pending[2], None, True)
                    pending = None
                if ep is not None:
                    close(EpisodeEnd.DEATH, state2.t)
                state = state2
                break
            state = state2

        if pending is not None:
            q_update(qtable, pending[0], pending[1], pending[2], None, True)
            pending = None
        if ep is not None:
            close(EpisodeEnd.DEATH if not state.agent_alive else EpisodeEnd.STEP_LIMIT,
                  state.t)
        mission += 1
    return qtable, logs


def _acc_lookup(acc_table: dict[str, list[str]], action_id: str) -> Optional[str]:
    for k in acc_table:
        if canon(k) == canon(action_id):
            return k
    return None
