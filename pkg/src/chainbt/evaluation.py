"""Seeded batch evaluation of the full tree and comparative summaries.

A step counts as a constraint violation when the action selected at that step
has a derived constraint set and one of its tracked constraints is false in
the state the step produced. Completion time is steps until the root returns
Success; missions that time out, fail, or die are tallied separately and
excluded from the completion mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .bt import MissionTrace, Node, TerminalReason, step_mission
from .compiler import SpecFile, canon
from .learn import PolicyLoadError, QTable, extract_policy
from .world import Environment, EnvConfig, InvalidScenario, make_bindings, make_scenario


class ScenarioError(Exception):
    pass


class MismatchedScenarios(Exception):
    pass


class RunningStats:
    """Numerically stable one-pass mean and standard deviation (population)."""

    def __init__(self):
        self.n = 0
        self._mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self._mean
        self._mean += delta / self.n
        self._m2 += delta * (x - self._mean)

    @property
    def mean(self) -> float:
        return self._mean if self.n else 0.0

    @property
    def sd(self) -> float:
        return math.sqrt(self._m2 / self.n) if self.n else 0.0


@dataclass
class EvalConfig:
    scenario: int
    episodes: int = 1000
    mission_step_cap: int = 2000
    preset_label: str = "scripted"
    tracked_conditions: list[str] | None = None  # None = all constraints of learned actions
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@dataclass
class EvalReport:
    scenario: int
    preset_label: str
    episodes: int
    seed: int
    mission_seeds: list[int]
    pct_episodes_with_acc_violation: float
    violation_steps_mean: float
    violation_steps_sd: float
    completion_steps_mean: float
    completion_steps_sd: float
    completed: int
    timeouts: int
    deaths: int
    failures: int
    per_condition: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["schema_version"] = 1
        return json.dumps(d, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        d = json.loads(text)
        d.pop("schema_version", None)
        return EvalReport(**d)


def trace_violations(trace: MissionTrace, acc_table: dict[str, list[str]],
                     tracked: set[str]) -> dict[str, int]:
    """Per-condition violating-step counts for one mission trace."""
    acc_by_action = {canon(a): [canon(c) for c in cs] for a, cs in acc_table.items()}
    counts: dict[str, int] = {}
    for i, rec in enumerate(trace.steps):
        accs = acc_by_action.get(canon(rec.executing_action))
        if not accs:
            continue
        if i + 1 < len(trace.steps):
            after = trace.steps[i + 1].conditions
        else:
            after = trace.final_conditions
        after_canon = {canon(k): v for k, v in after.items()}
        for c in accs:
            if c in tracked and not after_canon.get(c, True):
                counts[c] = counts.get(c, 0) + 1
    return counts


@dataclass
class MissionTally:
    index: int
    seed: int
    counts: dict[str, int]
    reason: str
    steps: int


def _run_mission(index: int, config: EvalConfig, tree: Node, bindings,
                 acc_table: dict[str, list[str]], tracked: set[str],
                 env_config: EnvConfig, trace_sink=None) -> MissionTally:
    mseed = int(np.random.SeedSequence(config.seed, spawn_key=(index,)).generate_state(1)[0])
    try:
        state = make_scenario(config.scenario, mseed, env_config)
    except InvalidScenario as exc:
        raise ScenarioError(str(exc)) from exc
    env_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(index, 1)))
    env = Environment(state, env_rng)
    trace = step_mission(tree, env, bindings, config.mission_step_cap)
    if trace_sink is not None:
        trace_sink(index, trace)
    counts = trace_violations(trace, acc_table, tracked)
    return MissionTally(index, mseed, counts, trace.reason.value, len(trace.steps))


_WORKER = {}


def _init_worker(config, tree, spec, acc_table, qtables, env_config, tracked):
    policies = {name: extract_policy(qt) for name, qt in qtables.items()}
    _WORKER["args"] = (config, tree, make_bindings(tree, spec, policies),
                       acc_table, tracked, env_config)


def _worker_run(index: int) -> MissionTally:
    config, tree, bindings, acc_table, tracked, env_config = _WORKER["args"]
    return _run_mission(index, config, tree, bindings, acc_table, tracked, env_config)


def evaluate(config: EvalConfig, tree: Node, spec: SpecFile,
             acc_table: dict[str, list[str]],
             policies: dict[str, object] | None = None,
             env_config: EnvConfig | None = None,
             jobs: int = 1, trace_sink=None) -> EvalReport:
    """Run `episodes` seeded missions with greedy policies and aggregate the
    violation and completion metrics. Missions are independent; with jobs > 1
    they run in worker processes and are folded in mission order, so the
    report does not depend on the job count."""
    policies = policies or {}
    learned = [a for a in spec.actions if a.impl_kind == "learned"]
    qtables: dict[str, QTable] = {}
    for a in learned:
        entry = policies.get(canon(a.name), "scripted")
        if entry == "scripted":
            continue
        if not isinstance(entry, QTable):
            raise PolicyLoadError(f"policy for {a.name!r} must be a QTable or 'scripted'")
        if canon(entry.action_id) != canon(a.name):
            raise PolicyLoadError(
                f"QTable trained for {entry.action_id!r} bound to {a.name!r}")
        qtables[canon(a.name)] = entry

    if config.tracked_conditions is None:
        tracked = {canon(c) for a in learned for c in acc_table.get(_key(acc_table, a.name), [])}
    else:
        tracked = {canon(c) for c in config.tracked_conditions}

    env_config = env_config or EnvConfig()

    if jobs > 1 and trace_sink is None:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(config, tree, spec, acc_table, qtables, env_config, tracked)) as ex:
            tallies = list(ex.map(_worker_run, range(config.episodes), chunksize=16))
        tallies.sort(key=lambda t: t.index)
    else:
        bound = {name: extract_policy(qt) for name, qt in qtables.items()}
        bindings = make_bindings(tree, spec, bound)
        tallies = [_run_mission(i, config, tree, bindings, acc_table, tracked,
                                env_config, trace_sink)
                   for i in range(config.episodes)]

    mission_seeds: list[int] = []
    violated_episodes = 0
    viol_stats = RunningStats()
    completion_stats = RunningStats()
    completed = timeouts = deaths = failures = 0
    per_condition: dict[str, dict[str, int]] = {}

    for t in tallies:
        mission_seeds.append(t.seed)
        total_viol = sum(t.counts.values())
        viol_stats.push(total_viol)
        if total_viol:
            violated_episodes += 1
        for c, n in t.counts.items():
            slot = per_condition.setdefault(c, {"episodes": 0, "steps": 0})
            slot["episodes"] += 1
            slot["steps"] += n
        if t.reason in (TerminalReason.ROOT_SUCCESS.value, TerminalReason.ALREADY_SUCCEEDED.value):
            completed += 1
            completion_stats.push(t.steps)
        elif t.reason == TerminalReason.STEP_LIMIT.value:
            timeouts += 1
        elif t.reason == TerminalReason.DEATH.value:
            deaths += 1
        else:
            failures += 1

    return EvalReport(
        scenario=config.scenario,
        preset_label=config.preset_label,
        episodes=config.episodes,
        seed=config.seed,
        mission_seeds=mission_seeds,
        pct_episodes_with_acc_violation=100.0 * violated_episodes / config.episodes,
        violation_steps_mean=viol_stats.mean,
        violation_steps_sd=viol_stats.sd,
        completion_steps_mean=completion_stats.mean,
        completion_steps_sd=completion_stats.sd,
        completed=completed,
        timeouts=timeouts,
        deaths=deaths,
        failures=failures,
        per_condition=per_condition,
    )


def _key(acc_table: dict[str, list[str]], name: str) -> str:
    for k in acc_table:
        if canon(k) == canon(name):
            return k
    return name


@dataclass
class ComparisonSummary:
    scenario: int
    by_violation_pct: list[tuple[str, float]]   # ascending
    by_completion_mean: list[tuple[str, float]]  # ascending
    standard_worst_on_both: bool | None
    completion_spread_small: bool
    ties: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def compare(reports: list[EvalReport]) -> ComparisonSummary:
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    scenario = reports[0].scenario
    if any(r.scenario != scenario for r in reports):
        raise MismatchedScenarios([r.scenario for r in reports])

    by_viol = sorted(((r.preset_label, r.pct_episodes_with_acc_violation) for r in reports),
                     key=lambda kv: (kv[1], kv[0]))
    by_comp = sorted(((r.preset_label, r.completion_steps_mean) for r in reports),
                     key=lambda kv: (kv[1], kv[0]))

    ties = []
    seen: dict[float, str] = {}
    for name, v in by_viol:
        if v in seen:
            ties.append(f"violation pct tie: {seen[v]} == {name}")
        seen[v] = name

    standard = next((r for r in reports if r.preset_label == "standard"), None)
    worst = None
    if standard is not None:
        others = [r for r in reports if r is not standard]
        worst = all(standard.pct_episodes_with_acc_violation >= o.pct_episodes_with_acc_violation
                    and standard.completion_steps_mean >= o.completion_steps_mean
                    for o in others)

    means = [r.completion_steps_mean for r in reports if r.completion_steps_mean > 0]
    spread_small = bool(means) and (max(means) - min(means)) <= 0.10 * min(means)

    return ComparisonSummary(scenario, by_viol, by_comp, worst, spread_small, ties)


# --- rendering -------------------------------------------------------------

_COLUMNS = ["configuration", "violations_pct_episodes", "violation_steps_mean",
            "violation_steps_sd", "completion_steps_mean", "completion_steps_sd"]


def _rows(reports: list[EvalReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        rows.append([
            r.preset_label,
            f"{r.pct_episodes_with_acc_violation:.1f}",
            f"{r.violation_steps_mean:.2f}",
            f"{r.violation_steps_sd:.2f}",
            f"{r.completion_steps_mean:.1f}",
            f"{r.completion_steps_sd:.1f}",
        ])
    return rows


def render_csv(reports: list[EvalReport]) -> str:
    lines = [",".join(_COLUMNS)]
    for row in _rows(reports):
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_markdown(reports: list[EvalReport]) -> str:
    header = ["Configuration", "ACC violations (% episodes)",
              "Violation steps (mean)", "Violation steps (SD)",
              "Completion steps (mean)", "Completion steps (SD)"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for row in _rows(reports):
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
