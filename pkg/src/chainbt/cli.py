"""Command-line entry point: compile, train, eval, report.

Exit codes: 0 ok, 2 usage/parse error, 3 compile error (cyclic dependency),
4 unknown preset/action, 5 policy/tree compatibility mismatch. Every output
directory receives a run manifest with content hashes of the inputs used.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .bt import tree_from_json, tree_to_json
from .compiler import (CompileError, CyclicDependency, canon, compile_spec,
                       export_dot, spec_from_dict, spec_to_dict)
from .evaluation import (EvalConfig, EvalReport, PolicyLoadError, ScenarioError,
                         compare, evaluate, render_csv, render_markdown)
from .learn import (PRESETS, NoAccTable, NonLearnedAction, QTable, RewardConfig,
                    train, training_csv)
from .world import EnvConfig, make_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPILE = 3
EXIT_CONFIG = 4
EXIT_COMPAT = 5


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, inputs: dict[str, Path],
                    params: dict) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)}
                   for name, p in inputs.items()},
        "params": params,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _slug(name: str) -> str:
    return canon(name).replace(" ", "_")


def _load_env_config(path: str | None) -> EnvConfig:
    if path is None:
        return EnvConfig()
    return EnvConfig.from_json(Path(path).read_text())


def cmd_compile(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        print(f"error: spec file not found: {spec_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = compile_spec(spec_path.read_text())
    except CyclicDependency as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPILE
    except CompileError as exc:
        print(f"error: {spec_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.json").write_text(tree_to_json(result.tree) + "\n")
    (out / "acc.json").write_text(json.dumps(result.acc, indent=2) + "\n")
    (out / "spec.json").write_text(json.dumps(spec_to_dict(result.spec), indent=2) + "\n")
    if args.dot:
        (out / "tree.dot").write_text(export_dot(result.tree, result.acc, args.highlight))
    _write_manifest(out, "compile", {"spec": spec_path},
                    {"dot": args.dot, "highlight": args.highlight})
    for w in result.warnings:
        print(f"note: {w}")
    for action, accs in result.acc.items():
        print(f"{action}: {', '.join(accs) if accs else '(none)'}")
    return EXIT_OK


def cmd_train(args) -> int:
    tree_dir = Path(args.tree_dir)
    for name in ("tree.json", "acc.json", "spec.json"):
        if not (tree_dir / name).is_file():
            print(f"error: missing {name} in {tree_dir}; run compile first",
                  file=sys.stderr)
            return EXIT_USAGE
    tree = tree_from_json((tree_dir / "tree.json").read_text())
    acc = json.loads((tree_dir / "acc.json").read_text())
    spec = spec_from_dict(json.loads((tree_dir / "spec.json").read_text()))

    if args.preset is not None:
        if args.preset not in PRESETS:
            print(f"error: unknown preset {args.preset!r}; choose from "
                  f"{', '.join(sorted(PRESETS))}", file=sys.stderr)
            return EXIT_CONFIG
        rcfg = PRESETS[args.preset]
    else:
        rcfg = RewardConfig(args.m_p, args.m_t, args.m_acc, args.end_episode, "custom")

    env_config = _load_env_config(args.env_config)
    scenario = args.scenario
    if scenario is None:
        scenario = {"defeat hostile": 1, "chase cow": 2}.get(canon(args.action))
    if scenario is None:
        print("error: --scenario required for this action", file=sys.stderr)
        return EXIT_CONFIG

    def sampler(seed: int):
        return make_scenario(scenario, seed, env_config)

    try:
        qtable, logs = train(args.action, rcfg, args.steps, args.seed, sampler,
                             tree, spec, acc)
    except (NonLearnedAction, NoAccTable, KeyError) as exc:
        print(f"error: cannot train {args.action!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slug = _slug(args.action)
    (out / f"qtable_{slug}.json").write_text(qtable.to_json() + "\n")
    (out / f"training_{slug}.csv").write_text(training_csv(logs))
    inputs = {"tree": tree_dir / "tree.json", "acc": tree_dir / "acc.json",
              "spec": tree_dir / "spec.json"}
    if args.env_config:
        inputs["env_config"] = Path(args.env_config)
    _write_manifest(out, "train", inputs, {
        "action": args.action, "preset": rcfg.preset_name, "scenario": scenario,
        "steps": args.steps, "seed": args.seed,
        "reward": {"m_p": rcfg.m_post, "m_t": rcfg.m_time, "m_acc": rcfg.m_acc,
                   "end_episode": rcfg.end_episode_on_acc},
    })
    print(f"trained {args.action!r} for {args.steps} steps "
          f"({len(logs)} episodes) -> {out / f'qtable_{slug}.json'}")
    return EXIT_OK


def _parse_policy_args(entries: list[str]) -> dict[str, object]:
    policies: dict[str, object] = {}
    for entry in entries:
        if "=" not in entry:
            raise ValueError(f"--policy must be ACTION=PATH or ACTION=scripted, got {entry!r}")
        name, value = entry.split("=", 1)
        if value == "scripted":
            policies[canon(name)] = "scripted"
        else:
            policies[canon(name)] = QTable.from_json(Path(value).read_text())
    return policies


def cmd_eval(args) -> int:
    tree_dir = Path(args.tree_dir)
    tree = tree_from_json((tree_dir / "tree.json").read_text())
    acc = json.loads((tree_dir / "acc.json").read_text())
    spec = spec_from_dict(json.loads((tree_dir / "spec.json").read_text()))
    env_config = _load_env_config(args.env_config)
    if args.episodes < 1:
        print("error: --episodes must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        policies = _parse_policy_args(args.policy)
    except PolicyLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_sink = None
    trace_fh = None
    if args.trace_dump:
        trace_fh = (out / "traces.jsonl").open("w")

        def trace_sink(index, trace):
            trace_fh.write(json.dumps({"mission": index}) + "\n")
            trace_fh.write(trace.to_jsonl())

    cfg = EvalConfig(scenario=args.scenario, episodes=args.episodes,
                     mission_step_cap=args.step_cap,
                     preset_label=args.preset_label, seed=args.seed)
    try:
        report = evaluate(cfg, tree, spec, acc, policies, env_config,
                          jobs=args.jobs, trace_sink=trace_sink)
    except PolicyLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if trace_fh:
            trace_fh.close()

    (out / "report.json").write_text(report.to_json() + "\n")
    inputs = {"tree": tree_dir / "tree.json", "acc": tree_dir / "acc.json",
              "spec": tree_dir / "spec.json"}
    if args.env_config:
        inputs["env_config"] = Path(args.env_config)
    _write_manifest(out, "eval", inputs, {
        "scenario": args.scenario, "episodes": args.episodes,
        "seed": args.seed, "preset_label": args.preset_label,
        "policies": sorted(args.policy), "jobs": args.jobs,
    })
    print(f"scenario {args.scenario} [{args.preset_label}]: "
          f"{report.pct_episodes_with_acc_violation:.1f}% episodes with violations, "
          f"completion mean {report.completion_steps_mean:.1f} "
          f"({report.completed}/{report.episodes} completed)")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [EvalReport.from_json(Path(p).read_text()) for p in args.inputs]
    if args.format == "csv":
        text = render_csv(reports)
    else:
        text = render_markdown(reports)
    if len(reports) >= 2 and len({r.scenario for r in reports}) == 1:
        summary = compare(reports)
        text += "\nranking by violations: " + \
            " < ".join(name for name, _ in summary.by_violation_pct) + "\n"
        if summary.completion_spread_small:
            text += "completion differences small (within 10%)\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainbt",
                                description="Backward-chained behavior trees "
                                            "with constraint-aware RL")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile an action spec into a tree")
    c.add_argument("spec")
    c.add_argument("--out", default="out/compile")
    c.add_argument("--dot", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--highlight", default=None,
                   help="action whose constraints to mark in the DOT output")
    c.set_defaults(fn=cmd_compile)

    t = sub.add_parser("train", help="train a Q-table for a learned action")
    t.add_argument("--tree-dir", required=True)
    t.add_argument("--action", required=True)
    t.add_argument("--preset", default=None)
    t.add_argument("--m-p", type=float, default=1000.0)
    t.add_argument("--m-t", type=float, default=-0.1)
    t.add_argument("--m-acc", type=float, default=0.0)
    t.add_argument("--end-episode", action="store_true")
    t.add_argument("--steps", type=int, default=200000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--scenario", type=int, default=None, choices=(1, 2))
    t.add_argument("--env-config", default=None)
    t.add_argument("--out", default="out/train")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate the full tree over seeded missions")
    e.add_argument("--tree-dir", required=True)
    e.add_argument("--scenario", type=int, required=True, choices=(1, 2))
    e.add_argument("--episodes", type=int, default=1000)
    e.add_argument("--step-cap", type=int, default=2000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--preset-label", default="scripted")
    e.add_argument("--policy", action="append", default=[],
                   metavar="ACTION=QTABLE_JSON|scripted")
    e.add_argument("--env-config", default=None)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--trace-dump", action="store_true")
    e.add_argument("--out", default="out/eval")
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("report", help="render evaluation reports as a table")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--format", choices=("md", "csv"), default="md")
    r.add_argument("--out", default=None)
    r.set_defaults(fn=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
